#include "delayformer/model.hpp"

#include <cmath>
#include <random>

#include "delayformer/errors.hpp"

namespace delayformer {

void ModelConfig::validate() const {
    if (n_channels == 0 || w_in == 0 || horizon == 0 || embedding_dim == 0 || p1 == 0 ||
        p2 == 0 || d_model == 0 || n_blocks == 0 || n_heads == 0 || d_ff == 0)
        throw ContractError("model config: all extents must be positive");
    if (embedding_dim > w_in)
        throw ContractError("model config: L=" + std::to_string(embedding_dim) + " exceeds W_in=" +
                            std::to_string(w_in));
    const std::size_t m = hankel_cols();
    if (m % p1 != 0)
        throw ContractError("model config: p1=" + std::to_string(p1) + " does not divide m=" +
                            std::to_string(m));
    if (embedding_dim % p2 != 0)
        throw ContractError("model config: p2=" + std::to_string(p2) + " does not divide L=" +
                            std::to_string(embedding_dim));
    if (d_model % n_heads != 0)
        throw ContractError("model config: D=" + std::to_string(d_model) +
                            " not divisible by n_heads=" + std::to_string(n_heads));
    if (d_model % 2 != 0)
        throw ContractError("model config: D must be even for the positional encoding");
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("patch_w", patch_w);
    fn("patch_b", patch_b);
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        const std::string pre = "block" + std::to_string(j) + ".";
        BlockParams& b = blocks[j];
        fn(pre + "wq", b.wq);
        fn(pre + "bq", b.bq);
        fn(pre + "wk", b.wk);
        fn(pre + "bk", b.bk);
        fn(pre + "wv", b.wv);
        fn(pre + "bv", b.bv);
        fn(pre + "wo", b.wo);
        fn(pre + "bo", b.bo);
        fn(pre + "ff1_w", b.ff1_w);
        fn(pre + "ff1_b", b.ff1_b);
        fn(pre + "ff2_w", b.ff2_w);
        fn(pre + "ff2_b", b.ff2_b);
        fn(pre + "ln1_g", b.ln1_g);
        fn(pre + "ln1_b", b.ln1_b);
        fn(pre + "ln2_g", b.ln2_g);
        fn(pre + "ln2_b", b.ln2_b);
    }
    for (std::size_t k = 0; k < heads.size(); ++k) {
        const std::string pre = "head" + std::to_string(k) + ".";
        fn(pre + "w", heads[k].w);
        fn(pre + "b", heads[k].b);
    }
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

Tensor sinusoidal_pe(std::size_t n_positions, std::size_t d_model) {
    if (d_model % 2 != 0)
        throw ContractError("sinusoidal_pe: D=" + std::to_string(d_model) + " must be even");
    Tensor pe({n_positions, d_model});
    for (std::size_t pos = 0; pos < n_positions; ++pos)
        for (std::size_t i = 0; i < d_model / 2; ++i) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_model));
            pe(pos, 2 * i) = std::sin(angle);
            pe(pos, 2 * i + 1) = std::cos(angle);
        }
    return pe;
}

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform({fan_in, fan_out}, -bound, bound, rng);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = cfg.d_model;
    const std::size_t patch = cfg.p1 * cfg.p2;
    const std::size_t p = cfg.n_tokens();

    ModelParams params;
    params.patch_w = xavier(patch, d, rng);
    params.patch_b = Tensor({d});
    params.pe = sinusoidal_pe(p, d);
    params.blocks.resize(cfg.n_blocks);
    for (BlockParams& b : params.blocks) {
        b.wq = xavier(d, d, rng);
        b.wk = xavier(d, d, rng);
        b.wv = xavier(d, d, rng);
        b.wo = xavier(d, d, rng);
        b.bq = Tensor({d});
        b.bk = Tensor({d});
        b.bv = Tensor({d});
        b.bo = Tensor({d});
        b.ff1_w = xavier(d, cfg.d_ff, rng);
        b.ff1_b = Tensor({cfg.d_ff});
        b.ff2_w = xavier(cfg.d_ff, d, rng);
        b.ff2_b = Tensor({d});
        b.ln1_g = Tensor::full({d}, 1.0);
        b.ln1_b = Tensor({d});
        b.ln2_g = Tensor::full({d}, 1.0);
        b.ln2_b = Tensor({d});
    }
    params.heads.resize(cfg.n_channels);
    for (HeadParams& h : params.heads) {
        h.w = xavier(p * d, cfg.horizon, rng);
        h.b = Tensor({cfg.horizon});
    }
    return params;
}

// ---- differentiable graph -----------------------------------------------------

ParamVars bind_params(Tape& tape, const ModelParams& params, bool trainable) {
    ParamVars pv;
    std::vector<Var> ordered;
    // for_each gives the canonical order; stash ids and wire up the struct after.
    const_cast<ModelParams&>(params).for_each([&](const std::string&, Tensor& t) {
        ordered.push_back(tape.leaf(t, trainable));
    });
    pv.ordered = ordered;
    std::size_t i = 0;
    pv.patch_w = ordered[i++];
    pv.patch_b = ordered[i++];
    pv.blocks.resize(params.blocks.size());
    for (BlockVars& b : pv.blocks) {
        b.wq = ordered[i++];
        b.bq = ordered[i++];
        b.wk = ordered[i++];
        b.bk = ordered[i++];
        b.wv = ordered[i++];
        b.bv = ordered[i++];
        b.wo = ordered[i++];
        b.bo = ordered[i++];
        b.ff1_w = ordered[i++];
        b.ff1_b = ordered[i++];
        b.ff2_w = ordered[i++];
        b.ff2_b = ordered[i++];
        b.ln1_g = ordered[i++];
        b.ln1_b = ordered[i++];
        b.ln2_g = ordered[i++];
        b.ln2_b = ordered[i++];
    }
    pv.heads.resize(params.heads.size());
    for (auto& h : pv.heads) {
        h.first = ordered[i++];
        h.second = ordered[i++];
    }
    pv.pe = params.pe;
    return pv;
}

Tensor make_tokens(const Tensor& batch, const ModelConfig& cfg) {
    if (batch.rank() != 3 || batch.rows() != cfg.n_channels || batch.cols() != cfg.w_in)
        throw DimensionError("make_tokens: expected B x " + std::to_string(cfg.n_channels) +
                             " x " + std::to_string(cfg.w_in) + ", got " + batch.shape_str());
    const std::size_t b_count = batch.shape()[0];
    const std::size_t p = cfg.n_tokens();
    const std::size_t width = cfg.p1 * cfg.p2;
    Tensor out({cfg.n_channels * b_count * p, width});
    for (std::size_t k = 0; k < cfg.n_channels; ++k)
        for (std::size_t b = 0; b < b_count; ++b) {
            const double* seg = batch.data() + (b * cfg.n_channels + k) * cfg.w_in;
            HankelMatrix h = hankelize({seg, cfg.w_in}, cfg.embedding_dim, k);
            PatchSequence ps = patchify(h, cfg.p1, cfg.p2);
            double* dst = out.data() + (k * b_count + b) * p * width;
            for (std::size_t i = 0; i < p * width; ++i) dst[i] = ps.tokens[i];
        }
    return out;
}

Tensor make_targets(const Tensor& targets, const ModelConfig& cfg) {
    if (targets.rank() != 3 || targets.rows() != cfg.n_channels || targets.cols() != cfg.horizon)
        throw DimensionError("make_targets: expected B x " + std::to_string(cfg.n_channels) +
                             " x " + std::to_string(cfg.horizon) + ", got " +
                             targets.shape_str());
    const std::size_t b_count = targets.shape()[0];
    Tensor out({cfg.n_channels * b_count, cfg.horizon});
    for (std::size_t k = 0; k < cfg.n_channels; ++k)
        for (std::size_t b = 0; b < b_count; ++b)
            for (std::size_t t = 0; t < cfg.horizon; ++t)
                out(k * b_count + b, t) = targets(b, k, t);
    return out;
}

Var encode_block(Var hidden, const ModelConfig& cfg, const BlockVars& bv,
                 std::size_t n_seq) {
    const std::size_t p = hidden.value().rows() / n_seq;
    const std::size_t dh = cfg.d_model / cfg.n_heads;
    Var q = add_rowvec(matmul(hidden, bv.wq), bv.bq);
    Var k = add_rowvec(matmul(hidden, bv.wk), bv.bk);
    Var v = add_rowvec(matmul(hidden, bv.wv), bv.bv);
    Var qh = split_heads(q, n_seq, p, cfg.n_heads);
    Var kh = split_heads(k, n_seq, p, cfg.n_heads);
    Var vh = split_heads(v, n_seq, p, cfg.n_heads);
    Var att = softmax_lastdim(bmm(qh, kh, /*transpose_b=*/true,
                                  1.0 / std::sqrt(static_cast<double>(dh))));
    Var ctx = merge_heads(bmm(att, vh), n_seq, p, cfg.n_heads);
    Var msa = add_rowvec(matmul(ctx, bv.wo), bv.bo);
    Var h1 = layer_norm(add(hidden, msa), bv.ln1_g, bv.ln1_b, kLayerNormEps);
    Var ff = add_rowvec(
        matmul(gelu(add_rowvec(matmul(h1, bv.ff1_w), bv.ff1_b)), bv.ff2_w), bv.ff2_b);
    return layer_norm(add(h1, ff), bv.ln2_g, bv.ln2_b, kLayerNormEps);
}

Var encode_tokens(Tape& tape, Var tokens, const ModelConfig& cfg, const ParamVars& pv,
                  std::size_t n_seq) {
    const std::size_t p = cfg.n_tokens();
    if (tokens.value().rows() != n_seq * p)
        throw DimensionError("encode_tokens: " + std::to_string(tokens.value().rows()) +
                             " rows for " + std::to_string(n_seq) + " sequences of " +
                             std::to_string(p) + " tokens");
    Tensor pe_tile({n_seq * p, cfg.d_model});
    for (std::size_t s = 0; s < n_seq; ++s)
        for (std::size_t i = 0; i < p * cfg.d_model; ++i)
            pe_tile[s * p * cfg.d_model + i] = pv.pe[i];
    Var h = add(add_rowvec(matmul(tokens, pv.patch_w), pv.patch_b), tape.leaf(std::move(pe_tile)));
    for (const BlockVars& bv : pv.blocks) h = encode_block(h, cfg, bv, n_seq);
    return h;
}

Var decode_all(Var z, const ModelConfig& cfg, const ParamVars& pv,
               std::size_t batch) {
    const std::size_t p = cfg.n_tokens();
    std::vector<Var> preds;
    preds.reserve(cfg.n_channels);
    for (std::size_t k = 0; k < cfg.n_channels; ++k) {
        Var zk = row_block(z, k * batch * p, batch * p);
        Var flat = reshape(zk, {batch, p * cfg.d_model});
        preds.push_back(add_rowvec(matmul(flat, pv.heads[k].first), pv.heads[k].second));
    }
    return concat_rows(preds);
}

Var batch_loss(Tape& tape, const Tensor& inputs, const Tensor& targets, const ModelConfig& cfg,
               const ParamVars& pv) {
    const std::size_t b_count = inputs.shape()[0];
    Var tokens = tape.leaf(make_tokens(inputs, cfg));
    Var z = encode_tokens(tape, tokens, cfg, pv, cfg.n_channels * b_count);
    Var pred = decode_all(z, cfg, pv, b_count);
    return mse_loss(pred, make_targets(targets, cfg));
}

// ---- single-channel reference path -------------------------------------------

Tensor embed_tokens(const PatchSequence& patches, const ModelParams& params) {
    if (patches.tokens.cols() != params.patch_w.rows())
        throw DimensionError("embed_tokens: patch width " +
                             std::to_string(patches.tokens.cols()) + " vs projection " +
                             params.patch_w.shape_str());
    if (patches.count() != params.pe.rows())
        throw DimensionError("embed_tokens: " + std::to_string(patches.count()) +
                             " tokens vs PE table " + params.pe.shape_str());
    Tensor h = add_rowvec(matmul(patches.tokens, params.patch_w), params.patch_b);
    return add(h, params.pe);
}

Tensor encoder_block(const Tensor& hidden, const BlockParams& block, std::size_t n_heads) {
    ModelConfig tiny;  // only the fields encode_block reads
    tiny.d_model = hidden.cols();
    tiny.n_heads = n_heads;
    Tape tape;
    BlockVars bv;
    Var* slots[] = {&bv.wq,    &bv.bq,    &bv.wk,    &bv.bk,    &bv.wv,    &bv.bv,
                    &bv.wo,    &bv.bo,    &bv.ff1_w, &bv.ff1_b, &bv.ff2_w, &bv.ff2_b,
                    &bv.ln1_g, &bv.ln1_b, &bv.ln2_g, &bv.ln2_b};
    const Tensor* tensors[] = {&block.wq,    &block.bq,    &block.wk,    &block.bk,
                               &block.wv,    &block.bv,    &block.wo,    &block.bo,
                               &block.ff1_w, &block.ff1_b, &block.ff2_w, &block.ff2_b,
                               &block.ln1_g, &block.ln1_b, &block.ln2_g, &block.ln2_b};
    for (std::size_t i = 0; i < 16; ++i) *slots[i] = tape.leaf(*tensors[i]);
    Var h = tape.leaf(hidden);
    return encode_block(h, tiny, bv, 1).value();
}

Tensor encode_channel(const PatchSequence& patches, const ModelConfig& cfg,
                      const ModelParams& params) {
    Tape tape;
    ParamVars pv = bind_params(tape, params, /*trainable=*/false);
    Var tokens = tape.leaf(patches.tokens);
    return encode_tokens(tape, tokens, cfg, pv, 1).value();
}

Tensor decode_channel(const Tensor& z, std::size_t k, const ModelParams& params) {
    if (k >= params.heads.size())
        throw ContractError("decode_channel: head " + std::to_string(k) + " of " +
                            std::to_string(params.heads.size()));
    const HeadParams& head = params.heads[k];
    if (z.size() != head.w.rows())
        throw DimensionError("decode_channel: encoding size " + std::to_string(z.size()) +
                             " vs head " + head.w.shape_str());
    Tensor flat = z.reshaped({1, z.size()});
    return add_rowvec(matmul(flat, head.w), head.b).reshaped({head.b.size()});
}

Tensor forward(const Tensor& batch, const ModelConfig& cfg, const ModelParams& params) {
    if (batch.rank() != 3) throw DimensionError("forward: expected B x N x W_in batch");
    const std::size_t b_count = batch.shape()[0];
    Tape tape;
    ParamVars pv = bind_params(tape, params, /*trainable=*/false);
    Var tokens = tape.leaf(make_tokens(batch, cfg));
    Var z = encode_tokens(tape, tokens, cfg, pv, cfg.n_channels * b_count);
    const Tensor pred = decode_all(z, cfg, pv, b_count).value();  // (N*B) x H
    Tensor out({b_count, cfg.n_channels, cfg.horizon});
    for (std::size_t k = 0; k < cfg.n_channels; ++k)
        for (std::size_t b = 0; b < b_count; ++b)
            for (std::size_t t = 0; t < cfg.horizon; ++t)
                out(b, k, t) = pred(k * b_count + b, t);
    return out;
}

}  // namespace delayformer
