#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "delayformer/autodiff.hpp"
#include "delayformer/delay.hpp"
#include "delayformer/tensor.hpp"

namespace delayformer {

/// Hyperparameters of the network. W_in is delay-embedded per channel into an
/// L x m Hankel matrix (m = W_in - L + 1), cut into p1 x p2 patches giving
/// p = L*m/(p1*p2) tokens of width D.
struct ModelConfig {
    std::size_t n_channels = 0;   // N
    std::size_t w_in = 0;
    std::size_t horizon = 0;      // H
    std::size_t embedding_dim = 0;  // L
    std::size_t p1 = 0;
    std::size_t p2 = 0;
    std::size_t d_model = 0;      // D, even and divisible by n_heads
    std::size_t n_blocks = 0;
    std::size_t n_heads = 0;
    std::size_t d_ff = 0;
    std::uint64_t seed = 0;

    std::size_t hankel_cols() const { return w_in - embedding_dim + 1; }  // m
    std::size_t n_tokens() const {
        return embedding_dim * hankel_cols() / (p1 * p2);
    }
    void validate() const;  // throws ContractError
};

struct BlockParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct HeadParams {
    Tensor w;  // (p*D) x H
    Tensor b;  // H
};

/// All network parameters: one shared encoder, N decoder heads, plus the
/// fixed (non-trained) positional encoding table.
struct ModelParams {
    Tensor patch_w;  // (p1*p2) x D
    Tensor patch_b;  // D
    Tensor pe;       // p x D, fixed
    std::vector<BlockParams> blocks;
    std::vector<HeadParams> heads;

    /// Visits every trainable tensor in a fixed order with a stable name
    /// ("patch_w", "block0.wq", ..., "head3.b"). The order defines the
    /// optimizer-state and checkpoint-manifest layout.
    void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    std::size_t parameter_count() const;
};

inline constexpr double kLayerNormEps = 1e-5;

/// Fixed sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/D)),
/// PE[pos, 2i+1] = cos(pos / 10000^(2i/D)). Throws ContractError on odd D.
Tensor sinusoidal_pe(std::size_t n_positions, std::size_t d_model);

/// Xavier-uniform weights, zero biases, unit layer-norm gains; fully
/// deterministic in the seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
inline ModelParams init_params(const ModelConfig& cfg) { return init_params(cfg, cfg.seed); }

// ---- single-channel reference path -------------------------------------------

/// Affine patch projection to D plus positional encoding: H^0 = tokens W + b + PE.
Tensor embed_tokens(const PatchSequence& patches, const ModelParams& params);

/// One post-norm encoder block: h' = LN(h + MSA(h)); out = LN(h' + FF(h')).
Tensor encoder_block(const Tensor& hidden, const BlockParams& block, std::size_t n_heads);

/// embed_tokens followed by every encoder block; the network's shared part.
Tensor encode_channel(const PatchSequence& patches, const ModelConfig& cfg,
                      const ModelParams& params);

/// Applies decoder head k to the flattened p x D encoding; returns H values.
Tensor decode_channel(const Tensor& z, std::size_t k, const ModelParams& params);

/// Batched forward: B x N x W_in (normalized) -> B x N x H. Each channel is
/// hankelized, patched, encoded by the shared encoder and decoded by its own
/// head; channels never mix.
Tensor forward(const Tensor& batch, const ModelConfig& cfg, const ModelParams& params);

// ---- differentiable graph (used by the trainer and gradient checks) -----------

struct BlockVars {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
    Var ff1_w, ff1_b, ff2_w, ff2_b;
    Var ln1_g, ln1_b, ln2_g, ln2_b;
};

struct ParamVars {
    Var patch_w, patch_b;
    std::vector<BlockVars> blocks;
    std::vector<std::pair<Var, Var>> heads;
    Tensor pe;  // fixed table, kept off the tape
    /// Same order as ModelParams::for_each; pairs with it for optimizer updates.
    std::vector<Var> ordered;
};

/// Copies every trainable tensor onto the tape as leaves.
ParamVars bind_params(Tape& tape, const ModelParams& params, bool trainable);

/// Host-side batch tokenization. Sequences are laid out channel-major:
/// sequence s = k*B + b holds channel k of sample b, so each decoder head
/// reads one contiguous row block. Returns (N*B*p) x (p1*p2).
Tensor make_tokens(const Tensor& batch, const ModelConfig& cfg);

/// Targets rearranged to match decode_all's row order: (N*B) x H with
/// row k*B + b = channel k of sample b.
Tensor make_targets(const Tensor& targets, const ModelConfig& cfg);

/// Shared encoder over n_seq sequences of cfg.n_tokens() tokens each:
/// patch projection + PE, then the block stack. tokens is (n_seq*p) x (p1*p2).
Var encode_tokens(Tape& tape, Var tokens, const ModelConfig& cfg, const ParamVars& pv,
                  std::size_t n_seq);

/// One encoder block over n_seq packed sequences.
Var encode_block(Var hidden, const ModelConfig& cfg, const BlockVars& bv, std::size_t n_seq);

/// All N decoder heads over a channel-major encoding of N*batch sequences;
/// returns (N*batch) x H with rows in the make_targets order.
Var decode_all(Var z, const ModelConfig& cfg, const ParamVars& pv, std::size_t batch);

/// Differentiable end-to-end loss for one batch: mean squared error over all
/// channels, samples and horizon steps (the channel-independent loss).
Var batch_loss(Tape& tape, const Tensor& inputs, const Tensor& targets, const ModelConfig& cfg,
               const ParamVars& pv);

}  // namespace delayformer
