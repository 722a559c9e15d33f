#include "delayformer/autodiff.hpp"

#include <cblas.h>

#include <cmath>

#include "delayformer/errors.hpp"

namespace delayformer {

namespace {

Tape& same_tape(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw ContractError("operands must live on the same tape");
    return *a.tape;
}

// C += alpha * op(A) * op(B), all row-major 2-D blocks.
void gemm_acc(double* c, std::size_t cr, std::size_t cc, const double* a, std::size_t ar,
              std::size_t ac, bool ta, const double* b, std::size_t br, std::size_t bc, bool tb,
              double alpha) {
    const std::size_t m = ta ? ac : ar;
    const std::size_t k = ta ? ar : ac;
    const std::size_t n = tb ? br : bc;
    (void)cr;
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(ac), b, static_cast<int>(bc), 1.0, c, static_cast<int>(cc));
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value, bool trainable) {
    Node n;
    n.value = std::move(value);
    n.trainable = trainable;
    n.needs_grad = trainable;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(Tensor value, std::vector<int> parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    bool ng = false;
    for (int p : n.parents) ng = ng || nodes_[static_cast<std::size_t>(p)].needs_grad;
    n.needs_grad = ng;
    if (ng) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

bool Tape::needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

const Tensor& Tape::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Tensor* Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return &n.grad;
}

void Tape::accumulate(int id, const Tensor& delta) {
    Tensor* g = grad_buffer(id);
    if (g == nullptr) return;
    require_same_shape(*g, delta, "grad accumulate");
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += delta[i];
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss from a different tape");
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.size() != 1) throw ContractError("backward: loss must be a scalar node");
    if (!ln.needs_grad) return;  // nothing trainable reachable
    ln.grad = Tensor::full(ln.value.shape(), 1.0);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) continue;  // not reached from the loss
        if (n.backward) n.backward(*this, id);
        if (!n.is_leaf) {  // intermediate buffers are dead past this point
            n.value = Tensor();
            n.grad = Tensor();
        }
    }
}

// ---- ops ---------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Tensor v = matmul(a.value(), b.value());
    const std::size_t ar = a.value().rows(), ac = a.value().cols(), bc = b.value().cols();
    return t.make_node(std::move(v), {a.id, b.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        if (Tensor* ga = tp.grad_buffer(a.id))
            gemm_acc(ga->data(), ar, ac, g.data(), ar, bc, false, tp.value(b.id).data(), ac, bc,
                     true, 1.0);
        if (Tensor* gb = tp.grad_buffer(b.id))
            gemm_acc(gb->data(), ac, bc, tp.value(a.id).data(), ar, ac, true, g.data(), ar, bc,
                     false, 1.0);
    });
}

Var bmm(Var a, Var b, bool transpose_b, double alpha) {
    Tape& t = same_tape(a, b);
    Tensor v = bmm(a.value(), b.value(), transpose_b, alpha);
    const std::size_t nb = a.value().shape()[0];
    const std::size_t m = a.value().rows(), k = a.value().cols();
    const std::size_t br = b.value().rows(), bc = b.value().cols();
    const std::size_t n = transpose_b ? br : bc;
    return t.make_node(std::move(v), {a.id, b.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor* ga = tp.grad_buffer(a.id);
        Tensor* gb = tp.grad_buffer(b.id);
        const double* av = tp.value(a.id).data();
        const double* bv = tp.value(b.id).data();
        for (std::size_t i = 0; i < nb; ++i) {
            const double* gi = g.data() + i * m * n;
            const double* ai = av + i * m * k;
            const double* bi = bv + i * br * bc;
            if (ga) {
                double* gai = ga->data() + i * m * k;
                // dA = alpha * g * op(B)^T
                gemm_acc(gai, m, k, gi, m, n, false, bi, br, bc, !transpose_b, alpha);
            }
            if (gb) {
                double* gbi = gb->data() + i * br * bc;
                if (transpose_b)  // C = alpha A B^T  ->  dB = alpha g^T A
                    gemm_acc(gbi, br, bc, gi, m, n, true, ai, m, k, false, alpha);
                else  // C = alpha A B  ->  dB = alpha A^T g
                    gemm_acc(gbi, br, bc, ai, m, k, true, gi, m, n, false, alpha);
            }
        }
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    return t.make_node(add(a.value(), b.value()), {a.id, b.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    return t.make_node(sub(a.value(), b.value()), {a.id, b.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, scale(g, -1.0));
    });
}

Var hadamard(Var a, Var b) {
    Tape& t = same_tape(a, b);
    return t.make_node(hadamard(a.value(), b.value()), {a.id, b.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        if (tp.needs_grad(a.id)) tp.accumulate(a.id, hadamard(g, tp.value(b.id)));
        if (tp.needs_grad(b.id)) tp.accumulate(b.id, hadamard(g, tp.value(a.id)));
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    return t.make_node(scale(a.value(), s), {a.id}, [=](Tape& tp, int self) {
        tp.accumulate(a.id, scale(tp.grad(self), s));
    });
}

Var add_rowvec(Var m, Var v) {
    Tape& t = same_tape(m, v);
    return t.make_node(add_rowvec(m.value(), v.value()), {m.id, v.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        tp.accumulate(m.id, g);
        if (tp.needs_grad(v.id)) tp.accumulate(v.id, colsum(g));
    });
}

Var gelu(Var x) {
    Tape& t = *x.tape;
    return t.make_node(gelu(x.value()), {x.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& in = tp.value(x.id);
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gelu_derivative_scalar(in[i]);
        tp.accumulate(x.id, d);
    });
}

Var softmax_lastdim(Var x) {
    Tape& t = *x.tape;
    return t.make_node(softmax_lastdim(x.value()), {x.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        Tensor d = g;
        const std::size_t w = y.cols(), n = y.size() / w;
        for (std::size_t r = 0; r < n; ++r) {
            const double* yr = y.data() + r * w;
            double* dr = d.data() + r * w;
            double dot = 0.0;
            for (std::size_t j = 0; j < w; ++j) dot += dr[j] * yr[j];
            for (std::size_t j = 0; j < w; ++j) dr[j] = yr[j] * (dr[j] - dot);
        }
        tp.accumulate(x.id, d);
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Tape& t = same_tape(x, gain);
    same_tape(gain, bias);
    Tensor v = layer_norm(x.value(), gain.value(), bias.value(), eps);
    return t.make_node(std::move(v), {x.id, gain.id, bias.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& in = tp.value(x.id);
        const Tensor& gn = tp.value(gain.id);
        const std::size_t w = in.cols(), n = in.size() / w;
        Tensor dx(in.shape());
        Tensor dgain({w});
        Tensor dbias({w});
        std::vector<double> xhat(w);
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = in.data() + r * w;
            const double* gr = g.data() + r * w;
            double mean = 0.0;
            for (std::size_t j = 0; j < w; ++j) mean += xr[j];
            mean /= static_cast<double>(w);
            double var = 0.0;
            for (std::size_t j = 0; j < w; ++j) {
                const double d = xr[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(w);
            const double inv = 1.0 / std::sqrt(var + eps);
            double mg = 0.0, mgx = 0.0;
            for (std::size_t j = 0; j < w; ++j) {
                xhat[j] = (xr[j] - mean) * inv;
                const double gh = gr[j] * gn[j];
                mg += gh;
                mgx += gh * xhat[j];
            }
            mg /= static_cast<double>(w);
            mgx /= static_cast<double>(w);
            double* dxr = dx.data() + r * w;
            for (std::size_t j = 0; j < w; ++j) {
                const double gh = gr[j] * gn[j];
                dxr[j] = inv * (gh - mg - xhat[j] * mgx);
                dgain[j] += gr[j] * xhat[j];
                dbias[j] += gr[j];
            }
        }
        tp.accumulate(x.id, dx);
        if (tp.needs_grad(gain.id)) tp.accumulate(gain.id, dgain);
        if (tp.needs_grad(bias.id)) tp.accumulate(bias.id, dbias);
    });
}

Var reshape(Var x, std::vector<std::size_t> shape) {
    Tape& t = *x.tape;
    const std::vector<std::size_t> back = x.value().shape();
    return t.make_node(x.value().reshaped(std::move(shape)), {x.id}, [=](Tape& tp, int self) {
        tp.accumulate(x.id, tp.grad(self).reshaped(back));
    });
}

Var sum(Var x) {
    Tape& t = *x.tape;
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return t.make_node(Tensor::from({1}, {s}), {x.id}, [=](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        if (Tensor* gx = tp.grad_buffer(x.id))
            for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g;
    });
}

Var split_heads(Var x, std::size_t n_seq, std::size_t seq_len, std::size_t n_heads) {
    Tape& t = *x.tape;
    const Tensor& in = x.value();
    const std::size_t d = in.cols();
    if (in.rank() != 2 || in.rows() != n_seq * seq_len)
        throw DimensionError("split_heads: expected (" + std::to_string(n_seq * seq_len) +
                             " x D), got " + in.shape_str());
    if (d % n_heads != 0)
        throw ContractError("split_heads: token width " + std::to_string(d) +
                            " not divisible by " + std::to_string(n_heads) + " heads");
    const std::size_t dh = d / n_heads;
    Tensor out({n_seq * n_heads, seq_len, dh});
    for (std::size_t s = 0; s < n_seq; ++s)
        for (std::size_t h = 0; h < n_heads; ++h)
            for (std::size_t i = 0; i < seq_len; ++i) {
                const double* src = in.data() + (s * seq_len + i) * d + h * dh;
                double* dst = out.data() + ((s * n_heads + h) * seq_len + i) * dh;
                for (std::size_t j = 0; j < dh; ++j) dst[j] = src[j];
            }
    return t.make_node(std::move(out), {x.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor* gx = tp.grad_buffer(x.id);
        if (gx == nullptr) return;
        for (std::size_t s = 0; s < n_seq; ++s)
            for (std::size_t h = 0; h < n_heads; ++h)
                for (std::size_t i = 0; i < seq_len; ++i) {
                    const double* src = g.data() + ((s * n_heads + h) * seq_len + i) * dh;
                    double* dst = gx->data() + (s * seq_len + i) * d + h * dh;
                    for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
                }
    });
}

Var merge_heads(Var x, std::size_t n_seq, std::size_t seq_len, std::size_t n_heads) {
    Tape& t = *x.tape;
    const Tensor& in = x.value();
    if (in.rank() != 3 || in.shape()[0] != n_seq * n_heads || in.rows() != seq_len)
        throw DimensionError("merge_heads: unexpected input shape " + in.shape_str());
    const std::size_t dh = in.cols();
    const std::size_t d = dh * n_heads;
    Tensor out({n_seq * seq_len, d});
    for (std::size_t s = 0; s < n_seq; ++s)
        for (std::size_t h = 0; h < n_heads; ++h)
            for (std::size_t i = 0; i < seq_len; ++i) {
                const double* src = in.data() + ((s * n_heads + h) * seq_len + i) * dh;
                double* dst = out.data() + (s * seq_len + i) * d + h * dh;
                for (std::size_t j = 0; j < dh; ++j) dst[j] = src[j];
            }
    return t.make_node(std::move(out), {x.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor* gx = tp.grad_buffer(x.id);
        if (gx == nullptr) return;
        for (std::size_t s = 0; s < n_seq; ++s)
            for (std::size_t h = 0; h < n_heads; ++h)
                for (std::size_t i = 0; i < seq_len; ++i) {
                    const double* src = g.data() + (s * seq_len + i) * d + h * dh;
                    double* dst = gx->data() + ((s * n_heads + h) * seq_len + i) * dh;
                    for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
                }
    });
}

Var row_block(Var x, std::size_t row0, std::size_t n_rows) {
    Tape& t = *x.tape;
    const Tensor& in = x.value();
    if (in.rank() != 2 || row0 + n_rows > in.rows())
        throw DimensionError("row_block: rows [" + std::to_string(row0) + ", " +
                             std::to_string(row0 + n_rows) + ") out of " + in.shape_str());
    const std::size_t w = in.cols();
    Tensor out({n_rows, w});
    for (std::size_t i = 0; i < n_rows * w; ++i) out[i] = in[row0 * w + i];
    return t.make_node(std::move(out), {x.id}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor* gx = tp.grad_buffer(x.id);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < n_rows * w; ++i) (*gx)[row0 * w + i] += g[i];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    Tape& t = *parts.front().tape;
    const std::size_t w = parts.front().value().cols();
    std::size_t total = 0;
    std::vector<int> ids;
    std::vector<std::size_t> row_counts;
    for (const Var& p : parts) {
        if (p.tape != &t) throw ContractError("concat_rows: parts on different tapes");
        if (p.value().rank() != 2 || p.value().cols() != w)
            throw DimensionError("concat_rows: column mismatch at " + p.value().shape_str());
        ids.push_back(p.id);
        row_counts.push_back(p.value().rows());
        total += p.value().rows();
    }
    Tensor out({total, w});
    std::size_t r = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t i = 0; i < v.size(); ++i) out[r * w + i] = v[i];
        r += v.rows();
    }
    return t.make_node(std::move(out), ids, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        std::size_t row = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (Tensor* gp = tp.grad_buffer(ids[k])) {
                for (std::size_t i = 0; i < row_counts[k] * w; ++i) (*gp)[i] += g[row * w + i];
            }
            row += row_counts[k];
        }
    });
}

Var mse_loss(Var pred, const Tensor& target) {
    Tape& t = *pred.tape;
    require_same_shape(pred.value(), target, "mse_loss");
    const std::size_t n = target.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.value()[i] - target[i];
        acc += d * d;
    }
    acc /= static_cast<double>(n);
    return t.make_node(Tensor::from({1}, {acc}), {pred.id}, [=](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        Tensor* gp = tp.grad_buffer(pred.id);
        if (gp == nullptr) return;
        const Tensor& p = tp.value(pred.id);
        const double c = 2.0 * g / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += c * (p[i] - target[i]);
    });
}

}  // namespace delayformer
