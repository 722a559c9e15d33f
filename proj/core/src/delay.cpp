#include "delayformer/delay.hpp"

#include <cmath>
#include <string>

namespace delayformer {

void MultivariateSeries::validate() const {
    if (values.empty() || values.rank() != 2)
        throw ContractError("series: values must be a nonempty channels x time matrix");
    if (channel_names.size() != values.rows())
        throw ContractError("series: " + std::to_string(channel_names.size()) + " names for " +
                            std::to_string(values.rows()) + " channels");
    for (std::size_t i = 0; i < channel_names.size(); ++i)
        for (std::size_t j = i + 1; j < channel_names.size(); ++j)
            if (channel_names[i] == channel_names[j])
                throw ContractError("series: duplicate channel name '" + channel_names[i] + "'");
    if (!values.all_finite()) throw ContractError("series: non-finite value present");
    if (!(dt > 0.0)) throw ContractError("series: dt must be positive");
}

HankelMatrix hankelize(std::span<const double> segment, std::size_t L,
                       std::size_t channel_index, std::size_t origin) {
    const std::size_t w = segment.size();
    if (L < 1 || L > w)
        throw ContractError("hankelize: L=" + std::to_string(L) +
                            " outside [1, " + std::to_string(w) + "]");
    const std::size_t m = w - L + 1;
    HankelMatrix h;
    h.channel_index = channel_index;
    h.origin = origin;
    h.matrix = Tensor({L, m});
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < m; ++j) h.matrix(i, j) = segment[i + j];
    return h;
}

PatchSequence patchify(const HankelMatrix& h, std::size_t p1, std::size_t p2) {
    const std::size_t L = h.embedding_dim();
    const std::size_t m = h.width();
    if (p1 == 0 || m % p1 != 0 || p2 == 0 || L % p2 != 0)
        throw ContractError("patchify: patch shape (" + std::to_string(p1) + ", " +
                            std::to_string(p2) + ") does not divide " + std::to_string(L) + "x" +
                            std::to_string(m) + " (need p1 | m and p2 | L)");
    PatchSequence seq;
    seq.p1 = p1;
    seq.p2 = p2;
    seq.grid_rows = L / p2;
    seq.grid_cols = m / p1;
    seq.tokens = Tensor({seq.grid_rows * seq.grid_cols, p1 * p2});
    std::size_t token = 0;
    for (std::size_t gr = 0; gr < seq.grid_rows; ++gr)
        for (std::size_t gc = 0; gc < seq.grid_cols; ++gc, ++token) {
            double* out = seq.tokens.data() + token * p1 * p2;
            for (std::size_t i = 0; i < p2; ++i)
                for (std::size_t j = 0; j < p1; ++j)
                    out[i * p1 + j] = h.matrix(gr * p2 + i, gc * p1 + j);
        }
    return seq;
}

Tensor unpatchify(const PatchSequence& p) {
    if (p.p1 == 0 || p.p2 == 0 || p.tokens.empty() || p.tokens.rank() != 2)
        throw ContractError("unpatchify: empty or malformed patch sequence");
    if (p.tokens.cols() != p.p1 * p.p2)
        throw ContractError("unpatchify: token width " + std::to_string(p.tokens.cols()) +
                            " != p1*p2 = " + std::to_string(p.p1 * p.p2));
    if (p.tokens.rows() != p.grid_rows * p.grid_cols)
        throw ContractError("unpatchify: " + std::to_string(p.tokens.rows()) +
                            " tokens for a " + std::to_string(p.grid_rows) + "x" +
                            std::to_string(p.grid_cols) + " grid");
    Tensor out({p.grid_rows * p.p2, p.grid_cols * p.p1});
    std::size_t token = 0;
    for (std::size_t gr = 0; gr < p.grid_rows; ++gr)
        for (std::size_t gc = 0; gc < p.grid_cols; ++gc, ++token) {
            const double* src = p.tokens.data() + token * p.p1 * p.p2;
            for (std::size_t i = 0; i < p.p2; ++i)
                for (std::size_t j = 0; j < p.p1; ++j)
                    out(gr * p.p2 + i, gc * p.p1 + j) = src[i * p.p1 + j];
        }
    return out;
}

std::vector<WindowPair> make_windows(const MultivariateSeries& series, std::size_t w_in,
                                     std::size_t horizon, std::size_t stride) {
    if (w_in == 0 || horizon == 0 || stride == 0)
        throw ContractError("make_windows: W_in, H and stride must all be positive");
    const std::size_t n = series.channels();
    const std::size_t total = series.steps();
    std::vector<WindowPair> out;
    if (total < w_in + horizon) return out;
    const std::size_t count = (total - w_in - horizon) / stride + 1;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * stride;
        WindowPair pair;
        pair.start = start;
        pair.input = Tensor({n, w_in});
        pair.target = Tensor({n, horizon});
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t t = 0; t < w_in; ++t) pair.input(k, t) = series.at(k, start + t);
            for (std::size_t t = 0; t < horizon; ++t)
                pair.target(k, t) = series.at(k, start + w_in + t);
        }
        out.push_back(std::move(pair));
    }
    return out;
}

}  // namespace delayformer
