#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "delayformer/series.hpp"
#include "delayformer/tensor.hpp"

namespace delayformer {

/// Delay-embedded view of one channel segment: L rows (lags) by
/// m = W_in - L + 1 columns (window positions), constant along
/// anti-diagonals.
struct HankelMatrix {
    std::size_t channel_index = 0;
    Tensor matrix;              // L x m
    std::size_t origin = 0;     // time index of entry (0,0)

    std::size_t embedding_dim() const { return matrix.rows(); }
    std::size_t width() const { return matrix.cols(); }
};

/// A Hankel matrix cut into p1 x p2 patches and flattened to tokens.
struct PatchSequence {
    Tensor tokens;                 // p x (p1*p2), one patch per row
    std::size_t grid_rows = 0;     // L / p2
    std::size_t grid_cols = 0;     // m / p1
    std::size_t p1 = 0;            // patch width (columns of the Hankel matrix)
    std::size_t p2 = 0;            // patch height (rows)

    std::size_t count() const { return tokens.empty() ? 0 : tokens.rows(); }
};

/// One supervised example: W_in input steps followed immediately by H
/// target steps, both across all N channels.
struct WindowPair {
    Tensor input;        // N x W_in
    Tensor target;       // N x H
    std::size_t start = 0;
};

/// Delay embedding of a single-channel segment: out(i,j) = segment[i+j],
/// shape L x (len-L+1). Throws ContractError unless 1 <= L <= len.
HankelMatrix hankelize(std::span<const double> segment, std::size_t L,
                       std::size_t channel_index = 0, std::size_t origin = 0);

/// Cuts h into p1 x p2 patches, enumerated row-major over the grid of
/// (row-block, column-block) cells, each flattened row-major. Throws
/// ContractError naming the pair when p1 does not divide m or p2 does
/// not divide L.
PatchSequence patchify(const HankelMatrix& h, std::size_t p1, std::size_t p2);

/// Exact inverse of patchify; returns the reassembled L x m matrix.
/// Throws ContractError when the grid metadata and token shape disagree.
Tensor unpatchify(const PatchSequence& p);

/// All (input, target) windows of the series at the given stride. Window i
/// covers [i*stride, i*stride + W_in + H); the list is empty when the series
/// is too short. Throws ContractError on zero W_in, H, or stride.
std::vector<WindowPair> make_windows(const MultivariateSeries& series, std::size_t w_in,
                                     std::size_t horizon, std::size_t stride = 1);

}  // namespace delayformer
