#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "delayformer/errors.hpp"
#include "delayformer/tensor.hpp"

namespace delayformer {

/// A multivariate time series: N named channels sampled at M uniform steps.
/// Values are stored channels x time (row k = channel k).
struct MultivariateSeries {
    Tensor values;  // N x M
    std::vector<std::string> channel_names;
    double dt = 1.0;

    std::size_t channels() const { return values.empty() ? 0 : values.rows(); }
    std::size_t steps() const { return values.empty() ? 0 : values.cols(); }

    double at(std::size_t channel, std::size_t t) const { return values(channel, t); }

    /// Throws ContractError on shape/name mismatch or non-finite values.
    void validate() const;
};

}  // namespace delayformer
