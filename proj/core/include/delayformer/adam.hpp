#pragma once

#include "delayformer/tensor.hpp"

namespace delayformer {

/// Per-parameter Adam accumulators. First and second moment estimates plus
/// the shared step counter live here; the parameter tensor itself is owned
/// by the caller.
struct AdamState {
    Tensor m;
    Tensor v;
    std::size_t step = 0;

    explicit AdamState(const std::vector<std::size_t>& shape) : m(shape), v(shape) {}
    AdamState() = default;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update, in place. An identically-zero gradient is
/// a no-op on both the parameter and the state, whatever the accumulated
/// moments are.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace delayformer
