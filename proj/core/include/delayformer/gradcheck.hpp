#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "delayformer/autodiff.hpp"

namespace delayformer {

/// Builds a scalar loss on `tape`; `params[i]` is the trainable leaf created
/// from the i-th point tensor, in order. Called repeatedly with perturbed
/// points, so it must not capture state that varies between calls.
using LossBuilder = std::function<Var(Tape& tape, const std::vector<Var>& params)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_param = 0;   // index into the point vector
    std::size_t worst_coord = 0;   // flat index within that tensor
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central-difference check of backward() against (f(x+h)-f(x-h))/2h.
/// The error measure is |analytic-numeric| / max(1, |analytic|, |numeric|),
/// i.e. relative for O(1)-and-larger gradients and absolute below that.
/// `max_coords` caps the number of coordinates sampled (0 checks them all);
/// sampling without replacement uses `rng`. Throws ContractError if h <= 0.
GradCheckReport finite_diff_gradcheck(const LossBuilder& build, const std::vector<Tensor>& point,
                                      double h, std::size_t max_coords, std::mt19937_64& rng);

}  // namespace delayformer
