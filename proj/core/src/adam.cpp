#include "delayformer/adam.hpp"

#include <algorithm>
#include <cmath>

#include "delayformer/errors.hpp"

namespace delayformer {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
    require_same_shape(param, grad, "adam_step");
    if (state.m.empty()) state = AdamState(param.shape());
    require_same_shape(param, state.m, "adam_step state");

    const bool all_zero = std::all_of(grad.values().begin(), grad.values().end(),
                                      [](double g) { return g == 0.0; });
    if (all_zero) return;

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace delayformer
