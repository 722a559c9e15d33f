#include "delayformer/lorenz.hpp"

#include <cmath>
#include <random>
#include <string>

#include "delayformer/errors.hpp"

namespace delayformer {

void LorenzConfig::validate() const {
    if (n_subsystems == 0) throw ContractError("lorenz: n_subsystems must be positive");
    if (!(dt > 0.0)) throw ContractError("lorenz: dt must be positive");
    if (record_stride == 0) throw ContractError("lorenz: record_stride must be positive");
    if (n_points == 0) throw ContractError("lorenz: n_points must be positive");
    if (noise_strength < 0.0) throw ContractError("lorenz: noise_strength must be nonnegative");
}

double time_varying_sigma(double t) { return 10.0 + 0.02 * t; }

std::vector<double> lorenz_derivative(const std::vector<double>& state, const LorenzConfig& cfg,
                                      double t) {
    if (state.size() != cfg.dim())
        throw ContractError("lorenz_derivative: state length " + std::to_string(state.size()) +
                            ", expected " + std::to_string(cfg.dim()));
    const double sigma = cfg.time_varying ? time_varying_sigma(t) : cfg.sigma;
    std::vector<double> d(state.size());
    for (std::size_t n = 0; n < cfg.n_subsystems; ++n) {
        const double x = state[3 * n];
        const double y = state[3 * n + 1];
        const double z = state[3 * n + 2];
        const double z_prev = n == 0 ? 0.0 : state[3 * (n - 1) + 2];
        d[3 * n] = sigma * (y - x) + cfg.gamma * z_prev;
        d[3 * n + 1] = x * (cfg.rho - z) - (cfg.as_printed ? x * y : y);
        d[3 * n + 2] = -cfg.beta * z + x * y;
    }
    return d;
}

namespace {

// One RK4 step from (state, t); sigma is evaluated at the stage times, which
// matters only in the time-varying regime.
std::vector<double> rk4_step(const std::vector<double>& state, const LorenzConfig& cfg, double t) {
    const double dt = cfg.dt;
    const std::size_t d = state.size();
    std::vector<double> k1 = lorenz_derivative(state, cfg, t);
    std::vector<double> tmp(d);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = state[i] + 0.5 * dt * k1[i];
    std::vector<double> k2 = lorenz_derivative(tmp, cfg, t + 0.5 * dt);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = state[i] + 0.5 * dt * k2[i];
    std::vector<double> k3 = lorenz_derivative(tmp, cfg, t + 0.5 * dt);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = state[i] + dt * k3[i];
    std::vector<double> k4 = lorenz_derivative(tmp, cfg, t + dt);
    std::vector<double> next(d);
    for (std::size_t i = 0; i < d; ++i)
        next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return next;
}

}  // namespace

MultivariateSeries integrate(const LorenzConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.dim();
    std::vector<double> state(d);
    for (std::size_t n = 1; n <= cfg.n_subsystems; ++n) {
        state[3 * (n - 1)] = -0.1 + 0.003 * static_cast<double>(n);
        state[3 * (n - 1) + 1] = -0.097 + 0.003 * static_cast<double>(n);
        state[3 * (n - 1) + 2] = -0.094 + 0.003 * static_cast<double>(n);
    }

    MultivariateSeries out;
    out.dt = cfg.dt * static_cast<double>(cfg.record_stride);
    out.values = Tensor({d, cfg.n_points});
    out.channel_names.reserve(d);
    const char* axes = "xyz";
    for (std::size_t n = 1; n <= cfg.n_subsystems; ++n)
        for (std::size_t a = 0; a < 3; ++a)
            out.channel_names.push_back(std::string(1, axes[a]) + std::to_string(n));

    const bool process_noise =
        cfg.noise_mode == LorenzConfig::NoiseMode::process && cfg.noise_strength > 0.0;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, cfg.noise_strength);
    const double em_scale = std::sqrt(cfg.dt);

    double t = 0.0;
    for (std::size_t p = 0; p < cfg.n_points; ++p) {
        for (std::size_t i = 0; i < d; ++i) out.values(i, p) = state[i];
        if (p + 1 == cfg.n_points) break;
        for (std::size_t s = 0; s < cfg.record_stride; ++s) {
            state = rk4_step(state, cfg, t);
            if (process_noise)
                for (std::size_t i = 0; i < d; ++i) state[i] += em_scale * gauss(rng);
            t += cfg.dt;
        }
    }

    if (cfg.noise_mode == LorenzConfig::NoiseMode::measurement && cfg.noise_strength > 0.0)
        return add_observation_noise(out, cfg.noise_strength, cfg.seed);
    return out;
}

MultivariateSeries add_observation_noise(const MultivariateSeries& series, double noise_strength,
                                         std::uint64_t seed) {
    if (noise_strength < 0.0)
        throw ContractError("add_observation_noise: strength must be nonnegative");
    MultivariateSeries out = series;
    if (noise_strength == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise_strength);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += gauss(rng);
    return out;
}

}  // namespace delayformer
