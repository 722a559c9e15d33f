#pragma once

#include <cstdint>
#include <vector>

#include "delayformer/series.hpp"

namespace delayformer {

/// Chain of unidirectionally coupled Lorenz subsystems. Subsystem n (1-based)
/// evolves as
///   dx_n = sigma_eff(t) (y_n - x_n) + gamma z_{n-1}
///   dy_n = x_n (rho - z_n) - y_n
///   dz_n = -beta z_n + x_n y_n
/// with z_0 identically 0, so the first subsystem is uncoupled and the chain
/// is open. `as_printed` swaps the dy damping term to -x_n y_n.
struct LorenzConfig {
    std::size_t n_subsystems = 10;
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    double gamma = 0.1;
    double dt = 0.01;
    std::size_t record_stride = 1;
    std::size_t n_points = 5000;
    double noise_strength = 0.0;
    enum class NoiseMode { measurement, process };
    NoiseMode noise_mode = NoiseMode::measurement;
    bool time_varying = false;  // sigma_eff(t) = 10 + 0.02 t instead of `sigma`
    bool as_printed = false;
    std::uint64_t seed = 0;

    std::size_t dim() const { return 3 * n_subsystems; }
    void validate() const;  // throws ContractError
};

/// sigma(t) for the time-varying regime: 10 + 0.02 t, t in integration time.
double time_varying_sigma(double t);

/// Right-hand side at state (x_1,y_1,z_1,...,x_n,y_n,z_n) and time t.
/// Throws ContractError when the state length is not 3 * n_subsystems.
std::vector<double> lorenz_derivative(const std::vector<double>& state, const LorenzConfig& cfg,
                                      double t);

/// Classical RK4 trajectory from the fixed initial condition
/// x_n(0) = -0.1 + 0.003 n, y_n(0) = -0.097 + 0.003 n, z_n(0) = -0.094 + 0.003 n
/// (n 1-based), recording every `record_stride` steps starting at t = 0.
/// Process-mode noise adds an Euler-Maruyama term sqrt(dt) N(0, sigma_b^2)
/// per integration step; measurement-mode noise is applied to the recorded
/// observations afterwards. Channel names are x1,y1,z1,...
MultivariateSeries integrate(const LorenzConfig& cfg);

/// Adds i.i.d. N(0, noise_strength^2) to every recorded value.
/// Throws ContractError on negative strength.
MultivariateSeries add_observation_noise(const MultivariateSeries& series, double noise_strength,
                                         std::uint64_t seed);

}  // namespace delayformer
