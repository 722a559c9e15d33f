#include <doctest.h>

#include <cmath>
#include <vector>

#include "delayformer/errors.hpp"
#include "delayformer/lorenz.hpp"

using namespace delayformer;

namespace {

double state_distance(const MultivariateSeries& a, const MultivariateSeries& b,
                      std::size_t col_a, std::size_t col_b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.channels(); ++k) {
        const double d = a.at(k, col_a) - b.at(k, col_b);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST_SUITE("lorenz") {

TEST_CASE("derivative oracle for a single subsystem") {
    LorenzConfig cfg;
    cfg.n_subsystems = 1;
    // (x, y, z) = (1, 2, 3): dx = 10(2-1) = 10, dy = 1(28-3)-2 = 23, dz = -8/3*3 + 2 = -6
    const auto d = lorenz_derivative({1, 2, 3}, cfg, 0.0);
    CHECK(d[0] == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(23.0).epsilon(1e-15));
    CHECK(d[2] == doctest::Approx(-6.0).epsilon(1e-15));
}

TEST_CASE("first subsystem is uncoupled, later ones feel gamma * z_prev") {
    LorenzConfig cfg;
    cfg.n_subsystems = 2;
    cfg.gamma = 0.1;
    // subsystem 1 at (0,0,5): dx_1 = 10*(0-0) + gamma*z_0 = 0 since z_0 == 0
    // subsystem 2 at (1,2,3): dx_2 = 10*(2-1) + 0.1*5 = 10.5
    const auto d = lorenz_derivative({0, 0, 5, 1, 2, 3}, cfg, 0.0);
    CHECK(d[0] == 0.0);
    CHECK(d[3] == doctest::Approx(10.5).epsilon(1e-15));

    LorenzConfig strong = cfg;
    strong.gamma = 2.0;
    const auto d2 = lorenz_derivative({0, 0, 5, 1, 2, 3}, strong, 0.0);
    CHECK(d2[3] == doctest::Approx(20.0).epsilon(1e-15));
}

TEST_CASE("as_printed swaps the dy damping term") {
    LorenzConfig cfg;
    cfg.n_subsystems = 1;
    // (x,y,z) = (2,3,1): canonical dy = 2(28-1) - 3 = 51; printed dy = 2(28-1) - 2*3 = 48
    const auto canonical = lorenz_derivative({2, 3, 1}, cfg, 0.0);
    CHECK(canonical[1] == doctest::Approx(51.0).epsilon(1e-15));
    cfg.as_printed = true;
    const auto printed = lorenz_derivative({2, 3, 1}, cfg, 0.0);
    CHECK(printed[1] == doctest::Approx(48.0).epsilon(1e-15));
    CHECK(printed[0] == canonical[0]);
    CHECK(printed[2] == canonical[2]);
}

TEST_CASE("derivative rejects mismatched state length") {
    LorenzConfig cfg;
    cfg.n_subsystems = 2;
    CHECK_THROWS_AS(lorenz_derivative({1, 2, 3}, cfg, 0.0), ContractError);
}

TEST_CASE("time-varying sigma ramp") {
    CHECK(time_varying_sigma(0.0) == 10.0);
    CHECK(time_varying_sigma(10.0) == doctest::Approx(10.2).epsilon(1e-15));
    CHECK(time_varying_sigma(100.0) == doctest::Approx(12.0).epsilon(1e-15));
}

TEST_CASE("time_varying flag changes the drift") {
    LorenzConfig cfg;
    cfg.n_subsystems = 1;
    const auto fixed = lorenz_derivative({1, 2, 3}, cfg, 50.0);
    cfg.time_varying = true;
    const auto varying = lorenz_derivative({1, 2, 3}, cfg, 50.0);
    CHECK(fixed[0] == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(varying[0] == doctest::Approx(11.0).epsilon(1e-15));  // sigma(50) = 11
}

TEST_CASE("default config shape and channel names") {
    LorenzConfig cfg;
    cfg.n_points = 50;  // keep the test fast; width is what matters
    const MultivariateSeries s = integrate(cfg);
    CHECK(s.channels() == 30);
    CHECK(s.steps() == 50);
    CHECK(s.channel_names[0] == "x1");
    CHECK(s.channel_names[1] == "y1");
    CHECK(s.channel_names[2] == "z1");
    CHECK(s.channel_names[29] == "z10");
    CHECK(s.dt == doctest::Approx(0.01));
}

TEST_CASE("initial condition row") {
    LorenzConfig cfg;
    cfg.n_subsystems = 3;
    cfg.n_points = 2;
    const MultivariateSeries s = integrate(cfg);
    for (std::size_t n = 1; n <= 3; ++n) {
        CHECK(s.at(3 * (n - 1) + 0, 0) == doctest::Approx(-0.1 + 0.003 * n).epsilon(1e-15));
        CHECK(s.at(3 * (n - 1) + 1, 0) == doctest::Approx(-0.097 + 0.003 * n).epsilon(1e-15));
        CHECK(s.at(3 * (n - 1) + 2, 0) == doctest::Approx(-0.094 + 0.003 * n).epsilon(1e-15));
    }
}

TEST_CASE("record_stride subsamples the same trajectory") {
    LorenzConfig fine;
    fine.n_subsystems = 1;
    fine.n_points = 21;
    LorenzConfig coarse = fine;
    coarse.record_stride = 2;
    coarse.n_points = 11;
    const MultivariateSeries a = integrate(fine);
    const MultivariateSeries b = integrate(coarse);
    CHECK(b.dt == doctest::Approx(0.02));
    for (std::size_t p = 0; p < 11; ++p) CHECK(state_distance(a, b, 2 * p, p) == 0.0);
}

TEST_CASE("rk4 shows fourth-order convergence") {
    // error(dt) / error(dt/2) should be near 2^4 = 16 (within a factor of 2).
    // Integrate to t = 0.5: long enough to excite the nonlinearity, short
    // enough that chaotic divergence has not left the asymptotic regime.
    LorenzConfig base;
    base.n_subsystems = 1;
    base.n_points = 2;

    auto final_state = [&](double dt, std::size_t stride) {
        LorenzConfig c = base;
        c.dt = dt;
        c.record_stride = stride;
        const MultivariateSeries s = integrate(c);
        return std::vector<double>{s.at(0, 1), s.at(1, 1), s.at(2, 1)};
    };
    const auto ref = final_state(0.0025, 200);
    auto err = [&](const std::vector<double>& v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i) acc += (v[i] - ref[i]) * (v[i] - ref[i]);
        return std::sqrt(acc);
    };
    const double e1 = err(final_state(0.02, 25));
    const double e2 = err(final_state(0.01, 50));
    const double ratio = e1 / e2;
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
}

TEST_CASE("trajectories stay bounded") {
    LorenzConfig cfg;  // default: 30 channels, 5000 points
    const MultivariateSeries s = integrate(cfg);
    double peak = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) peak = std::max(peak, std::abs(s.values[i]));
    CHECK(peak < 100.0);
    CHECK(s.values.all_finite());
}

TEST_CASE("integration is deterministic in the seed") {
    LorenzConfig cfg;
    cfg.n_subsystems = 2;
    cfg.n_points = 100;
    cfg.noise_strength = 0.3;
    cfg.seed = 42;
    const MultivariateSeries a = integrate(cfg);
    const MultivariateSeries b = integrate(cfg);
    bool identical = true;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        identical = identical && a.values[i] == b.values[i];
    CHECK(identical);

    cfg.seed = 43;
    const MultivariateSeries c = integrate(cfg);
    bool differs = false;
    for (std::size_t i = 0; i < a.values.size(); ++i) differs = differs || a.values[i] != c.values[i];
    CHECK(differs);
}

TEST_CASE("measurement noise is observation noise on the clean trajectory") {
    LorenzConfig clean;
    clean.n_subsystems = 1;
    clean.n_points = 60;
    LorenzConfig noisy = clean;
    noisy.noise_strength = 0.25;
    noisy.seed = 7;

    const MultivariateSeries a = integrate(noisy);
    const MultivariateSeries b = add_observation_noise(integrate(clean), 0.25, 7);
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("process noise perturbs the dynamics instead") {
    LorenzConfig cfg;
    cfg.n_subsystems = 1;
    cfg.n_points = 60;
    cfg.noise_strength = 0.25;
    cfg.seed = 7;
    const MultivariateSeries meas = integrate(cfg);
    cfg.noise_mode = LorenzConfig::NoiseMode::process;
    const MultivariateSeries proc = integrate(cfg);
    bool differs = false;
    for (std::size_t i = 0; i < meas.values.size(); ++i)
        differs = differs || meas.values[i] != proc.values[i];
    CHECK(differs);
    CHECK(proc.values.all_finite());
}

TEST_CASE("zero noise strength leaves the trajectory untouched") {
    LorenzConfig cfg;
    cfg.n_subsystems = 1;
    cfg.n_points = 30;
    const MultivariateSeries clean = integrate(cfg);
    const MultivariateSeries same = add_observation_noise(clean, 0.0, 99);
    for (std::size_t i = 0; i < clean.values.size(); ++i)
        CHECK(clean.values[i] == same.values[i]);
    CHECK_THROWS_AS(add_observation_noise(clean, -0.1, 0), ContractError);
}

TEST_CASE("config validation") {
    LorenzConfig cfg;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = LorenzConfig{};
    cfg.n_points = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = LorenzConfig{};
    cfg.noise_strength = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = LorenzConfig{};
    cfg.record_stride = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = LorenzConfig{};
    cfg.n_subsystems = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

}  // TEST_SUITE
