#include <benchmark/benchmark.h>

#include <random>

#include "delayformer/autodiff.hpp"
#include "delayformer/delay.hpp"
#include "delayformer/lorenz.hpp"
#include "delayformer/model.hpp"
#include "delayformer/tensor.hpp"

using namespace delayformer;

namespace {

ModelConfig bench_config() {
    ModelConfig cfg;
    cfg.n_channels = 30;
    cfg.w_in = 96;
    cfg.horizon = 96;
    cfg.embedding_dim = 49;
    cfg.p1 = 6;
    cfg.p2 = 7;
    cfg.d_model = 64;
    cfg.n_blocks = 2;
    cfg.n_heads = 4;
    cfg.d_ff = 128;
    cfg.seed = 1;
    return cfg;
}

void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Tensor a = gaussian({n, n}, 0.0, 1.0, rng);
    const Tensor b = gaussian({n, n}, 0.0, 1.0, rng);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(256)->Arg(512);

void bm_hankel_patchify(benchmark::State& state) {
    std::mt19937_64 rng(2);
    std::vector<double> x(96);
    for (auto& v : x) v = std::normal_distribution<double>()(rng);
    for (auto _ : state) {
        const HankelMatrix h = hankelize(x, 49);
        PatchSequence p = patchify(h, 6, 7);
        benchmark::DoNotOptimize(p.tokens.data());
    }
}
BENCHMARK(bm_hankel_patchify);

void bm_forward(benchmark::State& state) {
    const ModelConfig cfg = bench_config();
    const ModelParams params = init_params(cfg);
    std::mt19937_64 rng(3);
    const Tensor batch =
        gaussian({static_cast<std::size_t>(state.range(0)), cfg.n_channels, cfg.w_in}, 0.0, 1.0,
                 rng);
    for (auto _ : state) {
        Tensor out = forward(batch, cfg, params);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bm_forward)->Arg(1)->Arg(8)->Arg(32);

void bm_train_step(benchmark::State& state) {
    const ModelConfig cfg = bench_config();
    ModelParams params = init_params(cfg);
    std::mt19937_64 rng(4);
    const auto batch_size = static_cast<std::size_t>(state.range(0));
    const Tensor inputs = gaussian({batch_size, cfg.n_channels, cfg.w_in}, 0.0, 1.0, rng);
    const Tensor targets = gaussian({batch_size, cfg.n_channels, cfg.horizon}, 0.0, 1.0, rng);
    for (auto _ : state) {
        Tape tape;
        ParamVars pv = bind_params(tape, params, true);
        Var loss = batch_loss(tape, inputs, targets, cfg, pv);
        tape.backward(loss);
        benchmark::DoNotOptimize(tape.grad(pv.patch_w.id).data());
    }
}
BENCHMARK(bm_train_step)->Arg(8)->Arg(32);

void bm_lorenz_integrate(benchmark::State& state) {
    LorenzConfig cfg;
    cfg.n_points = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        MultivariateSeries s = integrate(cfg);
        benchmark::DoNotOptimize(s.values.data());
    }
}
BENCHMARK(bm_lorenz_integrate)->Arg(1000)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();
