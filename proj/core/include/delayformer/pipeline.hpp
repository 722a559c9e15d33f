#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "delayformer/delay.hpp"
#include "delayformer/model.hpp"
#include "delayformer/series.hpp"
#include "delayformer/tensor.hpp"

namespace delayformer {

/// Per-channel z-score statistics, always fit on the training split.
struct NormalizerStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at kNormalizerEps
    std::size_t channels() const { return mean.size(); }
};

inline constexpr double kNormalizerEps = 1e-8;

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    std::size_t stride = 1;
    std::uint64_t seed = 0;
    std::array<double, 3> split_ratios = {0.7, 0.1, 0.2};
    void validate() const;  // throws ContractError
};

struct TrainingHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;
    double best_val_loss() const;
};

struct EvalReport {
    double mse = 0.0;       // normalized scale (headline)
    double mae = 0.0;
    double mse_raw = 0.0;
    double mae_raw = 0.0;
    std::vector<double> mse_per_channel;
    std::vector<double> mae_per_channel;
    std::vector<double> mse_raw_per_channel;
    std::vector<double> mae_raw_per_channel;
    std::size_t window_count = 0;
};

struct TrainResult {
    ModelParams params;
    TrainingHistory history;
    NormalizerStats stats;
};

/// Chronological split into (floor(r0*M), floor(r1*M), remainder) segments.
/// Throws ContractError unless ratios are positive and sum to 1 within 1e-9.
std::array<MultivariateSeries, 3> split_series(const MultivariateSeries& series,
                                               const std::array<double, 3>& ratios);

NormalizerStats fit_normalizer(const MultivariateSeries& train);
MultivariateSeries apply_normalizer(const MultivariateSeries& series,
                                    const NormalizerStats& stats);
MultivariateSeries invert_normalizer(const MultivariateSeries& series,
                                     const NormalizerStats& stats);
/// Per-channel z-scoring of an N x T matrix (window inputs/targets).
Tensor apply_normalizer(const Tensor& channels_by_time, const NormalizerStats& stats);
Tensor invert_normalizer(const Tensor& channels_by_time, const NormalizerStats& stats);

/// Channel-independent training loss: plain mean of squared errors over all
/// B*N*H elements. Throws ContractError on shape mismatch.
double ci_loss(const Tensor& pred, const Tensor& target);

/// Full training run: split, normalize from the training split, cut windows
/// per split, Adam on minibatches with a seeded shuffle each epoch, early
/// stopping on validation loss. Returns the best-validation-epoch parameters.
/// Throws ContractError when the series is too short for one training and one
/// validation window, naming the required minimum length.
TrainResult train(const ModelConfig& mcfg, const MultivariateSeries& series,
                  const TrainConfig& tcfg);

/// Inner loop shared by train and fine_tune: windows are already normalized.
/// Mutates params in place and returns the history; params end at the best
/// validation epoch (or the last epoch when val_windows is empty).
TrainingHistory train_on_windows(const ModelConfig& mcfg, ModelParams& params,
                                 const std::vector<WindowPair>& train_windows,
                                 const std::vector<WindowPair>& val_windows,
                                 const TrainConfig& tcfg);

/// Metrics of the network over raw-scale windows; inputs are normalized with
/// `stats`, predictions are scored normalized (headline) and de-normalized
/// (raw). Windows are batched internally. Throws ContractError when empty.
EvalReport evaluate(const ModelConfig& mcfg, const ModelParams& params,
                    const std::vector<WindowPair>& windows, const NormalizerStats& stats,
                    std::size_t batch_size = 32);

/// Maps one normalized N x W_in input to a normalized N x H forecast.
using Forecaster = std::function<Tensor(const Tensor&)>;

/// Same protocol as evaluate() for an arbitrary forecaster (baselines).
EvalReport evaluate_forecaster(const Forecaster& forecast,
                               const std::vector<WindowPair>& windows,
                               const NormalizerStats& stats, std::size_t horizon);

/// Repeats each channel's last observed value across the horizon.
Tensor persistence_baseline(const Tensor& window, std::size_t horizon);

/// Closed-form ridge regression from flattened inputs (N*W_in features plus
/// an unregularized intercept) to flattened targets (N*H outputs).
struct LinearBaseline {
    Tensor weights;  // (N*W_in + 1) x (N*H); last row is the intercept
    std::size_t n_channels = 0;
    std::size_t w_in = 0;
    std::size_t horizon = 0;
};

/// Fits on normalized windows. Throws ContractError when windows are empty or
/// lambda < 0, SolverError when the normal matrix is singular (suggests λ>0).
LinearBaseline linear_baseline_fit(const std::vector<WindowPair>& windows, double lambda);
Tensor linear_baseline_predict(const LinearBaseline& model, const Tensor& window);

struct FineTuneResult {
    ModelConfig cfg;       // base config with n_channels matching the new series
    ModelParams params;
    TrainingHistory history;
    NormalizerStats stats;  // refit on the new series' training split
};

/// Warm-starts the encoder from `base_params`; decoder heads are kept when
/// the channel count matches and re-initialized (seeded) otherwise. Training
/// uses the first ceil(fraction * count) chronological training windows;
/// fraction 0 skips training entirely (zero-shot). Throws ContractError for
/// fraction outside [0, 1].
FineTuneResult fine_tune(const ModelConfig& base_cfg, const ModelParams& base_params,
                         const MultivariateSeries& series, double fraction,
                         const TrainConfig& tcfg);

}  // namespace delayformer
