#include "delayformer/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "delayformer/adam.hpp"
#include "delayformer/errors.hpp"

namespace delayformer {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ContractError("train config: learning rate must be >= 0");
    if (batch_size == 0) throw ContractError("train config: batch size must be positive");
    if (max_epochs == 0) throw ContractError("train config: max_epochs must be positive");
    if (stride == 0) throw ContractError("train config: stride must be positive");
    double sum = 0.0;
    for (double r : split_ratios) {
        if (!(r > 0.0)) throw ContractError("train config: split ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ContractError("train config: split ratios sum to " + std::to_string(sum) +
                            ", expected 1");
}

double TrainingHistory::best_val_loss() const {
    if (best_epoch >= val_loss.size()) return std::numeric_limits<double>::quiet_NaN();
    return val_loss[best_epoch];
}

std::array<MultivariateSeries, 3> split_series(const MultivariateSeries& series,
                                               const std::array<double, 3>& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw ContractError("split_series: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ContractError("split_series: ratios sum to " + std::to_string(sum) +
                            ", expected 1");
    const std::size_t m = series.steps();
    const std::size_t n0 = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(m)));
    const std::size_t n1 = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(m)));
    const std::size_t n2 = m - n0 - n1;

    const std::size_t n = series.channels();
    std::array<std::size_t, 3> lens = {n0, n1, n2};
    std::array<std::size_t, 3> starts = {0, n0, n0 + n1};
    std::array<MultivariateSeries, 3> out;
    for (std::size_t s = 0; s < 3; ++s) {
        out[s].channel_names = series.channel_names;
        out[s].dt = series.dt;
        if (lens[s] == 0) continue;
        out[s].values = Tensor({n, lens[s]});
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t t = 0; t < lens[s]; ++t)
                out[s].values(k, t) = series.at(k, starts[s] + t);
    }
    return out;
}

NormalizerStats fit_normalizer(const MultivariateSeries& train) {
    if (train.steps() == 0) throw ContractError("fit_normalizer: empty training split");
    const std::size_t n = train.channels();
    const std::size_t m = train.steps();
    NormalizerStats stats;
    stats.mean.resize(n);
    stats.stddev.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double mean = 0.0;
        for (std::size_t t = 0; t < m; ++t) mean += train.at(k, t);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t t = 0; t < m; ++t) {
            const double d = train.at(k, t) - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        stats.mean[k] = mean;
        stats.stddev[k] = std::max(std::sqrt(var), kNormalizerEps);
    }
    return stats;
}

Tensor apply_normalizer(const Tensor& channels_by_time, const NormalizerStats& stats) {
    if (channels_by_time.rank() != 2 || channels_by_time.rows() != stats.channels())
        throw DimensionError("apply_normalizer: " + channels_by_time.shape_str() + " vs " +
                             std::to_string(stats.channels()) + " channel stats");
    Tensor out = channels_by_time;
    for (std::size_t k = 0; k < out.rows(); ++k)
        for (std::size_t t = 0; t < out.cols(); ++t)
            out(k, t) = (out(k, t) - stats.mean[k]) / stats.stddev[k];
    return out;
}

Tensor invert_normalizer(const Tensor& channels_by_time, const NormalizerStats& stats) {
    if (channels_by_time.rank() != 2 || channels_by_time.rows() != stats.channels())
        throw DimensionError("invert_normalizer: " + channels_by_time.shape_str() + " vs " +
                             std::to_string(stats.channels()) + " channel stats");
    Tensor out = channels_by_time;
    for (std::size_t k = 0; k < out.rows(); ++k)
        for (std::size_t t = 0; t < out.cols(); ++t)
            out(k, t) = out(k, t) * stats.stddev[k] + stats.mean[k];
    return out;
}

MultivariateSeries apply_normalizer(const MultivariateSeries& series,
                                    const NormalizerStats& stats) {
    MultivariateSeries out = series;
    out.values = apply_normalizer(series.values, stats);
    return out;
}

MultivariateSeries invert_normalizer(const MultivariateSeries& series,
                                     const NormalizerStats& stats) {
    MultivariateSeries out = series;
    out.values = invert_normalizer(series.values, stats);
    return out;
}

double ci_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "ci_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

namespace {

// Stacks the chosen windows into B x N x W_in inputs and B x N x H targets.
void stack_windows(const std::vector<WindowPair>& windows, const std::vector<std::size_t>& idx,
                   std::size_t first, std::size_t count, Tensor& inputs, Tensor& targets) {
    const std::size_t n = windows.front().input.rows();
    const std::size_t w_in = windows.front().input.cols();
    const std::size_t h = windows.front().target.cols();
    inputs = Tensor({count, n, w_in});
    targets = Tensor({count, n, h});
    for (std::size_t b = 0; b < count; ++b) {
        const WindowPair& w = windows[idx[first + b]];
        for (std::size_t i = 0; i < n * w_in; ++i) inputs[b * n * w_in + i] = w.input[i];
        for (std::size_t i = 0; i < n * h; ++i) targets[b * n * h + i] = w.target[i];
    }
}

// Mean ci_loss of the model over normalized windows, evaluated in batches.
double mean_loss(const ModelConfig& mcfg, const ModelParams& params,
                 const std::vector<WindowPair>& windows, std::size_t batch_size) {
    std::vector<std::size_t> idx(windows.size());
    std::iota(idx.begin(), idx.end(), 0);
    double acc = 0.0;
    std::size_t done = 0;
    while (done < windows.size()) {
        const std::size_t count = std::min(batch_size, windows.size() - done);
        Tensor inputs, targets;
        stack_windows(windows, idx, done, count, inputs, targets);
        const Tensor pred = forward(inputs, mcfg, params);
        acc += ci_loss(pred, targets) * static_cast<double>(count);
        done += count;
    }
    return acc / static_cast<double>(windows.size());
}

}  // namespace

TrainingHistory train_on_windows(const ModelConfig& mcfg, ModelParams& params,
                                 const std::vector<WindowPair>& train_windows,
                                 const std::vector<WindowPair>& val_windows,
                                 const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    if (train_windows.empty()) throw ContractError("train: no training windows");

    std::vector<AdamState> states;
    params.for_each([&states](const std::string&, Tensor& t) { states.emplace_back(t.shape()); });
    const AdamConfig adam{tcfg.learning_rate, 0.9, 0.999, 1e-8};

    std::mt19937_64 rng(tcfg.seed);
    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    TrainingHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    ModelParams best_params = params;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t count = std::min(tcfg.batch_size, order.size() - done);
            Tensor inputs, targets;
            stack_windows(train_windows, order, done, count, inputs, targets);

            Tape tape;
            ParamVars pv = bind_params(tape, params, /*trainable=*/true);
            Var loss = batch_loss(tape, inputs, targets, mcfg, pv);
            epoch_loss += loss.value()[0] * static_cast<double>(count);
            tape.backward(loss);
            std::size_t i = 0;
            params.for_each([&](const std::string&, Tensor& t) {
                adam_step(t, tape.grad(pv.ordered[i].id), states[i], adam);
                ++i;
            });
            done += count;
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

        if (val_windows.empty()) {
            history.best_epoch = epoch;
            continue;
        }
        const double val = mean_loss(mcfg, params, val_windows, tcfg.batch_size);
        history.val_loss.push_back(val);
        if (val < best_val) {
            best_val = val;
            best_params = params;
            history.best_epoch = epoch;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= tcfg.patience) {
            break;
        }
    }

    if (!val_windows.empty()) params = best_params;
    return history;
}

TrainResult train(const ModelConfig& mcfg, const MultivariateSeries& series,
                  const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    auto splits = split_series(series, tcfg.split_ratios);
    const std::size_t need = mcfg.w_in + mcfg.horizon;
    if (splits[0].steps() < need || splits[1].steps() < need)
        throw ContractError("train: training and validation splits must each span at least "
                            "W_in + H = " +
                            std::to_string(need) + " steps (got " +
                            std::to_string(splits[0].steps()) + " and " +
                            std::to_string(splits[1].steps()) + ")");

    TrainResult result;
    result.stats = fit_normalizer(splits[0]);
    const auto train_windows = make_windows(apply_normalizer(splits[0], result.stats), mcfg.w_in,
                                            mcfg.horizon, tcfg.stride);
    const auto val_windows = make_windows(apply_normalizer(splits[1], result.stats), mcfg.w_in,
                                          mcfg.horizon, tcfg.stride);
    result.params = init_params(mcfg);
    result.history = train_on_windows(mcfg, result.params, train_windows, val_windows, tcfg);
    return result;
}

namespace {

struct ErrorAccumulator {
    std::vector<double> se, ae, se_raw, ae_raw;
    std::size_t per_channel_count = 0;  // windows * horizon
    std::size_t windows = 0;

    explicit ErrorAccumulator(std::size_t n) : se(n), ae(n), se_raw(n), ae_raw(n) {}

    void add(const Tensor& pred_norm, const Tensor& target_raw, const NormalizerStats& stats) {
        const std::size_t n = pred_norm.rows(), h = pred_norm.cols();
        const Tensor target_norm = apply_normalizer(target_raw, stats);
        const Tensor pred_raw = invert_normalizer(pred_norm, stats);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t t = 0; t < h; ++t) {
                const double dn = pred_norm(k, t) - target_norm(k, t);
                const double dr = pred_raw(k, t) - target_raw(k, t);
                se[k] += dn * dn;
                ae[k] += std::abs(dn);
                se_raw[k] += dr * dr;
                ae_raw[k] += std::abs(dr);
            }
        per_channel_count += h;
        ++windows;
    }

    EvalReport report() const {
        const std::size_t n = se.size();
        EvalReport r;
        r.window_count = windows;
        r.mse_per_channel.resize(n);
        r.mae_per_channel.resize(n);
        r.mse_raw_per_channel.resize(n);
        r.mae_raw_per_channel.resize(n);
        const double c = static_cast<double>(per_channel_count);
        for (std::size_t k = 0; k < n; ++k) {
            r.mse_per_channel[k] = se[k] / c;
            r.mae_per_channel[k] = ae[k] / c;
            r.mse_raw_per_channel[k] = se_raw[k] / c;
            r.mae_raw_per_channel[k] = ae_raw[k] / c;
            r.mse += se[k];
            r.mae += ae[k];
            r.mse_raw += se_raw[k];
            r.mae_raw += ae_raw[k];
        }
        const double total = c * static_cast<double>(n);
        r.mse /= total;
        r.mae /= total;
        r.mse_raw /= total;
        r.mae_raw /= total;
        return r;
    }
};

}  // namespace

EvalReport evaluate(const ModelConfig& mcfg, const ModelParams& params,
                    const std::vector<WindowPair>& windows, const NormalizerStats& stats,
                    std::size_t batch_size) {
    if (windows.empty()) throw ContractError("evaluate: no windows");
    if (batch_size == 0) throw ContractError("evaluate: batch size must be positive");
    const std::size_t n = mcfg.n_channels;
    ErrorAccumulator acc(n);
    std::size_t done = 0;
    while (done < windows.size()) {
        const std::size_t count = std::min(batch_size, windows.size() - done);
        Tensor inputs({count, n, mcfg.w_in});
        for (std::size_t b = 0; b < count; ++b) {
            const Tensor norm = apply_normalizer(windows[done + b].input, stats);
            for (std::size_t i = 0; i < norm.size(); ++i) inputs[b * norm.size() + i] = norm[i];
        }
        const Tensor pred = forward(inputs, mcfg, params);  // count x N x H
        for (std::size_t b = 0; b < count; ++b) {
            Tensor pred_one({n, mcfg.horizon});
            for (std::size_t i = 0; i < pred_one.size(); ++i)
                pred_one[i] = pred[b * pred_one.size() + i];
            acc.add(pred_one, windows[done + b].target, stats);
        }
        done += count;
    }
    return acc.report();
}

EvalReport evaluate_forecaster(const Forecaster& forecast,
                               const std::vector<WindowPair>& windows,
                               const NormalizerStats& stats, std::size_t horizon) {
    if (windows.empty()) throw ContractError("evaluate: no windows");
    ErrorAccumulator acc(windows.front().input.rows());
    for (const WindowPair& w : windows) {
        const Tensor pred = forecast(apply_normalizer(w.input, stats));
        if (pred.rank() != 2 || pred.rows() != w.input.rows() || pred.cols() != horizon)
            throw DimensionError("evaluate: forecaster returned " + pred.shape_str());
        acc.add(pred, w.target, stats);
    }
    return acc.report();
}

Tensor persistence_baseline(const Tensor& window, std::size_t horizon) {
    if (window.rank() != 2 || window.cols() == 0)
        throw ContractError("persistence_baseline: need an N x W_in window");
    Tensor out({window.rows(), horizon});
    for (std::size_t k = 0; k < window.rows(); ++k) {
        const double last = window(k, window.cols() - 1);
        for (std::size_t t = 0; t < horizon; ++t) out(k, t) = last;
    }
    return out;
}

LinearBaseline linear_baseline_fit(const std::vector<WindowPair>& windows, double lambda) {
    if (windows.empty()) throw ContractError("linear_baseline_fit: no windows");
    if (lambda < 0.0) throw ContractError("linear_baseline_fit: lambda must be nonnegative");
    const std::size_t n = windows.front().input.rows();
    const std::size_t w_in = windows.front().input.cols();
    const std::size_t h = windows.front().target.cols();
    const std::size_t f = n * w_in + 1;  // flattened features plus intercept
    const std::size_t o = n * h;
    const std::size_t s = windows.size();

    Tensor x({s, f});
    Tensor y({s, o});
    for (std::size_t i = 0; i < s; ++i) {
        const WindowPair& w = windows[i];
        for (std::size_t j = 0; j < f - 1; ++j) x(i, j) = w.input[j];
        x(i, f - 1) = 1.0;
        for (std::size_t j = 0; j < o; ++j) y(i, j) = w.target[j];
    }

    Tensor xt = transposed(x);
    Tensor a = matmul(xt, x);
    for (std::size_t j = 0; j + 1 < f; ++j) a(j, j) += lambda;  // intercept unregularized
    Tensor b = matmul(xt, y);

    LinearBaseline model;
    model.n_channels = n;
    model.w_in = w_in;
    model.horizon = h;
    try {
        model.weights = cholesky_solve(std::move(a), std::move(b));
    } catch (const SolverError&) {
        throw SolverError("linear_baseline_fit: normal matrix is singular; use lambda > 0");
    }
    return model;
}

Tensor linear_baseline_predict(const LinearBaseline& model, const Tensor& window) {
    if (window.rank() != 2 || window.rows() != model.n_channels || window.cols() != model.w_in)
        throw DimensionError("linear_baseline_predict: window " + window.shape_str() +
                             ", model expects " + std::to_string(model.n_channels) + "x" +
                             std::to_string(model.w_in));
    const std::size_t f = model.n_channels * model.w_in + 1;
    Tensor x({1, f});
    for (std::size_t j = 0; j + 1 < f; ++j) x[j] = window[j];
    x[f - 1] = 1.0;
    Tensor flat = matmul(x, model.weights);
    return flat.reshaped({model.n_channels, model.horizon});
}

FineTuneResult fine_tune(const ModelConfig& base_cfg, const ModelParams& base_params,
                         const MultivariateSeries& series, double fraction,
                         const TrainConfig& tcfg) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw ContractError("fine_tune: fraction must lie in [0, 1]");
    tcfg.validate();

    FineTuneResult result;
    result.cfg = base_cfg;
    result.cfg.n_channels = series.channels();
    result.cfg.validate();

    if (series.channels() == base_cfg.n_channels) {
        result.params = base_params;
    } else {
        // Fresh heads for the new channel count; encoder warm-started.
        result.params = init_params(result.cfg, tcfg.seed);
        result.params.patch_w = base_params.patch_w;
        result.params.patch_b = base_params.patch_b;
        result.params.pe = base_params.pe;
        result.params.blocks = base_params.blocks;
    }

    auto splits = split_series(series, tcfg.split_ratios);
    result.stats = fit_normalizer(splits[0]);
    auto train_windows = make_windows(apply_normalizer(splits[0], result.stats),
                                      result.cfg.w_in, result.cfg.horizon, tcfg.stride);
    const auto val_windows = make_windows(apply_normalizer(splits[1], result.stats),
                                          result.cfg.w_in, result.cfg.horizon, tcfg.stride);

    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(train_windows.size())));
    if (keep == 0) return result;  // zero-shot
    train_windows.resize(std::min(keep, train_windows.size()));
    result.history =
        train_on_windows(result.cfg, result.params, train_windows, val_windows, tcfg);
    return result;
}

}  // namespace delayformer
