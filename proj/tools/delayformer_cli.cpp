// Command-line front end: generate data, train, evaluate, predict, fine-tune
// and gradient-check from one binary.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "delayformer/checkpoint.hpp"
#include "delayformer/csv.hpp"
#include "delayformer/errors.hpp"
#include "delayformer/gradcheck.hpp"
#include "delayformer/lorenz.hpp"
#include "delayformer/model.hpp"
#include "delayformer/pipeline.hpp"
#include "delayformer/run_config.hpp"

namespace dlf = delayformer;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    bool deterministic = false;  // always the case; flag kept for scripting symmetry
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--seed", common.seed, "Override every seed in the run");
    cmd->add_flag("--deterministic", common.deterministic,
                  "Bit-reproducible run (always on; accepted for explicitness)");
}

json report_row(const std::string& method, const dlf::EvalReport& r) {
    return json{{"method", method},
                {"mse", r.mse},
                {"mae", r.mae},
                {"mse_raw", r.mse_raw},
                {"mae_raw", r.mae_raw},
                {"mse_per_channel", r.mse_per_channel},
                {"mae_per_channel", r.mae_per_channel}};
}

// Model + persistence + ridge rows on the same windows.
json metrics_json(const dlf::ModelConfig& mcfg, const dlf::ModelParams& params,
                  const std::vector<dlf::WindowPair>& test_windows,
                  const std::vector<dlf::WindowPair>& ridge_train_windows,
                  const dlf::NormalizerStats& stats, double ridge_lambda) {
    json rows = json::array();
    rows.push_back(report_row(
        "delayformer", dlf::evaluate(mcfg, params, test_windows, stats)));
    rows.push_back(report_row(
        "persistence",
        dlf::evaluate_forecaster(
            [&](const dlf::Tensor& w) { return dlf::persistence_baseline(w, mcfg.horizon); },
            test_windows, stats, mcfg.horizon)));
    const dlf::LinearBaseline ridge =
        dlf::linear_baseline_fit(ridge_train_windows, ridge_lambda);
    rows.push_back(report_row(
        "ridge", dlf::evaluate_forecaster(
                     [&](const dlf::Tensor& w) { return dlf::linear_baseline_predict(ridge, w); },
                     test_windows, stats, mcfg.horizon)));
    return json{{"windows", test_windows.size()}, {"ridge_lambda", ridge_lambda},
                {"rows", rows}};
}

int cmd_generate(const std::string& out, const dlf::LorenzConfig& cfg) {
    dlf::save_csv(out, dlf::integrate(cfg));
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const Common& common,
              const std::optional<std::string>& out_dir, double ridge_lambda) {
    dlf::RunConfig rc = dlf::load_run_config(config_path);
    if (common.seed) {
        rc.model.seed = *common.seed;
        rc.train.seed = *common.seed;
        if (rc.data.lorenz) rc.data.lorenz->seed = *common.seed;
    }
    if (out_dir) rc.output_dir = *out_dir;
    fs::create_directories(rc.output_dir);

    const dlf::MultivariateSeries series = dlf::load_series(rc.data);
    if (series.channels() != rc.model.n_channels)
        throw dlf::ContractError("train: data has " + std::to_string(series.channels()) +
                                 " channels, model config says " +
                                 std::to_string(rc.model.n_channels));

    dlf::TrainResult result = dlf::train(rc.model, series, rc.train);

    const fs::path dir(rc.output_dir);
    dlf::save_checkpoint(dir / "checkpoint.dlfm", rc.model, result.params, result.stats);

    const std::size_t epochs = result.history.train_loss.size();
    dlf::Tensor table({epochs, 3});
    for (std::size_t e = 0; e < epochs; ++e) {
        table(e, 0) = static_cast<double>(e);
        table(e, 1) = result.history.train_loss[e];
        table(e, 2) = result.history.val_loss[e];
    }
    dlf::save_table_csv(dir / "history.csv", {"epoch", "train_loss", "val_loss"}, table);

    auto splits = dlf::split_series(series, rc.train.split_ratios);
    const auto test_windows =
        dlf::make_windows(splits[2], rc.model.w_in, rc.model.horizon, rc.train.stride);
    const auto ridge_windows =
        dlf::make_windows(dlf::apply_normalizer(splits[0], result.stats), rc.model.w_in,
                          rc.model.horizon, rc.train.stride);
    json metrics;
    if (test_windows.empty()) {
        metrics = json{{"windows", 0}, {"rows", json::array()}};
    } else {
        metrics = metrics_json(rc.model, result.params, test_windows, ridge_windows,
                               result.stats, ridge_lambda);
    }
    metrics["best_epoch"] = result.history.best_epoch;
    metrics["best_val_loss"] = result.history.best_val_loss();
    dlf::atomic_write_text(dir / "metrics.json", metrics.dump(2) + "\n");

    std::cout << "best epoch " << result.history.best_epoch << ", val loss "
              << result.history.best_val_loss() << "\n"
              << "wrote " << (dir / "checkpoint.dlfm").string() << ", history.csv, metrics.json"
              << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& out_path, const std::vector<double>& split,
                 std::size_t stride, double ridge_lambda,
                 const std::vector<std::string>& channels) {
    const dlf::Checkpoint ckpt = dlf::load_checkpoint(ckpt_path);
    dlf::MultivariateSeries series = dlf::load_csv(data_path);
    if (!channels.empty()) series = dlf::select_channels(series, channels);
    if (series.channels() != ckpt.config.n_channels)
        throw dlf::ContractError("evaluate: data has " + std::to_string(series.channels()) +
                                 " channels, checkpoint expects " +
                                 std::to_string(ckpt.config.n_channels));
    if (split.size() != 3) throw dlf::ContractError("evaluate: --split needs three ratios");

    auto splits = dlf::split_series(series, {split[0], split[1], split[2]});
    const auto test_windows =
        dlf::make_windows(splits[2], ckpt.config.w_in, ckpt.config.horizon, stride);
    if (test_windows.empty())
        throw dlf::ContractError("evaluate: test split too short for a single window");
    const auto ridge_windows =
        dlf::make_windows(dlf::apply_normalizer(splits[0], ckpt.stats), ckpt.config.w_in,
                          ckpt.config.horizon, stride);

    const json metrics = metrics_json(ckpt.config, ckpt.params, test_windows, ridge_windows,
                                      ckpt.stats, ridge_lambda);
    dlf::atomic_write_text(out_path, metrics.dump(2) + "\n");
    std::cout << metrics.dump(2) << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& input_path,
                const std::string& out_path) {
    const dlf::Checkpoint ckpt = dlf::load_checkpoint(ckpt_path);
    const dlf::MultivariateSeries series = dlf::load_csv(input_path);
    if (series.channels() != ckpt.config.n_channels)
        throw dlf::ContractError("predict: input has " + std::to_string(series.channels()) +
                                 " channels, checkpoint expects " +
                                 std::to_string(ckpt.config.n_channels));
    const std::size_t w_in = ckpt.config.w_in;
    if (series.steps() < w_in)
        throw dlf::ContractError("predict: input has " + std::to_string(series.steps()) +
                                 " steps, need at least " + std::to_string(w_in));

    // Forecast from the most recent W_in steps.
    dlf::Tensor window({series.channels(), w_in});
    const std::size_t start = series.steps() - w_in;
    for (std::size_t k = 0; k < series.channels(); ++k)
        for (std::size_t t = 0; t < w_in; ++t) window(k, t) = series.at(k, start + t);

    dlf::Tensor batch = dlf::apply_normalizer(window, ckpt.stats)
                            .reshaped({1, series.channels(), w_in});
    const dlf::Tensor pred = dlf::forward(batch, ckpt.config, ckpt.params);
    dlf::Tensor forecast({series.channels(), ckpt.config.horizon});
    for (std::size_t i = 0; i < forecast.size(); ++i) forecast[i] = pred[i];

    dlf::MultivariateSeries out;
    out.channel_names = series.channel_names;
    out.dt = series.dt;
    out.values = dlf::invert_normalizer(forecast, ckpt.stats);
    dlf::save_csv(out_path, out);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_finetune(const std::string& ckpt_path, const std::string& data_path, double fraction,
                 const std::string& out_path, dlf::TrainConfig tcfg, const Common& common,
                 const std::vector<std::string>& channels) {
    if (common.seed) tcfg.seed = *common.seed;
    const dlf::Checkpoint ckpt = dlf::load_checkpoint(ckpt_path);
    dlf::MultivariateSeries series = dlf::load_csv(data_path);
    if (!channels.empty()) series = dlf::select_channels(series, channels);

    const dlf::FineTuneResult result =
        dlf::fine_tune(ckpt.config, ckpt.params, series, fraction, tcfg);
    dlf::save_checkpoint(out_path, result.cfg, result.params, result.stats);

    if (!result.history.train_loss.empty()) {
        const fs::path history_path = fs::path(out_path).replace_extension(".history.csv");
        const std::size_t epochs = result.history.train_loss.size();
        dlf::Tensor table({epochs, 3});
        for (std::size_t e = 0; e < epochs; ++e) {
            table(e, 0) = static_cast<double>(e);
            table(e, 1) = result.history.train_loss[e];
            table(e, 2) = e < result.history.val_loss.size() ? result.history.val_loss[e] : 0.0;
        }
        dlf::save_table_csv(history_path, {"epoch", "train_loss", "val_loss"}, table);
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_gradcheck(double h, double threshold, std::size_t samples, std::uint64_t seed) {
    dlf::ModelConfig cfg;
    cfg.n_channels = 2;
    cfg.w_in = 12;
    cfg.horizon = 4;
    cfg.embedding_dim = 5;  // m = 8
    cfg.p1 = 4;
    cfg.p2 = 5;
    cfg.d_model = 8;
    cfg.n_blocks = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.seed = seed;

    std::mt19937_64 rng(seed);
    const dlf::Tensor inputs = dlf::gaussian({2, cfg.n_channels, cfg.w_in}, 0.0, 1.0, rng);
    const dlf::Tensor targets = dlf::gaussian({2, cfg.n_channels, cfg.horizon}, 0.0, 1.0, rng);

    const dlf::ModelParams params = dlf::init_params(cfg);
    std::vector<dlf::Tensor> point;
    params.for_each([&](const std::string&, const dlf::Tensor& t) { point.push_back(t); });

    const auto build = [&](dlf::Tape& tape, const std::vector<dlf::Var>& vars) {
        dlf::ParamVars pv;
        pv.pe = params.pe;
        pv.ordered = vars;
        std::size_t j = 0;
        pv.patch_w = vars[j++];
        pv.patch_b = vars[j++];
        pv.blocks.resize(cfg.n_blocks);
        for (auto& b : pv.blocks) {
            b.wq = vars[j++];
            b.bq = vars[j++];
            b.wk = vars[j++];
            b.bk = vars[j++];
            b.wv = vars[j++];
            b.bv = vars[j++];
            b.wo = vars[j++];
            b.bo = vars[j++];
            b.ff1_w = vars[j++];
            b.ff1_b = vars[j++];
            b.ff2_w = vars[j++];
            b.ff2_b = vars[j++];
            b.ln1_g = vars[j++];
            b.ln1_b = vars[j++];
            b.ln2_g = vars[j++];
            b.ln2_b = vars[j++];
        }
        pv.heads.resize(cfg.n_channels);
        for (auto& hd : pv.heads) {
            hd.first = vars[j++];
            hd.second = vars[j++];
        }
        return dlf::batch_loss(tape, inputs, targets, cfg, pv);
    };

    std::mt19937_64 pick(seed + 1);
    const dlf::GradCheckReport report =
        dlf::finite_diff_gradcheck(build, point, h, samples, pick);
    std::cout << "checked " << report.coords_checked << " of "
              << params.parameter_count() << " coordinates\n"
              << "max relative error " << report.max_rel_err << " (threshold " << threshold
              << ")\n"
              << "worst: analytic " << report.worst_analytic << " vs numeric "
              << report.worst_numeric << "\n";
    return report.max_rel_err < threshold ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delay-embedding patch-transformer forecaster"};
    app.require_subcommand(1);

    // generate-lorenz
    auto* gen = app.add_subcommand("generate-lorenz", "Integrate the coupled Lorenz chain to CSV");
    dlf::LorenzConfig lorenz;
    std::string gen_out = "lorenz.csv";
    Common gen_common;
    gen->add_option("--out", gen_out, "Output CSV path");
    gen->add_option("--n-subsystems", lorenz.n_subsystems, "Coupled subsystems (3 channels each)");
    gen->add_option("--n-points", lorenz.n_points, "Recorded time points");
    gen->add_option("--sigma", lorenz.sigma, "Lorenz sigma");
    gen->add_option("--rho", lorenz.rho, "Lorenz rho");
    gen->add_option("--beta", lorenz.beta, "Lorenz beta");
    gen->add_option("--gamma", lorenz.gamma, "Chain coupling strength");
    gen->add_option("--dt", lorenz.dt, "Integration step");
    gen->add_option("--record-stride", lorenz.record_stride, "Integration steps per sample");
    gen->add_option("--noise", lorenz.noise_strength, "Gaussian noise strength");
    std::string noise_mode = "measurement";
    gen->add_option("--noise-mode", noise_mode, "measurement | process")
        ->check(CLI::IsMember({"measurement", "process"}));
    gen->add_flag("--time-varying", lorenz.time_varying, "Use sigma(t) = 10 + 0.02 t");
    gen->add_flag("--as-printed", lorenz.as_printed, "Use the -x*y damping variant");
    add_common(gen, gen_common);

    // train
    auto* train = app.add_subcommand("train", "Train from a JSON run config");
    std::string train_config;
    std::optional<std::string> train_out;
    double train_ridge_lambda = 1.0;
    Common train_common;
    train->add_option("--config", train_config, "Run config JSON")->required();
    train->add_option("--out", train_out, "Output directory (overrides config)");
    train->add_option("--ridge-lambda", train_ridge_lambda, "Ridge strength for metrics");
    add_common(train, train_common);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Score a checkpoint against a CSV series");
    std::string eval_ckpt, eval_data, eval_out = "metrics.json";
    std::vector<double> eval_split = {0.7, 0.1, 0.2};
    std::size_t eval_stride = 1;
    double eval_ridge_lambda = 1.0;
    std::vector<std::string> eval_channels;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval->add_option("--data", eval_data, "Series CSV")->required();
    eval->add_option("--out", eval_out, "Metrics JSON path");
    eval->add_option("--split", eval_split, "Train/val/test ratios")->expected(3);
    eval->add_option("--stride", eval_stride, "Window stride");
    eval->add_option("--ridge-lambda", eval_ridge_lambda, "Ridge strength");
    eval->add_option("--channels", eval_channels, "Channel subset (names)")->delimiter(',');

    // predict
    auto* predict = app.add_subcommand("predict", "Forecast from the last W_in steps of a CSV");
    std::string pred_ckpt, pred_input, pred_out = "forecast.csv";
    predict->add_option("--checkpoint", pred_ckpt, "Checkpoint path")->required();
    predict->add_option("--input", pred_input, "Input window CSV")->required();
    predict->add_option("--out", pred_out, "Forecast CSV path");

    // finetune
    auto* ft = app.add_subcommand("finetune", "Warm-start training on new data");
    std::string ft_ckpt, ft_data, ft_out = "finetuned.dlfm";
    double ft_fraction = 0.05;
    dlf::TrainConfig ft_tcfg;
    std::vector<double> ft_split = {0.7, 0.1, 0.2};
    std::vector<std::string> ft_channels;
    Common ft_common;
    ft->add_option("--checkpoint", ft_ckpt, "Base checkpoint")->required();
    ft->add_option("--data", ft_data, "New series CSV")->required();
    ft->add_option("--fraction", ft_fraction, "Fraction of training windows to use");
    ft->add_option("--out", ft_out, "Fine-tuned checkpoint path");
    ft->add_option("--learning-rate", ft_tcfg.learning_rate, "Adam learning rate");
    ft->add_option("--batch-size", ft_tcfg.batch_size, "Minibatch size");
    ft->add_option("--max-epochs", ft_tcfg.max_epochs, "Epoch cap");
    ft->add_option("--patience", ft_tcfg.patience, "Early-stop patience");
    ft->add_option("--stride", ft_tcfg.stride, "Window stride");
    ft->add_option("--split", ft_split, "Train/val/test ratios")->expected(3);
    ft->add_option("--channels", ft_channels, "Channel subset (names)")->delimiter(',');
    add_common(ft, ft_common);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check on a tiny model");
    double gc_h = 1e-5, gc_threshold = 1e-6;
    std::size_t gc_samples = 250;
    std::uint64_t gc_seed = 0;
    gc->add_option("--step", gc_h, "Central-difference step");
    gc->add_option("--threshold", gc_threshold, "Pass/fail bound on max relative error");
    gc->add_option("--samples", gc_samples, "Coordinates to sample (0 = all)");
    gc->add_option("--seed", gc_seed, "Seed for data and coordinate sampling");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit 0, any usage problem exits 2
    }

    try {
        if (gen->parsed()) {
            lorenz.noise_mode = noise_mode == "process" ? dlf::LorenzConfig::NoiseMode::process
                                                        : dlf::LorenzConfig::NoiseMode::measurement;
            if (gen_common.seed) lorenz.seed = *gen_common.seed;
            return cmd_generate(gen_out, lorenz);
        }
        if (train->parsed())
            return cmd_train(train_config, train_common, train_out, train_ridge_lambda);
        if (eval->parsed())
            return cmd_evaluate(eval_ckpt, eval_data, eval_out, eval_split, eval_stride,
                                eval_ridge_lambda, eval_channels);
        if (predict->parsed()) return cmd_predict(pred_ckpt, pred_input, pred_out);
        if (ft->parsed()) {
            if (ft_split.size() == 3) ft_tcfg.split_ratios = {ft_split[0], ft_split[1], ft_split[2]};
            return cmd_finetune(ft_ckpt, ft_data, ft_fraction, ft_out, ft_tcfg, ft_common,
                                ft_channels);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_h, gc_threshold, gc_samples, gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
