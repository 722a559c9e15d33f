#include "delayformer/run_config.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "delayformer/csv.hpp"
#include "delayformer/errors.hpp"

namespace delayformer {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    const std::unordered_set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items())
        if (!ok.contains(key))
            throw ParseError("config: unknown key '" + where + key + "'");
}

template <typename T>
T get_field(const json& obj, const std::string& where, const char* key, const T& fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError("config: bad value for '" + where + key + "'");
    }
}

template <typename T>
T require_field(const json& obj, const std::string& where, const char* key) {
    if (!obj.contains(key)) throw ParseError("config: missing key '" + where + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError("config: bad value for '" + where + key + "'");
    }
}

ModelConfig parse_model(const json& obj) {
    reject_unknown(obj, "model.",
                   {"n_channels", "w_in", "horizon", "embedding_dim", "p1", "p2", "d_model",
                    "n_blocks", "n_heads", "d_ff", "seed"});
    ModelConfig m;
    m.n_channels = require_field<std::size_t>(obj, "model.", "n_channels");
    m.w_in = require_field<std::size_t>(obj, "model.", "w_in");
    m.horizon = require_field<std::size_t>(obj, "model.", "horizon");
    m.embedding_dim = require_field<std::size_t>(obj, "model.", "embedding_dim");
    m.p1 = require_field<std::size_t>(obj, "model.", "p1");
    m.p2 = require_field<std::size_t>(obj, "model.", "p2");
    m.d_model = require_field<std::size_t>(obj, "model.", "d_model");
    m.n_blocks = require_field<std::size_t>(obj, "model.", "n_blocks");
    m.n_heads = require_field<std::size_t>(obj, "model.", "n_heads");
    m.d_ff = require_field<std::size_t>(obj, "model.", "d_ff");
    m.seed = get_field<std::uint64_t>(obj, "model.", "seed", 0);
    return m;
}

TrainConfig parse_train(const json& obj) {
    reject_unknown(obj, "train.",
                   {"learning_rate", "batch_size", "max_epochs", "patience", "stride", "seed",
                    "split_ratios"});
    TrainConfig t;
    t.learning_rate = get_field<double>(obj, "train.", "learning_rate", t.learning_rate);
    t.batch_size = get_field<std::size_t>(obj, "train.", "batch_size", t.batch_size);
    t.max_epochs = get_field<std::size_t>(obj, "train.", "max_epochs", t.max_epochs);
    t.patience = get_field<std::size_t>(obj, "train.", "patience", t.patience);
    t.stride = get_field<std::size_t>(obj, "train.", "stride", t.stride);
    t.seed = get_field<std::uint64_t>(obj, "train.", "seed", t.seed);
    if (obj.contains("split_ratios")) {
        const auto r = require_field<std::vector<double>>(obj, "train.", "split_ratios");
        if (r.size() != 3)
            throw ParseError("config: 'train.split_ratios' needs exactly 3 entries");
        t.split_ratios = {r[0], r[1], r[2]};
    }
    return t;
}

LorenzConfig parse_lorenz(const json& obj) {
    reject_unknown(obj, "data.lorenz.",
                   {"n_subsystems", "sigma", "rho", "beta", "gamma", "dt", "record_stride",
                    "n_points", "noise_strength", "noise_mode", "time_varying", "as_printed",
                    "seed"});
    LorenzConfig c;
    c.n_subsystems = get_field<std::size_t>(obj, "data.lorenz.", "n_subsystems", c.n_subsystems);
    c.sigma = get_field<double>(obj, "data.lorenz.", "sigma", c.sigma);
    c.rho = get_field<double>(obj, "data.lorenz.", "rho", c.rho);
    c.beta = get_field<double>(obj, "data.lorenz.", "beta", c.beta);
    c.gamma = get_field<double>(obj, "data.lorenz.", "gamma", c.gamma);
    c.dt = get_field<double>(obj, "data.lorenz.", "dt", c.dt);
    c.record_stride = get_field<std::size_t>(obj, "data.lorenz.", "record_stride",
                                             c.record_stride);
    c.n_points = get_field<std::size_t>(obj, "data.lorenz.", "n_points", c.n_points);
    c.noise_strength = get_field<double>(obj, "data.lorenz.", "noise_strength",
                                         c.noise_strength);
    const std::string mode =
        get_field<std::string>(obj, "data.lorenz.", "noise_mode", "measurement");
    if (mode == "measurement")
        c.noise_mode = LorenzConfig::NoiseMode::measurement;
    else if (mode == "process")
        c.noise_mode = LorenzConfig::NoiseMode::process;
    else
        throw ParseError("config: 'data.lorenz.noise_mode' must be 'measurement' or 'process'");
    c.time_varying = get_field<bool>(obj, "data.lorenz.", "time_varying", c.time_varying);
    c.as_printed = get_field<bool>(obj, "data.lorenz.", "as_printed", c.as_printed);
    c.seed = get_field<std::uint64_t>(obj, "data.lorenz.", "seed", c.seed);
    return c;
}

DataConfig parse_data(const json& obj) {
    reject_unknown(obj, "data.", {"csv", "lorenz", "channels"});
    DataConfig d;
    if (obj.contains("csv")) d.csv_path = require_field<std::string>(obj, "data.", "csv");
    if (obj.contains("lorenz")) {
        if (!obj.at("lorenz").is_object())
            throw ParseError("config: 'data.lorenz' must be an object");
        d.lorenz = parse_lorenz(obj.at("lorenz"));
    }
    if (d.csv_path.has_value() == d.lorenz.has_value())
        throw ParseError("config: 'data' needs exactly one of 'csv' or 'lorenz'");
    d.channels = get_field<std::vector<std::string>>(obj, "data.", "channels", {});
    return d;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("config: top level must be an object");
    reject_unknown(doc, "", {"model", "train", "data", "output_dir"});

    RunConfig rc;
    if (!doc.contains("model")) throw ParseError("config: missing key 'model'");
    rc.model = parse_model(doc.at("model"));
    if (doc.contains("train")) rc.train = parse_train(doc.at("train"));
    if (!doc.contains("data")) throw ParseError("config: missing key 'data'");
    rc.data = parse_data(doc.at("data"));
    rc.output_dir = get_field<std::string>(doc, "", "output_dir", rc.output_dir);
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

MultivariateSeries select_channels(const MultivariateSeries& series,
                                   const std::vector<std::string>& names) {
    MultivariateSeries out;
    out.dt = series.dt;
    out.channel_names = names;
    out.values = Tensor({names.size(), series.steps()});
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::size_t src = series.channels();
        for (std::size_t k = 0; k < series.channels(); ++k)
            if (series.channel_names[k] == names[i]) {
                src = k;
                break;
            }
        if (src == series.channels())
            throw ContractError("select_channels: no channel named '" + names[i] + "'");
        for (std::size_t t = 0; t < series.steps(); ++t) out.values(i, t) = series.at(src, t);
    }
    out.validate();
    return out;
}

MultivariateSeries load_series(const DataConfig& data) {
    MultivariateSeries series;
    if (data.csv_path)
        series = load_csv(*data.csv_path);
    else if (data.lorenz)
        series = integrate(*data.lorenz);
    else
        throw ContractError("load_series: no data source configured");
    if (!data.channels.empty()) series = select_channels(series, data.channels);
    return series;
}

}  // namespace delayformer
