#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delayformer/lorenz.hpp"
#include "delayformer/model.hpp"
#include "delayformer/pipeline.hpp"

namespace delayformer {

/// Where the series comes from: an on-disk CSV or the built-in generator.
/// Exactly one source must be configured. `channels` optionally restricts
/// the series to a named subset, in the order given.
struct DataConfig {
    std::optional<std::string> csv_path;
    std::optional<LorenzConfig> lorenz;
    std::vector<std::string> channels;
};

/// One training run, as declared by a JSON document:
///   { "model": {...}, "train": {...}, "data": {...}, "output_dir": "..." }
/// "model" and "data" are required; "train" and "output_dir" fall back to
/// defaults. Unknown keys anywhere are rejected.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    std::string output_dir = ".";
};

/// Throws ParseError naming the offending key on unknown keys, missing
/// required keys, or type mismatches.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Materializes the configured series (loads the CSV or runs the generator),
/// then applies the channel subset if any.
MultivariateSeries load_series(const DataConfig& data);

/// Restriction to a named channel subset, preserving the requested order.
/// Throws ContractError when a name is missing.
MultivariateSeries select_channels(const MultivariateSeries& series,
                                   const std::vector<std::string>& names);

}  // namespace delayformer
