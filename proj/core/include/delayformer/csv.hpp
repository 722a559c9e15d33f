#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "delayformer/series.hpp"
#include "delayformer/tensor.hpp"

namespace delayformer {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

/// Writes content to path via a temp file and rename, so readers never see a
/// partial file. Throws IoError on failure.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

///// Reads a series from CSV: first row channel names, each later row one time
/// step. Throws IoError when unreadable; ParseError (naming the 1-based row)
/// on ragged rows, non-numeric cells or non-finite values.
MultivariateSeries load_csv(const std::filesystem::path& path);

/// Inverse of load_csv; written atomically (temp file + rename).
void save_csv(const std::filesystem::path& path, const MultivariateSeries& series);

/// Generic numeric table with one header row; `rows` is R x C. Used for
/// training histories and forecasts. Atomic like save_csv.
void save_table_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                    const Tensor& rows);

}  // namespace delayformer
