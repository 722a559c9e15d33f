#include "delayformer/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "delayformer/errors.hpp"

namespace delayformer {

std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

MultivariateSeries load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    MultivariateSeries series;
    series.channel_names = split_fields(strip_cr(line));
    const std::size_t n = series.channel_names.size();

    std::vector<double> data;  // time-major while reading
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != n)
            throw ParseError(path.string() + ": row " + std::to_string(lineno) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(n));
        for (const std::string& f : fields) {
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
                throw ParseError(path.string() + ": row " + std::to_string(lineno) +
                                 ": not a number: '" + f + "'");
            if (!std::isfinite(v))
                throw ParseError(path.string() + ": row " + std::to_string(lineno) +
                                 ": non-finite value");
            data.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw ParseError(path.string() + ": no data rows");

    series.values = Tensor({n, rows});
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t k = 0; k < n; ++k) series.values(k, t) = data[t * n + k];
    series.validate();
    return series;
}

void save_csv(const std::filesystem::path& path, const MultivariateSeries& series) {
    series.validate();
    std::string out;
    for (std::size_t k = 0; k < series.channels(); ++k) {
        if (k > 0) out += ',';
        out += series.channel_names[k];
    }
    out += '\n';
    for (std::size_t t = 0; t < series.steps(); ++t) {
        for (std::size_t k = 0; k < series.channels(); ++k) {
            if (k > 0) out += ',';
            out += format_double(series.at(k, t));
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

void save_table_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                    const Tensor& rows) {
    if (rows.rank() != 2 || rows.cols() != columns.size())
        throw DimensionError("save_table_csv: " + std::to_string(columns.size()) +
                             " columns for table " + rows.shape_str());
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (c > 0) out += ',';
        out += columns[c];
    }
    out += '\n';
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        for (std::size_t c = 0; c < rows.cols(); ++c) {
            if (c > 0) out += ',';
            out += format_double(rows(r, c));
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

}  // namespace delayformer
