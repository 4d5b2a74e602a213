#ifndef LMSAVG_IO_HPP
#define LMSAVG_IO_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lmsavg/errors.hpp"
#include "lmsavg/moments.hpp"

namespace lmsavg {

enum class DataFormat { csv, libsvm };

/// Shortest form with at most 17 significant digits, '.' separator.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_number(std::string_view tok, std::size_t line) {
    tok = trim(tok);
    double v = 0.0;
    const char *first = tok.data();
    const char *last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        throw DataError("line " + std::to_string(line) + ": cannot parse number '" + std::string(tok) + "'");
    }
    return v;
}

inline bool skip_line(std::string_view s) {
    s = trim(s);
    return s.empty() || s.front() == '#';
}

} // namespace detail

/// Dense CSV: features..., label per line. A first line that does not parse
/// as numbers is treated as a header.
inline std::vector<Atom> read_csv_rows(std::istream &in) {
    std::vector<Atom> rows;
    std::string line;
    std::size_t lineno = 0;
    int d = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skip_line(line)) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(',');
            fields.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        std::vector<double> vals;
        try {
            for (auto f : fields) vals.push_back(detail::parse_number(f, lineno));
        } catch (const DataError &) {
            if (rows.empty() && d < 0) { // header
                d = static_cast<int>(fields.size()) - 1;
                continue;
            }
            throw;
        }
        if (vals.size() < 2) throw DataError("line " + std::to_string(lineno) + ": need at least one feature and a label");
        const int row_d = static_cast<int>(vals.size()) - 1;
        if (d < 0) d = row_d;
        if (row_d != d)
            throw DimensionError("line " + std::to_string(lineno) + ": expected " + std::to_string(d) +
                                 " features, found " + std::to_string(row_d));
        Atom a;
        a.x = Eigen::Map<const Vector>(vals.data(), row_d);
        a.y = vals.back();
        rows.push_back(std::move(a));
    }
    if (rows.empty()) throw DataError("no data rows");
    return rows;
}

/// libsvm: "label idx:val ..." with 1-based indices. The dimension is the
/// largest index seen, or `dim` when given (larger indices are an error).
inline std::vector<Atom> read_libsvm_rows(std::istream &in, std::optional<int> dim = std::nullopt) {
    std::vector<std::pair<double, std::vector<std::pair<int, double>>>> raw;
    std::string line;
    std::size_t lineno = 0;
    int max_index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skip_line(line)) continue;
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        const double y = detail::parse_number(tok, lineno);
        std::vector<std::pair<int, double>> feats;
        while (ss >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw DataError("line " + std::to_string(lineno) + ": expected idx:value, got '" + tok + "'");
            const double idx = detail::parse_number(std::string_view(tok).substr(0, colon), lineno);
            if (idx < 1 || idx != std::floor(idx))
                throw DataError("line " + std::to_string(lineno) + ": feature index must be a positive integer");
            const int i = static_cast<int>(idx);
            if (dim && i > *dim)
                throw DimensionError("line " + std::to_string(lineno) + ": feature index " + std::to_string(i) +
                                     " exceeds dimension " + std::to_string(*dim));
            max_index = std::max(max_index, i);
            feats.emplace_back(i, detail::parse_number(std::string_view(tok).substr(colon + 1), lineno));
        }
        raw.emplace_back(y, std::move(feats));
    }
    if (raw.empty()) throw DataError("no data rows");
    const int d = dim.value_or(max_index);
    if (d < 1) throw DimensionError("libsvm input has no features");
    std::vector<Atom> rows;
    rows.reserve(raw.size());
    for (auto &[y, feats] : raw) {
        Atom a;
        a.x = Vector::Zero(d);
        for (auto [i, v] : feats) a.x(i - 1) = v;
        a.y = y;
        rows.push_back(std::move(a));
    }
    return rows;
}

inline std::vector<Atom> read_rows(const std::string &path, DataFormat fmt, std::optional<int> dim = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    auto rows = fmt == DataFormat::csv ? read_csv_rows(in) : read_libsvm_rows(in, dim);
    if (dim && static_cast<int>(rows.front().x.size()) != *dim)
        throw DimensionError(path + ": expected dimension " + std::to_string(*dim) + ", found " +
                             std::to_string(rows.front().x.size()));
    return rows;
}

/// Empirical spec with residual noise (w* = least-squares fit).
inline ProblemSpec ingest(const std::string &path, DataFormat fmt, std::optional<int> dim = std::nullopt) {
    return empirical_spec(read_rows(path, fmt, dim));
}

struct IngestReport {
    int dim = 0;
    std::size_t rows = 0;
    double trace_H = 0.0;
    // Label -> row count, filled when there are at most 10 distinct labels.
    std::map<double, std::size_t> class_counts;
    std::size_t distinct_labels = 0;
};

inline IngestReport ingest_report(const ProblemSpec &spec) {
    IngestReport r;
    r.dim = spec.dim;
    r.rows = spec.atoms.size();
    std::map<double, std::size_t> counts;
    for (const Atom &a : spec.atoms) {
        r.trace_H += a.probability * a.x.squaredNorm();
        ++counts[a.y];
    }
    r.distinct_labels = counts.size();
    if (counts.size() <= 10) r.class_counts = std::move(counts);
    return r;
}

inline void write_report(std::ostream &os, const IngestReport &r) {
    os << "dimension: " << r.dim << "\n";
    os << "rows: " << r.rows << "\n";
    os << "trace_H: " << format_double(r.trace_H) << "\n";
    os << "distinct_labels: " << r.distinct_labels << "\n";
    for (auto [y, c] : r.class_counts)
        os << "class " << format_double(y) << ": " << c << " (" << format_double(double(c) / double(r.rows)) << ")\n";
}

/// Dense CSV export (features..., label) of a discrete or empirical spec, one
/// line per atom. Probabilities are not written, so only empirical specs
/// survive a round trip unchanged.
inline void write_csv_dataset(std::ostream &os, const ProblemSpec &spec) {
    if (spec.distribution == DistributionKind::gaussian) throw DataError("cannot export a Gaussian spec as rows");
    for (int j = 0; j < spec.dim; ++j) os << "x" << (j + 1) << ",";
    os << "y\n";
    for (const Atom &a : spec.atoms) {
        for (int j = 0; j < spec.dim; ++j) os << format_double(a.x(j)) << ",";
        os << format_double(a.y) << "\n";
    }
}

/// Roughly log-spaced integers in [1, n_max], strictly increasing, ending at n_max.
inline std::vector<std::int64_t> log_schedule(std::int64_t n_max, int points) {
    if (n_max < 1) throw DataError("log_schedule: n_max must be positive");
    if (points < 1) throw DataError("log_schedule: need at least one point");
    std::vector<std::int64_t> out;
    for (int i = 0; i < points; ++i) {
        const double t = points == 1 ? 1.0 : static_cast<double>(i) / (points - 1);
        const auto n = static_cast<std::int64_t>(std::llround(std::pow(static_cast<double>(n_max), t)));
        if (out.empty() || n > out.back()) out.push_back(n);
    }
    if (out.back() != n_max) out.push_back(n_max);
    return out;
}

/// Minimal CSV table: header plus rows of preformatted cells.
class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row) {
        if (row.size() != header_.size()) throw Error("CsvTable: row width does not match header");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string> &header() const { return header_; }
    const std::vector<std::vector<std::string>> &rows() const { return rows_; }

    std::string str() const {
        std::ostringstream os;
        write_line(os, header_);
        for (const auto &r : rows_) write_line(os, r);
        return os.str();
    }

  private:
    static void write_line(std::ostream &os, const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << "\n";
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Parses CSV text with a header row into column-keyed string cells.
inline CsvTable parse_csv_table(std::istream &in) {
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (detail::skip_line(line)) continue;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.emplace_back(detail::trim(cell));
        break;
    }
    if (header.empty()) throw DataError("CSV input has no header");
    CsvTable table(header);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skip_line(line)) continue;
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.emplace_back(detail::trim(cell));
        if (!line.empty() && line.back() == ',') row.emplace_back();
        if (row.size() != header.size())
            throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " cells, found " + std::to_string(row.size()));
        table.add(std::move(row));
    }
    return table;
}

} // namespace lmsavg

#endif // LMSAVG_IO_HPP
