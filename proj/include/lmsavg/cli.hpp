#ifndef LMSAVG_CLI_HPP
#define LMSAVG_CLI_HPP

// Command implementations behind the lmsavg tool. Each command takes a
// Manifest and returns its table plus any warnings; the executable only
// handles argument parsing, file output and exit codes.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmsavg/asymptotics.hpp"
#include "lmsavg/errors.hpp"
#include "lmsavg/io.hpp"
#include "lmsavg/moments.hpp"
#include "lmsavg/sampling.hpp"
#include "lmsavg/sgd_engine.hpp"
#include "lmsavg/step_size.hpp"
#include "lmsavg/svg_plot.hpp"

namespace lmsavg {

// Bad flag values or combinations; exit status 1.
class UsageError : public Error {
  public:
    using Error::Error;
};

/// Exit status for an error escaping a command: 1 usage, 3 numerical, 2 other.
inline int exit_status(const Error &e) {
    if (dynamic_cast<const UsageError *>(&e)) return 1;
    if (dynamic_cast<const NumericalError *>(&e)) return 3;
    return 2;
}

struct Manifest {
    std::string spec = "harmonic"; // identity | harmonic | scalar | rademacher
    int dim = 25;
    double sigma = 1.0;
    std::string data;              // overrides spec when set
    std::string format = "csv";    // csv | libsvm
    std::vector<std::string> gamma = {"0.5gmax"};
    std::int64_t n_max = 10000;
    int points = 20;
    int replicates = 100;
    std::string mode = "all";      // bias | variance | total | all
    std::vector<std::string> scheme;
    std::uint64_t seed = 1;
    std::string out;
    std::string input;             // plot input CSV
    unsigned threads = 0;
    std::size_t reweight_samples = 200000;
};

struct CommandOutput {
    CsvTable table{{}};
    std::vector<std::string> warnings;
};

inline DataFormat parse_format(const std::string &s) {
    if (s == "csv") return DataFormat::csv;
    if (s == "libsvm") return DataFormat::libsvm;
    throw UsageError("unknown format '" + s + "' (expected csv or libsvm)");
}

inline std::vector<Mode> parse_modes(const std::string &s) {
    if (s == "bias") return {Mode::bias};
    if (s == "variance") return {Mode::variance};
    if (s == "total") return {Mode::total};
    if (s == "all") return {Mode::bias, Mode::variance, Mode::total};
    throw UsageError("unknown mode '" + s + "' (expected bias, variance, total or all)");
}

/// Synthetic specs use w* = (1, ..., 1) and w0 = 0.
inline ProblemSpec resolve_spec(const Manifest &mf) {
    if (!mf.data.empty()) return ingest(mf.data, parse_format(mf.format));
    const int d = mf.dim;
    if (d < 1 || d > kMaxDim) throw UsageError("--dim must lie in [1, " + std::to_string(kMaxDim) + "]");
    if (mf.sigma < 0.0) throw UsageError("--sigma must be nonnegative");
    const Vector ones = Vector::Ones(d), zero = Vector::Zero(d);
    if (mf.spec == "identity") return gaussian_spec(SymMatrix::identity(d), ones, zero, mf.sigma);
    if (mf.spec == "harmonic") return harmonic_gaussian_spec(d, mf.sigma, ones, zero);
    if (mf.spec == "scalar") {
        std::vector<Atom> atoms{{Vector::Ones(1), 0.0, 1.0}};
        return discrete_spec(std::move(atoms), Vector::Ones(1), Vector::Zero(1), mf.sigma);
    }
    if (mf.spec == "rademacher") {
        if (d > 16) throw UsageError("rademacher spec enumerates 2^d atoms; --dim must be at most 16");
        std::vector<Atom> atoms;
        const std::int64_t count = std::int64_t{1} << d;
        for (std::int64_t mask = 0; mask < count; ++mask) {
            Atom a;
            a.x.resize(d);
            for (int j = 0; j < d; ++j) a.x(j) = (mask >> j) & 1 ? 1.0 : -1.0;
            a.probability = 1.0 / static_cast<double>(count);
            atoms.push_back(std::move(a));
        }
        return discrete_spec(std::move(atoms), ones, zero, mf.sigma);
    }
    throw UsageError("unknown spec '" + mf.spec + "' (expected identity, harmonic, scalar or rademacher)");
}

/// A sampling scheme resolved against a spec: the spec LMS actually runs on,
/// the sampler and the moments it induces.
struct SchemeSetup {
    std::string name;
    ProblemSpec spec;
    SamplingScheme scheme;
    MomentSet moments;
};

inline SchemeSetup resolve_scheme(const std::string &name, const ProblemSpec &spec, const Manifest &mf) {
    ReweightOptions opt;
    opt.gaussian_samples = mf.reweight_samples;
    opt.seed = mf.seed;
    SchemeSetup s;
    s.name = name;
    s.spec = spec;
    if (name == "uniform") {
        s.scheme = uniform_scheme();
    } else if (name == "bias-opt") {
        s.scheme = optimal_bias_scheme(spec);
    } else if (name == "variance-opt") {
        s.scheme = optimal_variance_scheme(spec);
    } else if (name == "class-weighted") {
        const auto weights = inverse_class_frequency_weights(spec);
        s.spec = class_weighted_spec(spec, weights);
        s.scheme = class_balancing_scheme(spec, weights);
    } else {
        throw UsageError("unknown scheme '" + name + "' (expected uniform, bias-opt, variance-opt or class-weighted)");
    }
    s.moments = scheme_moments(s.spec, s.scheme, opt);
    return s;
}

/// "0.05" is absolute; "0.5gmax" is a fraction of the given gamma_max.
inline double resolve_gamma(const std::string &token, double gmax) {
    std::string t = token;
    bool relative = false;
    if (t.size() > 4 && t.compare(t.size() - 4, 4, "gmax") == 0) {
        relative = true;
        t.resize(t.size() - 4);
    }
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception &) {
        throw UsageError("cannot parse step-size '" + token + "'");
    }
    if (!(v > 0.0)) throw UsageError("step-size '" + token + "' must be positive");
    if (!relative) return v;
    if (!std::isfinite(gmax)) throw NumericalError("gamma_max is infinite; give an absolute step-size");
    return v * gmax;
}

inline std::vector<std::string> schemes_or(const Manifest &mf, std::vector<std::string> fallback) {
    return mf.scheme.empty() ? fallback : mf.scheme;
}

inline std::vector<std::int64_t> schedule(const Manifest &mf) { return log_schedule(mf.n_max, mf.points); }

inline CommandOutput cmd_gamma_max(const Manifest &mf) {
    const ProblemSpec spec = resolve_spec(mf);
    CommandOutput out;
    out.table = CsvTable({"scheme", "gamma_max", "gamma_max_det", "trace_bound", "mu", "mu_T_at_half_gamma_max"});
    for (const auto &name : schemes_or(mf, {"uniform", "bias-opt"})) {
        const SchemeSetup s = resolve_scheme(name, spec, mf);
        const double g = gamma_max(s.moments);
        const double mt = std::isfinite(g) ? mu_T(s.moments, 0.5 * g) : std::numeric_limits<double>::quiet_NaN();
        out.table.add({name, format_double(g), format_double(gamma_max_det(s.moments)),
                       format_double(trace_bound(s.moments)), format_double(s.moments.mu), format_double(mt)});
    }
    return out;
}

inline CommandOutput cmd_run(const Manifest &mf) {
    const ProblemSpec spec = resolve_spec(mf);
    if (mf.replicates < 1) throw UsageError("--replicates must be positive");
    const auto modes = parse_modes(mf.mode);
    const auto ns = schedule(mf);
    CommandOutput out;
    out.table = CsvTable({"n", "gamma", "scheme", "mode", "risk", "stderr", "diverged"});
    for (const auto &name : schemes_or(mf, {"uniform"})) {
        const SchemeSetup s = resolve_scheme(name, spec, mf);
        const double gmax = gamma_max(s.moments);
        for (const auto &token : mf.gamma) {
            const double g = resolve_gamma(token, gmax);
            for (Mode mode : modes) {
                RunConfig cfg;
                cfg.gamma = g;
                cfg.n = ns.back();
                cfg.replicates = mf.replicates;
                cfg.mode = mode;
                cfg.seed = mf.seed;
                cfg.record_at = ns;
                cfg.threads = mf.threads;
                const Trajectory t = run_averaged_lms(s.spec, cfg, s.scheme);
                if (t.diverged)
                    out.warnings.push_back("scheme " + name + ", gamma " + format_double(g) + ", mode " +
                                           to_string(mode) + ": divergence, trajectory truncated");
                for (std::size_t i = 0; i < t.iterations.size(); ++i)
                    out.table.add({std::to_string(t.iterations[i]), format_double(g), name, to_string(mode),
                                   format_double(t.risk[i]), format_double(t.standard_error[i]),
                                   t.diverged ? "1" : "0"});
            }
        }
    }
    return out;
}

/// Closed-form curves under uniform sampling. Risk columns are Tr(H Delta);
/// bound columns are ||H||_F times the Frobenius remainder bounds, which
/// bound |Tr(H (exact - leading))|.
inline CommandOutput cmd_predict(const Manifest &mf) {
    const ProblemSpec spec = resolve_spec(mf);
    const MomentSet m = compute_moments(spec);
    const double gmax = gamma_max(m);
    const double hnorm = m.H.frobenius_norm();
    const auto ns = schedule(mf);
    CommandOutput out;
    out.table = CsvTable({"n", "gamma", "bias_exact", "bias_leading", "bias_bound", "variance_exact",
                          "variance_leading", "variance_bound", "small_gamma_bias", "small_gamma_variance"});
    for (const auto &token : mf.gamma) {
        const double g = resolve_gamma(token, gmax);
        if (!(g < gmax))
            out.warnings.push_back("gamma " + format_double(g) + " >= gamma_max " + format_double(gmax) +
                                   ": leading-term and bound columns left empty");
        const auto reports = covariance_reports(m, g, ns);
        auto opt = [](const std::optional<double> &v, double scale = 1.0) {
            return v ? format_double(scale * *v) : std::string();
        };
        for (const auto &r : reports)
            out.table.add({std::to_string(r.n), format_double(g), format_double(r.bias_risk_exact),
                           opt(r.bias_risk_leading), opt(r.bias_remainder_bound, hnorm),
                           format_double(r.variance_risk_exact), opt(r.variance_risk_leading),
                           opt(r.variance_remainder_bound, hnorm), format_double(r.small_gamma_bias),
                           format_double(r.small_gamma_variance)});
    }
    return out;
}

/// Scheme comparison. variance_gain is the ratio of small-step variance
/// limits Tr(H^-1 Sigma0) under the scheme and under uniform sampling;
/// variance_gain_bound is E[sqrt(X^T X)]^2 / E[X^T X]. Measured risks are
/// total-mode Monte Carlo estimates with a shared seed across schemes, and
/// relative step-sizes refer to each scheme's own gamma_max.
inline CommandOutput cmd_sampling(const Manifest &mf) {
    const ProblemSpec spec = resolve_spec(mf);
    if (mf.replicates < 1) throw UsageError("--replicates must be positive");
    const auto ns = schedule(mf);
    const MomentSet base = compute_moments(spec);
    const double base_gmax = gamma_max(base);
    const double base_var = frobenius_inner(base.H_inv, base.Sigma0);
    const double gain_bound = variance_gain(spec);
    CommandOutput out;
    out.table = CsvTable({"scheme", "variance_gain", "variance_gain_bound", "gamma_max", "predicted_bias_gain",
                          "gamma", "n", "risk", "stderr"});
    for (const auto &name : schemes_or(mf, {"uniform", "bias-opt", "variance-opt"})) {
        std::optional<SchemeSetup> s;
        try {
            s = resolve_scheme(name, spec, mf);
        } catch (const DataError &e) {
            if (name != "variance-opt") throw;
            out.warnings.push_back(std::string("variance-opt row omitted: ") + e.what());
            continue;
        }
        const double gmax = gamma_max(s->moments);
        const double var = frobenius_inner(s->moments.H_inv, s->moments.Sigma0);
        const std::string vg = base_var > 0.0 ? format_double(var / base_var) : "nan";
        const std::string bg = format_double(bias_gain(base_gmax, gmax));
        for (const auto &token : mf.gamma) {
            const double g = resolve_gamma(token, gmax);
            RunConfig cfg;
            cfg.gamma = g;
            cfg.n = ns.back();
            cfg.replicates = mf.replicates;
            cfg.mode = Mode::total;
            cfg.seed = mf.seed;
            cfg.record_at = ns;
            cfg.threads = mf.threads;
            const Trajectory t = run_averaged_lms(s->spec, cfg, s->scheme);
            if (t.diverged) out.warnings.push_back("scheme " + name + ": divergence, trajectory truncated");
            for (std::size_t i = 0; i < t.iterations.size(); ++i)
                out.table.add({name, vg, format_double(gain_bound), format_double(gmax), bg, format_double(g),
                               std::to_string(t.iterations[i]), format_double(t.risk[i]),
                               format_double(t.standard_error[i])});
        }
    }
    return out;
}

/// Series for a run, sampling or predict CSV.
inline std::vector<PlotSeries> plot_series(const CsvTable &table) {
    const auto &h = table.header();
    auto col = [&](const std::string &name) -> int {
        for (std::size_t i = 0; i < h.size(); ++i)
            if (h[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int n_col = col("n");
    if (n_col < 0) throw DataError("plot: input CSV has no 'n' column");
    std::vector<PlotSeries> series;
    auto add_point = [&](const std::string &key, double x, const std::string &cell) {
        if (cell.empty()) return;
        double y = 0.0;
        try {
            y = std::stod(cell);
        } catch (const std::exception &) {
            return;
        }
        auto it = std::find_if(series.begin(), series.end(), [&](const PlotSeries &s) { return s.key == key; });
        if (it == series.end()) {
            series.push_back({key, {}});
            it = series.end() - 1;
        }
        it->points.emplace_back(x, y);
    };
    // Line numbers in errors count the header as line 1.
    auto n_of = [&](std::size_t i) { return detail::parse_number(table.rows()[i][n_col], i + 2); };
    const int risk = col("risk");
    if (risk >= 0) {
        std::vector<int> key_cols;
        for (const char *k : {"scheme", "mode", "gamma"})
            if (col(k) >= 0) key_cols.push_back(col(k));
        for (std::size_t i = 0; i < table.rows().size(); ++i) {
            const auto &row = table.rows()[i];
            std::string key;
            for (int k : key_cols) key += (key.empty() ? "" : " ") + h[k] + "=" + row[k];
            add_point(key.empty() ? "risk" : key, n_of(i), row[risk]);
        }
        return series;
    }
    const std::vector<std::string> curves = {"bias_exact", "variance_exact", "bias_leading", "variance_leading"};
    if (col("bias_exact") < 0) throw DataError("plot: input CSV needs a 'risk' or 'bias_exact' column");
    const int g = col("gamma");
    for (std::size_t i = 0; i < table.rows().size(); ++i)
        for (const auto &c : curves) {
            const int k = col(c);
            if (k < 0) continue;
            const auto &row = table.rows()[i];
            add_point(c + (g >= 0 ? " gamma=" + row[g] : ""), n_of(i), row[k]);
        }
    return series;
}

inline std::string cmd_plot(std::istream &csv, const std::string &title = {}) {
    const CsvTable table = parse_csv_table(csv);
    PlotOptions opt;
    opt.title = title;
    return render_loglog_svg(plot_series(table), opt);
}

struct IngestOutput {
    std::string report;
    std::string csv;
};

inline IngestOutput cmd_ingest(const Manifest &mf) {
    if (mf.data.empty()) throw UsageError("ingest needs --data");
    const ProblemSpec spec = ingest(mf.data, parse_format(mf.format));
    IngestOutput out;
    std::ostringstream report, csv;
    write_report(report, ingest_report(spec));
    write_csv_dataset(csv, spec);
    out.report = report.str();
    out.csv = csv.str();
    return out;
}

} // namespace lmsavg

#endif // LMSAVG_CLI_HPP
