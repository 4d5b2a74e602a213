#ifndef LMSAVG_SGD_ENGINE_HPP
#define LMSAVG_SGD_ENGINE_HPP

// Monte Carlo simulation of averaged LMS.
//
// Each replicate r draws its inputs from stream 0 and its independent noise
// from stream 1 of derive_seed(seed, r, .), so bias, variance and total runs
// with the same seed share their X sequences. Replicates are reduced in index
// order, which makes results independent of the number of worker threads.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lmsavg/asymptotics.hpp"
#include "lmsavg/errors.hpp"
#include "lmsavg/moments.hpp"
#include "lmsavg/rng.hpp"
#include "lmsavg/sampling.hpp"

namespace lmsavg {

enum class Mode { bias, variance, total };

inline const char *to_string(Mode m) {
    switch (m) {
    case Mode::bias: return "bias";
    case Mode::variance: return "variance";
    case Mode::total: return "total";
    }
    return "?";
}

struct RunConfig {
    double gamma = 0.0;
    std::int64_t n = 1;
    int replicates = 1;
    Mode mode = Mode::total;
    std::uint64_t seed = 0;
    std::int64_t record_stride = 1;
    // Explicit recording points (strictly increasing, <= n); overrides the stride.
    std::vector<std::int64_t> record_at;
    // 0 picks std::thread::hardware_concurrency().
    unsigned threads = 0;
};

struct Trajectory {
    std::vector<std::int64_t> iterations;
    std::vector<double> risk;
    std::vector<double> standard_error;
    Mode mode = Mode::total;
    // Set when some replicate left the stable range; the lists stop at the
    // last point every replicate reached.
    bool diverged = false;
};

/// One update w - gamma x (x^T w - y).
inline Vector lms_step(const Vector &w, const Vector &x, double y, double gamma) {
    detail::require_dim(w.size() == x.size(), "lms_step: dimension mismatch");
    return w - gamma * (x.dot(w) - y) * x;
}

/// A draw from q: raw (x, eps) and the weight c = dp/dq at that point.
struct Sample {
    Vector x;
    double eps = 0.0;
    double c = 1.0;
};

/// Exact sampler for p (uniform scheme) or q = p c^-1 for a scheme.
class SampleSource {
  public:
    SampleSource(const ProblemSpec &spec, const SamplingScheme &scheme) : spec_(spec), kind_(scheme.kind) {
        validate(spec);
        d_ = spec.dim;
        if (spec.distribution != DistributionKind::gaussian) {
            validate_scheme(spec, scheme);
            std::vector<double> q;
            for (const Atom &a : spec.atoms) {
                const double ci = kind_ == SchemeKind::uniform ? 1.0 : scheme.c_inverse(a.x, a.y);
                // Atoms with X = 0 never move the iterate; they are skipped by q.
                const bool skip = kind_ != SchemeKind::uniform && a.x.squaredNorm() == 0.0;
                q.push_back(skip ? 0.0 : a.probability * ci);
                weight_.push_back(ci > 0.0 ? 1.0 / ci : 0.0);
            }
            atoms_ = std::discrete_distribution<std::size_t>(q.begin(), q.end());
            return;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(spec.covariance.matrix());
        lambda_ = es.eigenvalues().cwiseMax(0.0);
        root_ = es.eigenvectors() * lambda_.cwiseSqrt().asDiagonal();
        switch (kind_) {
        case SchemeKind::uniform: break;
        case SchemeKind::bias_optimal:
            mixture_ = std::discrete_distribution<int>(lambda_.data(), lambda_.data() + d_);
            trace_ = lambda_.sum();
            break;
        case SchemeKind::variance_optimal: chi_norm_ = detail::chi_mean(d_); break;
        default: throw DataError("scheme " + scheme.name + " has no exact sampler for Gaussian designs");
        }
    }

    int dim() const { return d_; }

    void draw(Rng &x_rng, Rng &eps_rng, Sample &s) {
        s.x.resize(d_);
        if (spec_.distribution != DistributionKind::gaussian) {
            const std::size_t k = atoms_(x_rng);
            const Atom &a = spec_.atoms[k];
            s.x = a.x;
            s.c = kind_ == SchemeKind::uniform ? 1.0 : weight_[k];
            s.eps = spec_.noise == NoiseKind::residual ? spec_.residual(a) : spec_.sigma * normal_(eps_rng);
            return;
        }
        Vector z(d_);
        switch (kind_) {
        case SchemeKind::bias_optimal: {
            // q(z) is proportional to phi(z) sum_i lambda_i z_i^2: pick i with
            // probability lambda_i / Tr H, then z_i has density z^2 phi(z).
            const int i = mixture_(x_rng);
            for (int k = 0; k < d_; ++k) z(k) = normal_(x_rng);
            z(i) = chi(3, x_rng) * (coin_(x_rng) ? 1.0 : -1.0);
            const double xx = (lambda_.array() * z.array().square()).sum();
            s.c = trace_ / xx;
            break;
        }
        case SchemeKind::variance_optimal: {
            // q(z) proportional to ||z|| phi(z): radius chi_{d+1}, uniform direction.
            for (int k = 0; k < d_; ++k) z(k) = normal_(x_rng);
            const double r = chi(d_ + 1, x_rng);
            z *= r / z.norm();
            s.c = chi_norm_ / r;
            break;
        }
        default:
            for (int k = 0; k < d_; ++k) z(k) = normal_(x_rng);
            s.c = 1.0;
        }
        s.x.noalias() = root_ * z;
        s.eps = spec_.sigma * normal_(eps_rng);
    }

  private:
    double chi(int dof, Rng &rng) {
        std::chi_squared_distribution<double> chi2(dof);
        return std::sqrt(chi2(rng));
    }

    const ProblemSpec &spec_;
    SchemeKind kind_;
    int d_ = 0;
    std::discrete_distribution<std::size_t> atoms_;
    std::vector<double> weight_;
    Vector lambda_;
    Matrix root_;
    std::discrete_distribution<int> mixture_;
    double trace_ = 0.0;
    double chi_norm_ = 0.0;
    std::normal_distribution<double> normal_;
    std::bernoulli_distribution coin_;
};

/// Finite stream of importance-sampled pairs (X', Y') = sqrt(c) (X, Y), (X, Y) ~ q.
inline std::vector<std::pair<Vector, double>> importance_sampled_stream(const ProblemSpec &spec,
                                                                        const SamplingScheme &scheme,
                                                                        std::uint64_t seed, std::int64_t count) {
    SampleSource src(spec, scheme);
    Rng xr = make_rng(seed, 0, 0), er = make_rng(seed, 0, 1);
    std::vector<std::pair<Vector, double>> out;
    out.reserve(static_cast<std::size_t>(count));
    Sample s;
    for (std::int64_t i = 0; i < count; ++i) {
        src.draw(xr, er, s);
        const double root = std::sqrt(s.c);
        out.emplace_back(root * s.x, root * (s.x.dot(spec.w_star) - s.eps));
    }
    return out;
}

namespace detail {

inline std::vector<std::int64_t> record_points(const RunConfig &cfg) {
    if (!(cfg.gamma > 0.0)) throw DataError("run: gamma must be positive");
    if (cfg.n < 1) throw DataError("run: n must be at least 1");
    if (cfg.replicates < 1) throw DataError("run: replicates must be at least 1");
    if (!cfg.record_at.empty()) {
        check_schedule(cfg.record_at);
        if (cfg.record_at.back() > cfg.n) throw DataError("run: recording point beyond n");
        return cfg.record_at;
    }
    if (cfg.record_stride < 1) throw DataError("run: record_stride must be positive");
    std::vector<std::int64_t> pts;
    for (std::int64_t k = cfg.record_stride; k <= cfg.n; k += cfg.record_stride) pts.push_back(k);
    if (pts.empty() || pts.back() != cfg.n) pts.push_back(cfg.n);
    return pts;
}

inline constexpr double kDivergenceNorm = 1e12;

// Per-replicate update rule: given (w, raw sample, y = x^T w* - eps), update w.
using UpdateRule = std::function<void(Vector &w, const Sample &s, double y, std::int64_t i)>;

struct ReplicateResult {
    std::vector<double> risk; // shorter than the schedule if diverged
};

inline Trajectory run_replicates(const ProblemSpec &spec, const SamplingScheme &scheme, const RunConfig &cfg,
                                 const UpdateRule &update) {
    const auto points = record_points(cfg);
    const MomentSet m = compute_moments(spec);
    const Matrix &h = m.H.matrix();
    const std::int64_t last = points.back();
    const Vector w_start = cfg.mode == Mode::variance ? spec.w_star : spec.w0;
    const bool noisy = cfg.mode != Mode::bias;

    std::vector<ReplicateResult> results(static_cast<std::size_t>(cfg.replicates));
    auto work = [&](int r) {
        SampleSource src(spec, scheme);
        Rng xr = make_rng(cfg.seed, static_cast<std::uint64_t>(r), 0);
        Rng er = make_rng(cfg.seed, static_cast<std::uint64_t>(r), 1);
        Vector w = w_start, wbar = w_start;
        Sample s;
        auto &out = results[static_cast<std::size_t>(r)].risk;
        out.reserve(points.size());
        std::size_t next = 0;
        auto record = [&](std::int64_t n) {
            if (next < points.size() && points[next] == n) {
                const Vector e = wbar - spec.w_star;
                out.push_back(e.dot(h * e));
                ++next;
            }
        };
        record(1);
        for (std::int64_t k = 1; k < last; ++k) {
            src.draw(xr, er, s);
            const double y = s.x.dot(spec.w_star) - (noisy ? s.eps : 0.0);
            update(w, s, y, k);
            const double norm = w.norm();
            if (!std::isfinite(norm) || norm > kDivergenceNorm) return;
            // Running mean of w_0, ..., w_k.
            wbar += (w - wbar) / static_cast<double>(k + 1);
            record(k + 1);
        }
    };

    unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.replicates));
    if (workers <= 1) {
        for (int r = 0; r < cfg.replicates; ++r) work(r);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (int r = static_cast<int>(t); r < cfg.replicates; r += static_cast<int>(workers)) work(r);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto &th : pool) th.join();
        for (auto &e : errors)
            if (e) std::rethrow_exception(e);
    }

    Trajectory traj;
    traj.mode = cfg.mode;
    std::size_t reached = points.size();
    for (const auto &r : results) reached = std::min(reached, r.risk.size());
    traj.diverged = reached < points.size();
    const double reps = cfg.replicates;
    for (std::size_t i = 0; i < reached; ++i) {
        double sum = 0.0;
        for (const auto &r : results) sum += r.risk[i];
        const double mean = sum / reps;
        double ss = 0.0;
        for (const auto &r : results) ss += (r.risk[i] - mean) * (r.risk[i] - mean);
        const double var = reps > 1 ? ss / (reps - 1) : 0.0;
        traj.iterations.push_back(points[i]);
        traj.risk.push_back(mean);
        traj.standard_error.push_back(std::sqrt(var / reps));
    }
    return traj;
}

} // namespace detail

/// Averaged LMS with samples from `scheme` (importance weights applied as sqrt(c) scaling).
/// Risk at n is (w_bar_n - w*)^T H (w_bar_n - w*) for the mean of w_0, ..., w_{n-1}.
inline Trajectory run_averaged_lms(const ProblemSpec &spec, const RunConfig &cfg,
                                   const SamplingScheme &scheme = uniform_scheme()) {
    const double g = cfg.gamma;
    return detail::run_replicates(spec, scheme, cfg, [g](Vector &w, const Sample &s, double y, std::int64_t) {
        // With x' = sqrt(c) x and y' = sqrt(c) y the step is gamma c x (x^T w - y).
        w.noalias() -= (g * s.c * (s.x.dot(w) - y)) * s.x;
    });
}

/// w - (x^T w - y) x / (x^T x) on draws from the X^T X-proportional density,
/// with averaging. Matches run_averaged_lms under optimal_bias_scheme at
/// gamma = 1 / E[X^T X]; cfg.gamma is ignored.
inline Trajectory nlms_run(const ProblemSpec &spec, RunConfig cfg) {
    const SamplingScheme scheme = optimal_bias_scheme(spec);
    cfg.gamma = 1.0 / scheme.normalization;
    return detail::run_replicates(spec, scheme, cfg, [](Vector &w, const Sample &s, double y, std::int64_t) {
        const double xx = s.x.squaredNorm();
        if (xx == 0.0) throw DataError("nlms_run: zero-norm input");
        w.noalias() -= ((s.x.dot(w) - y) / xx) * s.x;
    });
}

/// Implicit SGD w - gamma_i / (1 + gamma_i x^T x) (x^T w - y) x under p,
/// with averaging. `step` maps the update index i >= 1 to gamma_i.
inline Trajectory isgd_run(const ProblemSpec &spec, const std::function<double(std::int64_t)> &step, RunConfig cfg) {
    if (cfg.gamma <= 0.0) cfg.gamma = 1.0; // only validated, the schedule is used instead
    return detail::run_replicates(spec, uniform_scheme(), cfg,
                                  [&step](Vector &w, const Sample &s, double y, std::int64_t i) {
                                      const double g = step(i);
                                      if (!(g >= 0.0)) throw DataError("isgd_run: negative step");
                                      w.noalias() -= (g / (1.0 + g * s.x.squaredNorm()) * (s.x.dot(w) - y)) * s.x;
                                  });
}

} // namespace lmsavg

#endif // LMSAVG_SGD_ENGINE_HPP
