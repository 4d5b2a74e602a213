#ifndef LMSAVG_SAMPLING_HPP
#define LMSAVG_SAMPLING_HPP

// Non-uniform sampling for LMS: draw (X, Y) from q instead of p and rescale
// by sqrt(c), c = dp/dq. A scheme is described by c^-1 = dq/dp.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lmsavg/errors.hpp"
#include "lmsavg/moments.hpp"
#include "lmsavg/rng.hpp"
#include "lmsavg/step_size.hpp"

namespace lmsavg {

enum class SchemeKind { uniform, bias_optimal, variance_optimal, class_balancing, custom };

struct SamplingScheme {
    std::string name;
    SchemeKind kind = SchemeKind::custom;
    DensityRatio c_inverse;
    // E_p of the unnormalized density; c_inverse already includes the division.
    double normalization = 1.0;
    std::vector<std::string> prerequisites;
};

namespace detail {

// E||z|| for z ~ N(0, I_d).
inline double chi_mean(int d) {
    return std::sqrt(2.0) * std::exp(std::lgamma(0.5 * (d + 1)) - std::lgamma(0.5 * d));
}

inline bool is_atomic(const ProblemSpec &spec) { return spec.distribution != DistributionKind::gaussian; }

} // namespace detail

inline SamplingScheme uniform_scheme() {
    return {"uniform", SchemeKind::uniform, [](const Vector &, double) { return 1.0; }, 1.0, {}};
}

/// c^-1 = X^T X / E_p[X^T X]. Maximizes gamma_max, to 2 / E[X^T X].
inline SamplingScheme optimal_bias_scheme(const ProblemSpec &spec) {
    validate(spec);
    double z = 0.0;
    if (detail::is_atomic(spec)) {
        for (const Atom &a : spec.atoms) z += a.probability * a.x.squaredNorm();
    } else {
        z = spec.covariance.trace();
    }
    if (!(z > 0.0)) throw DataError("optimal_bias_scheme: E[X^T X] = 0 (degenerate design)");
    return {"bias-opt", SchemeKind::bias_optimal, [z](const Vector &x, double) { return x.squaredNorm() / z; }, z,
            {}};
}

/// Minimizes the small-step variance limit E_p[c eps^2 X^T H^-1 X].
///
/// With residual noise the minimizer is c^-1 proportional to
/// |eps| sqrt(X^T H^-1 X). Under noise independent of X the factor |eps|
/// would make E_p[c] infinite (E[1/|eps|] diverges for Gaussian eps), so the
/// scheme keeps the X part only; its limit is sigma^2 (E sqrt(X^T H^-1 X))^2.
inline SamplingScheme optimal_variance_scheme(const ProblemSpec &spec) {
    const MomentSet m = compute_moments(spec);
    const Matrix hinv = m.H_inv.matrix();
    const Vector w_star = spec.w_star;
    if (spec.noise == NoiseKind::independent_gaussian) {
        if (!(spec.sigma > 0.0)) throw DataError("optimal_variance_scheme: noiseless spec (sigma = 0)");
        double z = 0.0;
        if (detail::is_atomic(spec)) {
            for (const Atom &a : spec.atoms) z += a.probability * std::sqrt(a.x.dot(hinv * a.x));
        } else {
            // X = H^{1/2} z with z standard normal, so X^T H^-1 X = ||z||^2.
            z = detail::chi_mean(spec.dim);
        }
        return {"variance-opt", SchemeKind::variance_optimal,
                [hinv, z](const Vector &x, double) { return std::sqrt(x.dot(hinv * x)) / z; }, z, {"H"}};
    }
    double z = 0.0;
    for (const Atom &a : spec.atoms) z += a.probability * std::abs(spec.residual(a)) * std::sqrt(a.x.dot(hinv * a.x));
    if (!(z > 0.0)) throw DataError("optimal_variance_scheme: residuals vanish on the support (eps = 0)");
    for (const Atom &a : spec.atoms) {
        if (a.probability > 0.0 && a.x.squaredNorm() > 0.0 && spec.residual(a) == 0.0)
            throw DataError("optimal_variance_scheme: an atom with X != 0 has zero residual, so q would miss "
                            "part of the support of p");
    }
    return {"variance-opt", SchemeKind::variance_optimal,
            [hinv, w_star, z](const Vector &x, double y) {
                return std::abs(x.dot(w_star) - y) * std::sqrt(x.dot(hinv * x)) / z;
            },
            z,
            {"H", "eps"}};
}

/// Distinct labels of a two-class spec, ascending as (class -, class +).
inline std::pair<double, double> binary_labels(const ProblemSpec &spec) {
    if (!detail::is_atomic(spec)) throw DataError("class weighting needs a discrete or empirical spec");
    std::vector<double> ys;
    for (const Atom &a : spec.atoms) {
        if (std::find(ys.begin(), ys.end(), a.y) == ys.end()) ys.push_back(a.y);
        if (ys.size() > 2) break;
    }
    if (ys.size() != 2)
        throw DataError(ys.size() < 2 ? "class weighting: only one label present (missing class)"
                                      : "class weighting: more than two distinct labels");
    std::sort(ys.begin(), ys.end());
    return {ys[0], ys[1]};
}

/// c_y = 1 / P(Y = y) for both labels.
inline std::map<double, double> inverse_class_frequency_weights(const ProblemSpec &spec) {
    const auto [lo, hi] = binary_labels(spec);
    double p_lo = 0.0, p_hi = 0.0;
    for (const Atom &a : spec.atoms) (a.y == lo ? p_lo : p_hi) += a.probability;
    if (!(p_lo > 0.0) || !(p_hi > 0.0)) throw DataError("class weighting: a class has zero probability");
    return {{lo, 1.0 / p_lo}, {hi, 1.0 / p_hi}};
}

/// Spec over (sqrt(c_Y) X, sqrt(c_Y) Y), with the least-squares optimum refit.
inline ProblemSpec class_weighted_spec(const ProblemSpec &spec, const std::map<double, double> &weights) {
    const auto [lo, hi] = binary_labels(spec);
    if (!weights.count(lo) || !weights.count(hi)) throw DataError("class_weighted_spec: missing weight for a class");
    std::vector<Atom> atoms = spec.atoms;
    for (Atom &a : atoms) {
        const double c = weights.at(a.y);
        if (!(c > 0.0)) throw DataError("class_weighted_spec: weights must be positive");
        a.x *= std::sqrt(c);
        a.y *= std::sqrt(c);
    }
    ProblemSpec out = discrete_spec(std::move(atoms), spec.w0);
    out.distribution = spec.distribution;
    return out;
}

inline ProblemSpec class_weighted_spec(const ProblemSpec &spec) {
    return class_weighted_spec(spec, inverse_class_frequency_weights(spec));
}

/// Resampling of a class-weighted spec with c = 1/c_y (up to normalization):
/// classes are drawn in proportion to p(y) c_y and the sqrt(c_y) scaling
/// is undone, so per-sample gradients keep their original magnitude up to
/// the common factor E_p[c_y].
inline SamplingScheme class_balancing_scheme(const ProblemSpec &original, const std::map<double, double> &weights) {
    const auto [lo, hi] = binary_labels(original);
    const double c_lo = weights.at(lo), c_hi = weights.at(hi);
    // Labels as they appear in the weighted spec.
    const double y_lo = std::sqrt(c_lo) * lo, y_hi = std::sqrt(c_hi) * hi;
    if (y_lo == y_hi) throw DataError("class_balancing_scheme: weighted labels coincide");
    double z = 0.0;
    for (const Atom &a : original.atoms) z += a.probability * weights.at(a.y);
    return {"class-weighted", SchemeKind::class_balancing,
            [=](const Vector &, double y) {
                if (y == y_lo) return c_lo / z;
                if (y == y_hi) return c_hi / z;
                throw DataError("class_balancing_scheme: label not in the weighted spec");
            },
            z,
            {"labels"}};
}

/// E_p[c^-1] (must be 1) and c^-1 > 0 wherever X != 0.
inline void validate_scheme(const ProblemSpec &spec, const SamplingScheme &scheme) {
    if (!detail::is_atomic(spec)) return; // Gaussian schemes are normalized in closed form.
    double mass = 0.0;
    for (const Atom &a : spec.atoms) {
        const double ci = scheme.c_inverse(a.x, a.y);
        if (!(ci >= 0.0) || !std::isfinite(ci)) throw DataError("scheme " + scheme.name + ": invalid density ratio");
        if (a.probability > 0.0 && a.x.squaredNorm() > 0.0 && ci == 0.0)
            throw DataError("scheme " + scheme.name + ": q vanishes where X != 0");
        mass += a.probability * ci;
    }
    if (std::abs(mass - 1.0) > 1e-10) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "scheme " << scheme.name << ": E_p[c^-1] = " << mass << ", expected 1";
        throw DataError(msg.str());
    }
}

/// E[sqrt(X^T X)]^2 / E[X^T X], in (0, 1] by Jensen. Gaussian designs with
/// H not proportional to I use a seeded Monte Carlo average over 10^6 draws.
inline double variance_gain(const ProblemSpec &spec) {
    validate(spec);
    double e1 = 0.0, e2 = 0.0;
    if (detail::is_atomic(spec)) {
        for (const Atom &a : spec.atoms) {
            e1 += a.probability * a.x.norm();
            e2 += a.probability * a.x.squaredNorm();
        }
    } else {
        const Matrix &h = spec.covariance.matrix();
        const double s = h.trace() / spec.dim;
        e2 = h.trace();
        if ((h - s * Matrix::Identity(spec.dim, spec.dim)).norm() <= 1e-14 * h.norm()) {
            e1 = std::sqrt(s) * detail::chi_mean(spec.dim);
        } else {
            const Matrix root = detail::cholesky_factor(spec.covariance);
            Rng rng(0x5eed);
            std::normal_distribution<double> normal;
            constexpr int draws = 1000000;
            Vector z(spec.dim);
            for (int i = 0; i < draws; ++i) {
                for (int k = 0; k < spec.dim; ++k) z(k) = normal(rng);
                e1 += (root * z).norm();
            }
            e1 /= draws;
        }
    }
    if (!(e2 > 0.0)) throw DataError("variance_gain: E[X^T X] = 0");
    return e1 * e1 / e2;
}

/// Predicted bias improvement (gamma_before / gamma_after)^2.
inline double bias_gain(double gamma_before, double gamma_after) {
    if (!(gamma_before > 0.0) || !(gamma_after > 0.0)) throw DataError("bias_gain: step-sizes must be positive");
    const double r = gamma_before / gamma_after;
    return r * r;
}

/// Moments seen by LMS under `scheme`.
inline MomentSet scheme_moments(const ProblemSpec &spec, const SamplingScheme &scheme,
                                const ReweightOptions &opt = {}) {
    if (scheme.kind == SchemeKind::uniform) return compute_moments(spec);
    validate_scheme(spec, scheme);
    return reweighted_moments(spec, scheme.c_inverse, opt);
}

} // namespace lmsavg

#endif // LMSAVG_SAMPLING_HPP
