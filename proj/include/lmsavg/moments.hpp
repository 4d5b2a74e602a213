#ifndef LMSAVG_MOMENTS_HPP
#define LMSAVG_MOMENTS_HPP

// Problem descriptions for least-squares streams and the moment objects
// (H, the fourth-moment operator M, Sigma0 = E[eps^2 X X^T], E0 = eta0 eta0^T)
// consumed by the step-size and covariance analysis.
//
// Sign convention: eps = X^T w* - Y.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lmsavg/errors.hpp"
#include "lmsavg/operator_algebra.hpp"
#include "lmsavg/rng.hpp"

namespace lmsavg {

enum class DistributionKind { gaussian, discrete, empirical };
enum class NoiseKind { independent_gaussian, residual };

struct Atom {
    Vector x;
    double y = 0.0;
    double probability = 0.0;
};

struct ProblemSpec {
    int dim = 0;
    DistributionKind distribution = DistributionKind::gaussian;
    SymMatrix covariance; // centered Gaussian design only
    std::vector<Atom> atoms; // discrete and empirical designs
    Vector w_star;
    Vector w0;
    NoiseKind noise = NoiseKind::independent_gaussian;
    double sigma = 0.0;

    Vector eta0() const { return w0 - w_star; }

    // Residual of an atom. Only meaningful under NoiseKind::residual.
    double residual(const Atom &a) const { return a.x.dot(w_star) - a.y; }
};

inline const char *to_string(DistributionKind k) {
    switch (k) {
    case DistributionKind::gaussian: return "gaussian";
    case DistributionKind::discrete: return "discrete";
    case DistributionKind::empirical: return "empirical";
    }
    return "?";
}

/// Weighted least-squares optimum argmin_w sum_k p_k (x_k^T w - y_k)^2.
inline Vector least_squares_optimum(const std::vector<Atom> &atoms, int d) {
    Matrix h = Matrix::Zero(d, d);
    Vector b = Vector::Zero(d);
    for (const Atom &a : atoms) {
        h.noalias() += a.probability * a.x * a.x.transpose();
        b.noalias() += a.probability * a.y * a.x;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const double tr = h.trace();
    if (!(tr > 0.0) || es.eigenvalues().minCoeff() < 1e-10 * tr) {
        std::ostringstream msg;
        msg << "second-moment matrix is rank deficient (smallest eigenvalue " << es.eigenvalues().minCoeff()
            << ", trace " << tr << ")";
        throw DataError(msg.str());
    }
    Eigen::LDLT<Matrix> ldlt(h);
    Vector w = ldlt.solve(b);
    w += ldlt.solve(b - h * w);
    return w;
}

inline void validate(const ProblemSpec &spec) {
    const int d = spec.dim;
    if (d < 1 || d > kMaxDim) throw DataError("problem spec: dimension out of range");
    if (spec.w_star.size() != d || spec.w0.size() != d)
        throw DataError("problem spec: w_star and w0 must have length d");
    if (!(spec.sigma >= 0.0)) throw DataError("problem spec: sigma must be nonnegative");
    if (spec.distribution == DistributionKind::gaussian) {
        if (spec.covariance.dim() != d) throw DataError("gaussian spec: covariance has wrong dimension");
        if (spec.noise != NoiseKind::independent_gaussian)
            throw DataError("gaussian spec: only independent Gaussian noise is supported");
        return;
    }
    if (spec.atoms.empty()) throw DataError("discrete spec: no atoms");
    // Neumaier summation: 1/n added n times stays within an ulp of 1.
    double total = 0.0, carry = 0.0;
    for (const Atom &a : spec.atoms) {
        if (a.x.size() != d) throw DimensionError("discrete spec: atom with wrong dimension");
        if (!(a.probability >= 0.0)) throw DataError("discrete spec: negative probability");
        if (!a.x.allFinite() || !std::isfinite(a.y)) throw DataError("discrete spec: non-finite atom");
        const double t = total + a.probability;
        carry += std::abs(total) >= a.probability ? (total - t) + a.probability : (a.probability - t) + total;
        total = t;
    }
    total += carry;
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "discrete spec: probabilities sum to " << total;
        throw DataError(msg.str());
    }
}

inline ProblemSpec gaussian_spec(const SymMatrix &h, Vector w_star, Vector w0, double sigma) {
    ProblemSpec s;
    s.dim = h.dim();
    s.distribution = DistributionKind::gaussian;
    s.covariance = h;
    s.w_star = std::move(w_star);
    s.w0 = std::move(w0);
    s.noise = NoiseKind::independent_gaussian;
    s.sigma = sigma;
    validate(s);
    return s;
}

/// Discrete design with noise given by the atoms' own responses; w* is the
/// exact least-squares fit so that E[eps X] = 0.
inline ProblemSpec discrete_spec(std::vector<Atom> atoms, Vector w0) {
    ProblemSpec s;
    if (atoms.empty()) throw DataError("discrete spec: no atoms");
    s.dim = static_cast<int>(atoms.front().x.size());
    s.distribution = DistributionKind::discrete;
    s.atoms = std::move(atoms);
    s.noise = NoiseKind::residual;
    s.w_star = Vector::Zero(s.dim);
    s.w0 = std::move(w0);
    validate(s);
    s.w_star = least_squares_optimum(s.atoms, s.dim);
    return s;
}

/// Discrete design for X with Y = X^T w* - eps, eps ~ N(0, sigma^2) independent of X.
inline ProblemSpec discrete_spec(std::vector<Atom> atoms, Vector w_star, Vector w0, double sigma) {
    ProblemSpec s;
    if (atoms.empty()) throw DataError("discrete spec: no atoms");
    s.dim = static_cast<int>(atoms.front().x.size());
    s.distribution = DistributionKind::discrete;
    s.atoms = std::move(atoms);
    s.noise = NoiseKind::independent_gaussian;
    s.sigma = sigma;
    s.w_star = std::move(w_star);
    s.w0 = std::move(w0);
    validate(s);
    for (Atom &a : s.atoms) a.y = a.x.dot(s.w_star);
    return s;
}

/// Uniform distribution over observed rows; probabilities in `rows` are ignored.
inline ProblemSpec empirical_spec(std::vector<Atom> rows, std::optional<Vector> w0 = std::nullopt) {
    if (rows.empty()) throw DataError("empirical spec: no rows");
    const double p = 1.0 / static_cast<double>(rows.size());
    for (Atom &a : rows) a.probability = p;
    const int d = static_cast<int>(rows.front().x.size());
    ProblemSpec s = discrete_spec(std::move(rows), w0.value_or(Vector::Zero(d)));
    s.distribution = DistributionKind::empirical;
    return s;
}

/// Centered Gaussian design with eigenvalues 1/i, i = 1..d, in the canonical basis.
inline ProblemSpec harmonic_gaussian_spec(int d, double sigma, Vector w_star, std::optional<Vector> w0 = {}) {
    Vector lambda(d);
    for (int i = 0; i < d; ++i) lambda(i) = 1.0 / static_cast<double>(i + 1);
    return gaussian_spec(SymMatrix::diagonal(lambda), std::move(w_star), w0.value_or(Vector::Zero(d)), sigma);
}

struct MomentSet {
    int dim = 0;
    SymMatrix H;
    SymOperator M;
    SymMatrix Sigma0;
    SymMatrix E0;
    double trace_H = 0.0;
    double mu = 0.0;
    double L = 0.0;

    // Eigendecomposition of H, ascending eigenvalues.
    Matrix eigenvectors;
    Vector eigenvalues;
    SymMatrix H_inv;

    // Set when M is exactly the Gaussian operator A -> 2HAH + Tr(AH)H.
    // The covariance recursions use it for an O(d^2) transition.
    bool gaussian_structure = false;

    // Number of Monte Carlo draws behind M (0 when exact).
    std::size_t sample_count = 0;
};

/// Fourth-moment operator of a centered Gaussian with covariance H.
inline SymOperator gaussian_fourth_moment(const SymMatrix &h) {
    const Matrix &hm = h.matrix();
    return SymOperator::from_map(
        h.dim(),
        [&](const SymMatrix &a) {
            const Matrix ha = hm * a.matrix();
            return SymMatrix(Matrix(2.0 * ha * hm + ha.trace() * hm));
        },
        true);
}

namespace detail {

inline void finish_moments(MomentSet &m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.H.matrix());
    if (es.info() != Eigen::Success) throw NumericalError("moments: eigendecomposition of H failed");
    m.eigenvectors = es.eigenvectors();
    m.eigenvalues = es.eigenvalues();
    m.trace_H = m.H.trace();
    m.mu = m.eigenvalues.minCoeff();
    m.L = m.eigenvalues.maxCoeff();
    if (!(m.trace_H > 0.0) || m.mu < 1e-10 * m.trace_H) {
        std::ostringstream msg;
        msg << "moments: H is singular or rank deficient (smallest eigenvalue " << m.mu << ", trace "
            << m.trace_H << ")";
        throw DataError(msg.str());
    }
    m.H_inv = SymMatrix(Matrix(m.eigenvectors * m.eigenvalues.cwiseInverse().asDiagonal() *
                               m.eigenvectors.transpose()));
}

inline std::vector<Vector> atom_points(const ProblemSpec &spec) {
    std::vector<Vector> xs;
    xs.reserve(spec.atoms.size());
    for (const Atom &a : spec.atoms) xs.push_back(a.x);
    return xs;
}

inline Matrix cholesky_factor(const SymMatrix &h) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

} // namespace detail

inline MomentSet compute_moments(const ProblemSpec &spec) {
    validate(spec);
    const int d = spec.dim;
    MomentSet m;
    m.dim = d;
    m.E0 = SymMatrix::outer(spec.eta0());
    if (spec.distribution == DistributionKind::gaussian) {
        m.H = spec.covariance;
        m.M = gaussian_fourth_moment(spec.covariance);
        m.Sigma0 = spec.sigma * spec.sigma * spec.covariance;
        m.gaussian_structure = true;
    } else {
        Matrix h = Matrix::Zero(d, d);
        Matrix s0 = Matrix::Zero(d, d);
        std::vector<double> w;
        w.reserve(spec.atoms.size());
        for (const Atom &a : spec.atoms) {
            const Matrix xx = a.x * a.x.transpose();
            h += a.probability * xx;
            if (spec.noise == NoiseKind::residual) {
                const double e = spec.residual(a);
                s0 += a.probability * e * e * xx;
            }
            w.push_back(a.probability);
        }
        m.H = SymMatrix(h);
        const auto xs = detail::atom_points(spec);
        m.M = fourth_moment_operator(xs, w);
        m.Sigma0 = spec.noise == NoiseKind::residual ? SymMatrix(s0) : spec.sigma * spec.sigma * m.H;
    }
    detail::finish_moments(m);
    return m;
}

using DensityRatio = std::function<double(const Vector &x, double y)>;

struct ReweightOptions {
    std::size_t gaussian_samples = 200000;
    std::uint64_t seed = 0x5eed;
};

/// Moments seen by LMS when (X, Y) is drawn from q with dq/dp = c_inverse
/// and rescaled by sqrt(c), c = 1/c_inverse.
///
/// Second moments (H) are invariant. Fourth-order quantities pick up a
/// factor c under p: M becomes A -> E_p[c (X^T A X) X X^T] and Sigma0
/// becomes E_p[c eps^2 X X^T]. Atoms with X = 0 never produce an update and
/// are ignored. For Gaussian designs the fourth-order terms are estimated by
/// Monte Carlo under p; the scheme must then depend on X only.
inline MomentSet reweighted_moments(const ProblemSpec &spec, const DensityRatio &c_inverse,
                                    const ReweightOptions &opt = {}) {
    MomentSet m = compute_moments(spec);
    const int d = spec.dim;

    if (spec.distribution != DistributionKind::gaussian) {
        double mass = 0.0;
        std::vector<Vector> xs;
        std::vector<double> w;
        Matrix s0 = Matrix::Zero(d, d);
        for (const Atom &a : spec.atoms) {
            if (a.probability == 0.0) continue;
            const double ci = c_inverse(a.x, a.y);
            if (!(ci >= 0.0) || !std::isfinite(ci)) throw DataError("reweighted_moments: invalid density ratio");
            mass += a.probability * ci;
            if (a.x.squaredNorm() == 0.0) continue;
            if (ci == 0.0)
                throw DataError("reweighted_moments: q vanishes on an atom with X != 0 (p is not absolutely "
                                "continuous with respect to q)");
            const double c = 1.0 / ci;
            xs.push_back(a.x);
            w.push_back(a.probability * c);
            const double e2 = spec.noise == NoiseKind::residual ? std::pow(spec.residual(a), 2)
                                                                : spec.sigma * spec.sigma;
            s0 += a.probability * c * e2 * a.x * a.x.transpose();
        }
        if (std::abs(mass - 1.0) > 1e-10) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "reweighted_moments: E_p[c^-1] = " << mass << ", expected 1";
            throw DataError(msg.str());
        }
        m.M = fourth_moment_operator(xs, w);
        m.Sigma0 = SymMatrix(s0);
        m.gaussian_structure = false;
        return m;
    }

    // Gaussian design: importance weights under p.
    const Matrix root = detail::cholesky_factor(spec.covariance);
    Rng rng(opt.seed);
    std::normal_distribution<double> normal;
    const std::size_t n = std::max<std::size_t>(opt.gaussian_samples, 2);
    std::vector<Vector> xs(n);
    std::vector<double> w(n);
    Matrix s0 = Matrix::Zero(d, d);
    double sum = 0.0, sum2 = 0.0;
    Vector z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) z(k) = normal(rng);
        xs[i] = root * z;
        const double ci = c_inverse(xs[i], xs[i].dot(spec.w_star));
        if (!(ci > 0.0) || !std::isfinite(ci)) throw DataError("reweighted_moments: invalid density ratio");
        sum += ci;
        sum2 += ci * ci;
        w[i] = 1.0 / (ci * static_cast<double>(n));
        s0 += w[i] * xs[i] * xs[i].transpose();
    }
    const double mean = sum / static_cast<double>(n);
    const double se = std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
    if (std::abs(mean - 1.0) > 5.0 * se + 1e-12) {
        std::ostringstream msg;
        msg << "reweighted_moments: Monte Carlo E_p[c^-1] = " << mean << " (standard error " << se
            << "), expected 1";
        throw DataError(msg.str());
    }
    m.M = fourth_moment_operator(xs, w);
    m.Sigma0 = SymMatrix(Matrix(spec.sigma * spec.sigma * s0));
    m.gaussian_structure = false;
    m.sample_count = n;
    return m;
}

struct CrossTermReport {
    double max_abs = 0.0;         // max_{ijk} |E[X_i X_j X_k eps]|
    double standard_error = 0.0;  // of the entry attaining max_abs (0 when exact)
    bool decomposable = true;     // every entry within 3 standard errors of zero
};

/// Checks whether E[X_i X_j X_k eps] vanishes, in which case bias and
/// variance covariances add up to the total covariance.
inline CrossTermReport check_cross_term_condition(const ProblemSpec &spec) {
    validate(spec);
    CrossTermReport rep;
    // Independent noise: every term factorizes through E[eps] = 0.
    if (spec.noise == NoiseKind::independent_gaussian) return rep;
    const int d = spec.dim;
    const auto n = static_cast<double>(spec.atoms.size());
    const bool empirical = spec.distribution == DistributionKind::empirical;
    std::vector<double> mean(static_cast<std::size_t>(d * d * d), 0.0), sq(mean.size(), 0.0);
    double scale = 0.0;
    for (const Atom &a : spec.atoms) {
        const double e = spec.residual(a);
        scale += a.probability * std::pow(a.x.norm(), 3) * std::abs(e);
        std::size_t idx = 0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k, ++idx) {
                    const double t = a.x(i) * a.x(j) * a.x(k) * e;
                    mean[idx] += a.probability * t;
                    sq[idx] += a.probability * t * t;
                }
    }
    const double exact_tol = 1e-12 * std::max(scale, 1e-300);
    for (std::size_t idx = 0; idx < mean.size(); ++idx) {
        const double se = empirical && n > 1 ? std::sqrt(std::max(0.0, sq[idx] - mean[idx] * mean[idx]) / (n - 1))
                                             : 0.0;
        const double a = std::abs(mean[idx]);
        if (a > rep.max_abs) {
            rep.max_abs = a;
            rep.standard_error = se;
        }
        if (a > 3.0 * se + exact_tol) rep.decomposable = false;
    }
    return rep;
}

} // namespace lmsavg

#endif // LMSAVG_MOMENTS_HPP
