#ifndef LMSAVG_ASYMPTOTICS_HPP
#define LMSAVG_ASYMPTOTICS_HPP

// Covariance of the averaged iterate eta_bar_n = (1/n) sum_{i=0}^{n-1} eta_i
// (n iterates, n - 1 stochastic updates): exact finite-n values, leading
// asymptotic terms, explicit remainder bounds and small-step equivalents.
//
// Exact values use
//
//   E[eta_bar_n eta_bar_n^T] = (1/n^2) sum_{i<n} (C_i + P_{n-i} C_i + C_i P_{n-i}),
//   P_k = sum_{m=1}^{k-1} (I - gamma H)^m,   C_i = E[eta_i eta_i^T],
//
// with C_i = (I - gamma T)^i E0 for the bias and
// C_i = gamma^2 sum_{m<i} (I - gamma T)^m Sigma0 for the variance. In the
// eigenbasis of H the P factors are diagonal, so a single forward pass over
// i evaluates the sum for every requested n.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "lmsavg/errors.hpp"
#include "lmsavg/moments.hpp"
#include "lmsavg/operator_algebra.hpp"
#include "lmsavg/step_size.hpp"

namespace lmsavg {

namespace detail {

// (I - gamma T) acting on S_d coordinates in the eigenbasis of H.
class RotatedTransition {
  public:
    RotatedTransition(const MomentSet &m, double gamma) : q_(m.eigenvectors), gamma_(gamma) {
        const int d = m.dim;
        const int big = sym_size(d);
        const Vector &lam = m.eigenvalues;
        s_row_.resize(big);
        s_col_.resize(big);
        SymBasis basis(d);
        for (int k = 0; k < big; ++k) {
            auto [i, j] = basis.index(k);
            s_row_(k) = 1.0 - gamma * lam(i);
            s_col_(k) = 1.0 - gamma * lam(j);
        }
        if (m.gaussian_structure) {
            // M A = 2 H A H + Tr(A H) H becomes elementwise once H = diag(lambda).
            gaussian_ = true;
            lam_ = lam;
            factor_.resize(big);
            for (int k = 0; k < big; ++k) {
                auto [i, j] = basis.index(k);
                factor_(k) = 1.0 - gamma * (lam(i) + lam(j)) + 2.0 * gamma * gamma * lam(i) * lam(j);
            }
        } else {
            const SymOperator r = congruence_operator(q_);
            const SymOperator step = SymOperator::identity(d) - gamma * t_operator(m, gamma);
            dense_ = r.matrix() * step.matrix() * r.matrix().transpose();
        }
    }

    Vector rotate(const SymMatrix &a) const { return to_vec(Matrix(q_.transpose() * a.matrix() * q_)); }

    SymMatrix unrotate(const Vector &v) const {
        Matrix a(q_.rows(), q_.rows());
        from_vec(v, a);
        return SymMatrix(Matrix(q_ * a * q_.transpose()));
    }

    void step(Vector &v, Vector &scratch) const {
        if (gaussian_) {
            const Eigen::Index d = lam_.size();
            const double tr = lam_.dot(v.head(d));
            v.array() *= factor_.array();
            v.head(d).noalias() += gamma_ * gamma_ * tr * lam_;
        } else {
            scratch.noalias() = dense_ * v;
            v.swap(scratch);
        }
    }

    // s_i = 1 - gamma lambda_i for the row (resp. column) index of each coordinate.
    const Vector &s_row() const { return s_row_; }
    const Vector &s_col() const { return s_col_; }

  private:
    Matrix q_;
    double gamma_;
    Vector s_row_, s_col_;
    bool gaussian_ = false;
    Vector lam_, factor_;
    Matrix dense_;
};

inline void check_schedule(std::span<const std::int64_t> ns) {
    std::int64_t prev = 0;
    for (auto n : ns) {
        if (n <= prev) throw DataError("iteration schedule must be positive and strictly increasing");
        prev = n;
    }
}

// Runs sum_{i<n} (C_i + P C_i + C_i P) / n^2 for every n in `ns`. `advance`
// maps C_i to C_{i+1} in rotated coordinates.
template <typename Advance>
std::vector<SymMatrix> averaged_covariance_curve(const RotatedTransition &tr, Vector c, std::span<const std::int64_t> ns,
                                                 double scale, Advance &&advance) {
    check_schedule(ns);
    std::vector<SymMatrix> out;
    out.reserve(ns.size());
    if (ns.empty()) return out;
    const Eigen::Index big = c.size();
    Vector s = Vector::Zero(big), ya = Vector::Zero(big), yb = Vector::Zero(big);
    // Neumaier compensation for the running sum S_k, which grows linearly.
    Vector carry = Vector::Zero(big);
    const std::int64_t last = ns.back();
    std::size_t next = 0;
    for (std::int64_t k = 0; k < last; ++k) {
        // Y_{k+1} = s o (S_k + Y_k) realizes sum_i C_i p_{k+1-i} with
        // p_{m+1} = s (1 + p_m), p_1 = 0.
        ya = tr.s_row().cwiseProduct((s + carry) + ya);
        yb = tr.s_col().cwiseProduct((s + carry) + yb);
        for (Eigen::Index i = 0; i < big; ++i) {
            const double t = s(i) + c(i);
            carry(i) += std::abs(s(i)) >= std::abs(c(i)) ? (s(i) - t) + c(i) : (c(i) - t) + s(i);
            s(i) = t;
        }
        const std::int64_t n = k + 1;
        if (n == ns[next]) {
            const double nn = static_cast<double>(n);
            out.push_back(tr.unrotate((scale / (nn * nn)) * ((s + carry) + ya + yb)));
            ++next;
        }
        if (n < last) advance(c);
    }
    return out;
}

} // namespace detail

/// Exact E[eta_bar_n eta_bar_n^T] with eps = 0 for each n in `ns`.
inline std::vector<SymMatrix> exact_bias_curve(const MomentSet &m, double gamma, std::span<const std::int64_t> ns) {
    if (!(gamma > 0.0)) throw NumericalError("exact_bias_curve: gamma must be positive");
    const detail::RotatedTransition tr(m, gamma);
    Vector scratch(sym_size(m.dim));
    return detail::averaged_covariance_curve(tr, tr.rotate(m.E0), ns, 1.0,
                                             [&](Vector &c) { tr.step(c, scratch); });
}

/// Exact E[eta_bar_n eta_bar_n^T] with eta_0 = 0 for each n in `ns`.
inline std::vector<SymMatrix> exact_variance_curve(const MomentSet &m, double gamma,
                                                   std::span<const std::int64_t> ns) {
    if (!(gamma > 0.0)) throw NumericalError("exact_variance_curve: gamma must be positive");
    const detail::RotatedTransition tr(m, gamma);
    Vector scratch(sym_size(m.dim));
    const Vector sigma0 = tr.rotate(m.Sigma0);
    // Iterate K_i = sum_{m<i} (I - gamma T)^m Sigma0 and scale by gamma^2 at the end.
    return detail::averaged_covariance_curve(tr, Vector::Zero(sigma0.size()), ns, gamma * gamma, [&](Vector &k) {
        tr.step(k, scratch);
        k += sigma0;
    });
}

inline SymMatrix exact_bias_covariance(const MomentSet &m, double gamma, std::int64_t n) {
    const std::int64_t ns[] = {n};
    return exact_bias_curve(m, gamma, ns).front();
}

inline SymMatrix exact_variance_covariance(const MomentSet &m, double gamma, std::int64_t n) {
    const std::int64_t ns[] = {n};
    return exact_variance_curve(m, gamma, ns).front();
}

/// Per-step quantities shared by the leading terms and remainder bounds.
struct StepAnalysis {
    double gamma = 0.0;
    double gamma_max = 0.0;
    SymOperator T;
    double mu_T = 0.0;
    ContractionFactors rho;
};

/// Requires 0 < gamma < gamma_max (T positive definite).
inline StepAnalysis analyze_step(const MomentSet &m, double gamma) {
    StepAnalysis a;
    a.gamma = gamma;
    a.gamma_max = gamma_max(m);
    if (!(gamma > 0.0) || !(gamma < a.gamma_max)) {
        std::ostringstream msg;
        msg << "gamma = " << gamma << " is outside (0, gamma_max = " << a.gamma_max
            << "); leading terms and remainder bounds need T positive definite";
        throw NumericalError(msg.str());
    }
    a.T = t_operator(m, gamma);
    a.mu_T = smallest_eigenvalue(a.T);
    a.rho = contraction_factors(m, gamma);
    return a;
}

namespace detail {

// (H_L^-1 + H_R^-1 - gamma I) A
inline SymMatrix w_apply(const MomentSet &m, double gamma, const SymMatrix &a) {
    const Matrix &hi = m.H_inv.matrix();
    return SymMatrix(Matrix(hi * a.matrix() + a.matrix() * hi - gamma * a.matrix()));
}

// ((I - gamma H)_L H_L^-2 + (I - gamma H)_R H_R^-2) A
inline SymMatrix j_apply(const MomentSet &m, double gamma, const SymMatrix &a) {
    const Matrix hi2 = m.H_inv.matrix() * m.H_inv.matrix();
    const Matrix left = (hi2 - gamma * m.H_inv.matrix()) * a.matrix();
    return SymMatrix(Matrix(left + left.transpose()));
}

} // namespace detail

/// (1 / (n^2 gamma^2)) (H_L^-1 + H_R^-1 - gamma I) T^-1 E0.
inline SymMatrix bias_leading_term(const MomentSet &m, const StepAnalysis &a, std::int64_t n) {
    const double g = a.gamma, nn = static_cast<double>(n);
    return (1.0 / (nn * nn * g * g)) * detail::w_apply(m, g, solve(a.T, m.E0));
}

inline SymMatrix bias_leading_term(const MomentSet &m, double gamma, std::int64_t n) {
    return bias_leading_term(m, analyze_step(m, gamma), n);
}

/// Frobenius bound on exact bias minus leading term:
/// (d rho^n ||E0|| / (gamma n)) (2/mu + (2/mu - gamma) / (mu_T n gamma)).
inline double bias_remainder_bound(const MomentSet &m, const StepAnalysis &a, std::int64_t n) {
    const double g = a.gamma, nn = static_cast<double>(n), d = m.dim;
    const double decay = std::pow(a.rho.rho, nn);
    return d * decay * m.E0.frobenius_norm() / (g * nn) *
           (2.0 / m.mu + (2.0 / m.mu - g) / (a.mu_T * nn * g));
}

inline double bias_remainder_bound(const MomentSet &m, double gamma, std::int64_t n) {
    return bias_remainder_bound(m, analyze_step(m, gamma), n);
}

/// Two-term expansion of the variance covariance, with Z = T^-1 Sigma0:
///
///   (1/n) W Z - (1/(gamma n^2)) (W T^-1 Z + J Z),
///
/// W = H_L^-1 + H_R^-1 - gamma I and J = (I - gamma H)_L H_L^-2 + (I - gamma H)_R H_R^-2.
/// The J term collects the O(1) geometric sum over (I - gamma H)^k that
/// multiplies the stationary part of E[eta_i eta_i^T]; without it the
/// difference to the exact covariance is O(1/(gamma n^2)) rather than
/// exponentially small.
inline SymMatrix variance_leading_terms(const MomentSet &m, const StepAnalysis &a, std::int64_t n) {
    const double g = a.gamma, nn = static_cast<double>(n);
    const SymMatrix z = solve(a.T, m.Sigma0);
    const SymMatrix second = detail::w_apply(m, g, solve(a.T, z)) + detail::j_apply(m, g, z);
    return (1.0 / nn) * detail::w_apply(m, g, z) - (1.0 / (g * nn * nn)) * second;
}

inline SymMatrix variance_leading_terms(const MomentSet &m, double gamma, std::int64_t n) {
    return variance_leading_terms(m, analyze_step(m, gamma), n);
}

/// The commonly quoted form (1/n) W T^-1 Sigma0 - (1/(gamma n^2)) W (I - gamma T) T^-2 Sigma0.
/// Kept for comparison; its 1/n^2 coefficient omits the J term above.
inline SymMatrix published_variance_leading_terms(const MomentSet &m, const StepAnalysis &a, std::int64_t n) {
    const double g = a.gamma, nn = static_cast<double>(n);
    const SymMatrix z = solve(a.T, m.Sigma0);
    const SymMatrix second = solve(a.T, z) - g * z; // (I - gamma T) T^-2 Sigma0
    return (1.0 / nn) * detail::w_apply(m, g, z) - (1.0 / (g * nn * nn)) * detail::w_apply(m, g, second);
}

/// Frobenius bound on exact variance minus variance_leading_terms:
/// (d rho^n ||Sigma0|| / n) ((2/mu - gamma)/(n gamma mu_T^2) + 2/(mu mu_T) + 2/(n gamma mu^2 mu_T)).
/// The last summand covers the (I - gamma H)^n tail of the J term.
inline double variance_remainder_bound(const MomentSet &m, const StepAnalysis &a, std::int64_t n) {
    const double g = a.gamma, nn = static_cast<double>(n), d = m.dim, mu = m.mu, mt = a.mu_T;
    const double decay = std::pow(a.rho.rho, nn);
    return d * decay * m.Sigma0.frobenius_norm() / nn *
           ((2.0 / mu - g) / (nn * g * mt * mt) + 2.0 / (mu * mt) + 2.0 / (nn * g * mu * mu * mt));
}

inline double variance_remainder_bound(const MomentSet &m, double gamma, std::int64_t n) {
    return variance_remainder_bound(m, analyze_step(m, gamma), n);
}

struct SmallGammaEquivalents {
    double bias = 0.0;     // eta0^T H^-1 eta0 / (gamma^2 n^2)
    double variance = 0.0; // E[eps^2 X^T H^-1 X] / n
};

inline SmallGammaEquivalents small_gamma_equivalents(const MomentSet &m, double gamma, std::int64_t n) {
    const double nn = static_cast<double>(n);
    SmallGammaEquivalents e;
    e.bias = frobenius_inner(m.H_inv, m.E0) / (gamma * gamma * nn * nn);
    e.variance = frobenius_inner(m.H_inv, m.Sigma0) / nn;
    return e;
}

/// f_n - f* = Tr(H Delta).
inline double excess_risk(const MomentSet &m, const SymMatrix &delta) { return frobenius_inner(m.H, delta); }

inline double total_error_envelope(double bias_risk, double variance_risk) {
    if (bias_risk < 0.0 || variance_risk < 0.0) throw DataError("total_error_envelope: risks must be nonnegative");
    return 2.0 * (bias_risk + variance_risk);
}

struct CovarianceReport {
    std::int64_t n = 0;
    double gamma = 0.0;
    SymMatrix bias_exact;
    SymMatrix variance_exact;
    // Empty when gamma >= gamma_max.
    std::optional<SymMatrix> bias_leading;
    std::optional<SymMatrix> variance_leading;
    std::optional<double> bias_remainder_bound;
    std::optional<double> variance_remainder_bound;

    double bias_risk_exact = 0.0;
    double variance_risk_exact = 0.0;
    std::optional<double> bias_risk_leading;
    std::optional<double> variance_risk_leading;
    double envelope = 0.0;

    double small_gamma_bias = 0.0;
    double small_gamma_variance = 0.0;
};

/// Reports for every n in `ns` (strictly increasing) at one step-size.
inline std::vector<CovarianceReport> covariance_reports(const MomentSet &m, double gamma,
                                                        std::span<const std::int64_t> ns) {
    const auto bias = exact_bias_curve(m, gamma, ns);
    const auto var = exact_variance_curve(m, gamma, ns);
    std::optional<StepAnalysis> step;
    if (gamma < gamma_max(m)) step = analyze_step(m, gamma);
    std::vector<CovarianceReport> out;
    out.reserve(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        CovarianceReport r;
        r.n = ns[i];
        r.gamma = gamma;
        r.bias_exact = bias[i];
        r.variance_exact = var[i];
        r.bias_risk_exact = excess_risk(m, bias[i]);
        r.variance_risk_exact = excess_risk(m, var[i]);
        r.envelope = total_error_envelope(std::max(0.0, r.bias_risk_exact), std::max(0.0, r.variance_risk_exact));
        if (step) {
            r.bias_leading = bias_leading_term(m, *step, r.n);
            r.variance_leading = variance_leading_terms(m, *step, r.n);
            r.bias_remainder_bound = bias_remainder_bound(m, *step, r.n);
            r.variance_remainder_bound = variance_remainder_bound(m, *step, r.n);
            r.bias_risk_leading = excess_risk(m, *r.bias_leading);
            r.variance_risk_leading = excess_risk(m, *r.variance_leading);
        }
        const auto eq = small_gamma_equivalents(m, gamma, r.n);
        r.small_gamma_bias = eq.bias;
        r.small_gamma_variance = eq.variance;
        out.push_back(std::move(r));
    }
    return out;
}

inline CovarianceReport covariance_report(const MomentSet &m, double gamma, std::int64_t n) {
    const std::int64_t ns[] = {n};
    return covariance_reports(m, gamma, ns).front();
}

} // namespace lmsavg

#endif // LMSAVG_ASYMPTOTICS_HPP
