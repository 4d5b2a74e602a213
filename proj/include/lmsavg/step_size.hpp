#ifndef LMSAVG_STEP_SIZE_HPP
#define LMSAVG_STEP_SIZE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "lmsavg/errors.hpp"
#include "lmsavg/moments.hpp"
#include "lmsavg/operator_algebra.hpp"

namespace lmsavg {

/// T = H_L + H_R - gamma M on S_d.
inline SymOperator t_operator(const MomentSet &m, double gamma) {
    return left_right_operator(m.H) - gamma * m.M;
}

namespace detail {

// Largest generalized eigenvalue of the symmetric-definite pencil (A, B),
// refined by the Rayleigh quotient on the original matrices. The Cholesky
// reduction alone loses a few ulps even on 1x1 pencils.
inline double largest_pencil_eigenvalue(const Matrix &a, const Matrix &b) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(a, b, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (ges.info() != Eigen::Success) throw NumericalError("generalized eigensolver failed (is H positive definite?)");
    Eigen::Index top = 0;
    ges.eigenvalues().maxCoeff(&top);
    const Vector v = ges.eigenvectors().col(top);
    const double den = v.dot(b * v);
    if (!(den > 0.0)) return ges.eigenvalues()(top);
    return v.dot(a * v) / den;
}

inline double reciprocal_or_inf(double lambda, double scale) {
    if (!(lambda > 1e-12 * scale)) return std::numeric_limits<double>::infinity();
    return 1.0 / lambda;
}

} // namespace detail

/// Supremum of gamma with 2 Tr(A H A) - gamma E[(X^T A X)^2] > 0 for all
/// symmetric A, i.e. 1 / lambda_max of the pencil (M, H_L + H_R).
inline double gamma_max(const MomentSet &m) {
    if (!(m.mu > 0.0)) throw NumericalError("gamma_max: H is singular");
    const SymOperator s = left_right_operator(m.H);
    const double lam = detail::largest_pencil_eigenvalue(m.M.matrix(), s.matrix());
    return detail::reciprocal_or_inf(lam, operator_norm(m.M) / operator_norm(s));
}

inline double gamma_max_det(const MomentSet &m) { return 2.0 / m.L; }

inline double trace_bound(const MomentSet &m) { return 2.0 / m.trace_H; }

/// The earlier, more conservative criterion: supremum of gamma with
/// H - gamma E[(X^T X) X X^T] positive definite.
inline double gamma_max_norm_criterion(const MomentSet &m) {
    const SymMatrix r = apply(m.M, SymMatrix::identity(m.dim)); // E[(X^T X) X X^T]
    const double lam = detail::largest_pencil_eigenvalue(r.matrix(), m.H.matrix());
    return detail::reciprocal_or_inf(lam, r.matrix().norm() / m.H.matrix().norm());
}

struct ContractionFactors {
    double rho_T = 0.0;
    double rho_H = 0.0;
    double rho = 0.0;
};

inline ContractionFactors contraction_factors(const MomentSet &m, double gamma) {
    if (!(gamma > 0.0)) throw NumericalError("contraction_factors: gamma must be positive");
    ContractionFactors f;
    f.rho_T = operator_norm(SymOperator::identity(m.dim) - gamma * t_operator(m, gamma));
    f.rho_H = (1.0 - gamma * m.eigenvalues.array()).abs().maxCoeff();
    f.rho = std::max(f.rho_T, f.rho_H);
    return f;
}

/// Smallest eigenvalue of T(gamma).
inline double mu_T(const MomentSet &m, double gamma) { return smallest_eigenvalue(t_operator(m, gamma)); }

/// Analytic upper bound on rho for 0 < gamma < gamma_max.
///
/// d >= 2: 1 - 2 gamma (1 - gamma/gamma_max) mu when gamma/gamma_max >= 1/2,
///         1 - gamma mu otherwise.
/// d == 1: max(|1 - gamma mu|, 1 - 2 gamma (1 - gamma/gamma_max) mu).
inline double lemma1_bound(double gamma, double mu, double gmax, int d) {
    if (!(gamma > 0.0) || !(gamma < gmax)) {
        std::ostringstream msg;
        msg << "lemma1_bound: gamma = " << gamma << " outside (0, gamma_max = " << gmax << ")";
        throw NumericalError(msg.str());
    }
    const double alpha = gamma / gmax;
    const double tight = 1.0 - 2.0 * gamma * (1.0 - alpha) * mu;
    if (d == 1) return std::max(std::abs(1.0 - gamma * mu), tight);
    return alpha >= 0.5 ? tight : 1.0 - gamma * mu;
}

struct StepSizeEntry {
    double gamma = 0.0;
    double rho_T = 0.0;
    double rho_H = 0.0;
    double rho = 0.0;
    double mu_T = 0.0;
    double lemma1_bound = std::numeric_limits<double>::quiet_NaN(); // NaN outside (0, gamma_max)
    bool T_positive = false;
};

struct StepSizeReport {
    double gamma_max = 0.0;
    double gamma_max_det = 0.0;
    double trace_bound = 0.0;
    double mu = 0.0;
    std::size_t sample_count = 0;
    std::vector<StepSizeEntry> entries;
};

inline StepSizeReport step_size_report(const MomentSet &m, std::span<const double> gammas) {
    StepSizeReport r;
    r.gamma_max = gamma_max(m);
    r.gamma_max_det = gamma_max_det(m);
    r.trace_bound = trace_bound(m);
    r.mu = m.mu;
    r.sample_count = m.sample_count;
    for (double g : gammas) {
        StepSizeEntry e;
        e.gamma = g;
        const ContractionFactors f = contraction_factors(m, g);
        e.rho_T = f.rho_T;
        e.rho_H = f.rho_H;
        e.rho = f.rho;
        e.mu_T = mu_T(m, g);
        e.T_positive = e.mu_T > 0.0;
        if (g > 0.0 && g < r.gamma_max) e.lemma1_bound = lemma1_bound(g, m.mu, r.gamma_max, m.dim);
        r.entries.push_back(e);
    }
    return r;
}

} // namespace lmsavg

#endif // LMSAVG_STEP_SIZE_HPP
