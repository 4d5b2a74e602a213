#ifndef LMSAVG_OPERATOR_ALGEBRA_HPP
#define LMSAVG_OPERATOR_ALGEBRA_HPP

// Linear algebra on the space S_d of symmetric d x d matrices.
//
// S_d is coordinatized by an orthonormal basis (Frobenius inner product):
// the d diagonal units e_i e_i^T first, then (e_i e_j^T + e_j e_i^T)/sqrt(2)
// for i < j in lexicographic order. An operator on S_d is then a plain
// D x D matrix with D = d(d+1)/2, and its operator norm with respect to the
// Frobenius norm is the spectral norm of that matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lmsavg/errors.hpp"

namespace lmsavg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr int kMaxDim = 64;

inline int sym_size(int d) { return d * (d + 1) / 2; }

class SymMatrix {
  public:
    SymMatrix() = default;

    explicit SymMatrix(int d) : m_(Matrix::Zero(check_dim(d), d)) {}

    // Symmetrizes (A + A^T)/2, which is exactly symmetric in floating point.
    explicit SymMatrix(const Matrix &a) {
        detail::require_dim(a.rows() == a.cols() && a.rows() >= 1,
                            "SymMatrix: expected a non-empty square matrix");
        check_dim(static_cast<int>(a.rows()));
        m_ = 0.5 * (a + a.transpose());
    }

    static SymMatrix identity(int d) { return SymMatrix(Matrix::Identity(check_dim(d), d)); }
    static SymMatrix zero(int d) { return SymMatrix(d); }
    static SymMatrix outer(const Vector &v) { return SymMatrix(Matrix(v * v.transpose())); }
    static SymMatrix diagonal(const Vector &v) { return SymMatrix(Matrix(v.asDiagonal())); }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix &matrix() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

    double trace() const { return m_.trace(); }
    double frobenius_norm() const { return m_.norm(); }

    SymMatrix &operator+=(const SymMatrix &o) {
        same_dim(o);
        m_ += o.m_;
        return *this;
    }
    SymMatrix &operator-=(const SymMatrix &o) {
        same_dim(o);
        m_ -= o.m_;
        return *this;
    }
    SymMatrix &operator*=(double s) {
        m_ *= s;
        return *this;
    }

    friend SymMatrix operator+(SymMatrix a, const SymMatrix &b) { return a += b; }
    friend SymMatrix operator-(SymMatrix a, const SymMatrix &b) { return a -= b; }
    friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }
    friend SymMatrix operator*(SymMatrix a, double s) { return a *= s; }

  private:
    static int check_dim(int d) {
        if (d < 1 || d > kMaxDim)
            throw DimensionError("SymMatrix: dimension must lie in [1, " + std::to_string(kMaxDim) +
                                 "], got " + std::to_string(d));
        return d;
    }
    void same_dim(const SymMatrix &o) const {
        detail::require_dim(o.dim() == dim(), "SymMatrix: dimension mismatch");
    }

    Matrix m_;
};

inline double frobenius_inner(const SymMatrix &a, const SymMatrix &b) {
    detail::require_dim(a.dim() == b.dim(), "frobenius_inner: dimension mismatch");
    return a.matrix().cwiseProduct(b.matrix()).sum();
}

class SymBasis {
  public:
    explicit SymBasis(int d) : d_(d) {
        if (d < 1 || d > kMaxDim) throw DimensionError("SymBasis: dimension out of range");
        index_.reserve(sym_size(d));
        for (int i = 0; i < d; ++i) index_.emplace_back(i, i);
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) index_.emplace_back(i, j);
    }

    int dim() const { return d_; }
    int size() const { return static_cast<int>(index_.size()); }
    std::pair<int, int> index(int k) const { return index_.at(k); }

    SymMatrix element(int k) const {
        auto [i, j] = index(k);
        Matrix e = Matrix::Zero(d_, d_);
        if (i == j) {
            e(i, i) = 1.0;
        } else {
            e(i, j) = e(j, i) = 1.0 / std::sqrt(2.0);
        }
        return SymMatrix(e);
    }

  private:
    int d_;
    std::vector<std::pair<int, int>> index_;
};

namespace detail {

inline Vector to_vec(const Matrix &a) {
    const int d = static_cast<int>(a.rows());
    Vector v(sym_size(d));
    const double r2 = std::sqrt(2.0);
    int k = 0;
    for (int i = 0; i < d; ++i) v(k++) = a(i, i);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) v(k++) = r2 * a(i, j);
    return v;
}

inline void from_vec(const Vector &v, Matrix &a) {
    const int d = static_cast<int>(a.rows());
    const double ir2 = 1.0 / std::sqrt(2.0);
    int k = 0;
    for (int i = 0; i < d; ++i) a(i, i) = v(k++);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) a(i, j) = a(j, i) = ir2 * v(k++);
}

inline int dim_from_size(Eigen::Index n) {
    int d = static_cast<int>(std::lround((std::sqrt(8.0 * static_cast<double>(n) + 1.0) - 1.0) / 2.0));
    return sym_size(d) == n ? d : -1;
}

} // namespace detail

inline Vector sym_to_vec(const SymMatrix &a, const SymBasis &basis) {
    detail::require_dim(a.dim() == basis.dim(), "sym_to_vec: matrix dimension " + std::to_string(a.dim()) +
                                                    " does not match basis dimension " +
                                                    std::to_string(basis.dim()));
    return detail::to_vec(a.matrix());
}

inline SymMatrix vec_to_sym(const Vector &v, const SymBasis &basis) {
    detail::require_dim(v.size() == basis.size(), "vec_to_sym: expected length " + std::to_string(basis.size()) +
                                                       ", got " + std::to_string(v.size()));
    Matrix a(basis.dim(), basis.dim());
    detail::from_vec(v, a);
    return SymMatrix(a);
}

inline Vector sym_to_vec(const SymMatrix &a) { return detail::to_vec(a.matrix()); }

inline SymMatrix vec_to_sym(const Vector &v) {
    const int d = detail::dim_from_size(v.size());
    detail::require_dim(d >= 1, "vec_to_sym: length is not a triangular number");
    Matrix a(d, d);
    detail::from_vec(v, a);
    return SymMatrix(a);
}

/// A linear map on S_d stored in SymBasis coordinates.
class SymOperator {
  public:
    SymOperator() = default;

    SymOperator(int d, Matrix coords, bool symmetric) : d_(d), m_(std::move(coords)), symmetric_(symmetric) {
        detail::require_dim(d >= 1 && d <= kMaxDim, "SymOperator: dimension out of range");
        detail::require_dim(m_.rows() == sym_size(d) && m_.cols() == sym_size(d),
                            "SymOperator: coordinate matrix must be D x D with D = d(d+1)/2");
        if (symmetric_) {
            const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
            const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
            if (asym > 1e-10 * scale)
                throw NumericalError("SymOperator: flagged symmetric but asymmetry is " + std::to_string(asym));
            m_ = 0.5 * (m_ + m_.transpose()).eval();
        }
    }

    static SymOperator identity(int d) { return {d, Matrix::Identity(sym_size(d), sym_size(d)), true}; }
    static SymOperator zero(int d) { return {d, Matrix::Zero(sym_size(d), sym_size(d)), true}; }

    // Coordinates of the linear map A -> f(A), read off column by column.
    template <typename F>
    static SymOperator from_map(int d, F &&f, bool symmetric) {
        SymBasis basis(d);
        Matrix m(basis.size(), basis.size());
        for (int k = 0; k < basis.size(); ++k) m.col(k) = detail::to_vec(f(basis.element(k)).matrix());
        return {d, std::move(m), symmetric};
    }

    int dim() const { return d_; }
    int size() const { return static_cast<int>(m_.rows()); }
    const Matrix &matrix() const { return m_; }
    bool is_symmetric() const { return symmetric_; }

    friend SymOperator operator+(const SymOperator &a, const SymOperator &b) {
        detail::require_dim(a.d_ == b.d_, "SymOperator: dimension mismatch");
        return {a.d_, a.m_ + b.m_, a.symmetric_ && b.symmetric_};
    }
    friend SymOperator operator-(const SymOperator &a, const SymOperator &b) {
        detail::require_dim(a.d_ == b.d_, "SymOperator: dimension mismatch");
        return {a.d_, a.m_ - b.m_, a.symmetric_ && b.symmetric_};
    }
    friend SymOperator operator*(double s, const SymOperator &a) { return {a.d_, s * a.m_, a.symmetric_}; }

  private:
    int d_ = 0;
    Matrix m_;
    bool symmetric_ = false;
};

inline SymMatrix apply(const SymOperator &op, const SymMatrix &a) {
    detail::require_dim(op.dim() == a.dim(), "apply: operator on S_" + std::to_string(op.dim()) +
                                                 " applied to a " + std::to_string(a.dim()) + "x" +
                                                 std::to_string(a.dim()) + " matrix");
    Matrix out(a.dim(), a.dim());
    detail::from_vec(op.matrix() * detail::to_vec(a.matrix()), out);
    return SymMatrix(out);
}

/// H_L + H_R restricted to S_d, i.e. A -> HA + AH.
inline SymOperator left_right_operator(const SymMatrix &h) {
    const Matrix &hm = h.matrix();
    return SymOperator::from_map(
        h.dim(), [&](const SymMatrix &a) { return SymMatrix(Matrix(hm * a.matrix() + a.matrix() * hm)); }, true);
}

/// A -> Q^T A Q. Orthogonal on S_d when Q is orthogonal.
inline SymOperator congruence_operator(const Matrix &q) {
    detail::require_dim(q.rows() == q.cols(), "congruence_operator: Q must be square");
    return SymOperator::from_map(
        static_cast<int>(q.rows()),
        [&](const SymMatrix &a) { return SymMatrix(Matrix(q.transpose() * a.matrix() * q)); }, false);
}

/// Weighted average of A -> (x^T A x) x x^T over the samples.
///
/// With u = vec(x x^T) we have x^T A x = <u, vec(A)>, so each sample
/// contributes the rank-one coordinate matrix u u^T.
inline SymOperator fourth_moment_operator(std::span<const Vector> samples, std::span<const double> weights) {
    if (samples.empty()) throw DataError("fourth_moment_operator: empty sample list");
    detail::require_dim(weights.size() == samples.size(), "fourth_moment_operator: one weight per sample");
    const int d = static_cast<int>(samples.front().size());
    detail::require_dim(d >= 1 && d <= kMaxDim, "fourth_moment_operator: dimension out of range");
    const int big = sym_size(d);

    // Batched rank updates; a single syrk per block is far faster than
    // one rank-one update per sample once D is in the hundreds.
    constexpr std::size_t block = 1024;
    Matrix acc = Matrix::Zero(big, big);
    Matrix u(big, static_cast<Eigen::Index>(std::min(block, samples.size())));
    for (std::size_t start = 0; start < samples.size(); start += block) {
        const std::size_t stop = std::min(samples.size(), start + block);
        const auto cols = static_cast<Eigen::Index>(stop - start);
        for (std::size_t s = start; s < stop; ++s) {
            const Vector &x = samples[s];
            detail::require_dim(x.size() == d, "fourth_moment_operator: inconsistent sample dimension");
            if (weights[s] < 0.0) throw DataError("fourth_moment_operator: negative weight");
            u.col(static_cast<Eigen::Index>(s - start)) =
                std::sqrt(weights[s]) * detail::to_vec(Matrix(x * x.transpose()));
        }
        acc.selfadjointView<Eigen::Lower>().rankUpdate(u.leftCols(cols));
    }
    Matrix full = acc.selfadjointView<Eigen::Lower>();
    return {d, std::move(full), true};
}

inline SymOperator fourth_moment_operator_from_samples(std::span<const Vector> samples) {
    if (samples.empty()) throw DataError("fourth_moment_operator_from_samples: empty sample list");
    std::vector<double> w(samples.size(), 1.0 / static_cast<double>(samples.size()));
    return fourth_moment_operator(samples, w);
}

namespace detail {

inline void require_symmetric(const SymOperator &op, const char *what) {
    if (!op.is_symmetric())
        throw Error(std::string(what) + ": only symmetric operators are supported");
}

inline Vector eigenvalues(const SymOperator &op) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(op.matrix(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
    return es.eigenvalues();
}

} // namespace detail

inline double operator_norm(const SymOperator &op) {
    detail::require_symmetric(op, "operator_norm");
    return detail::eigenvalues(op).cwiseAbs().maxCoeff();
}

inline double smallest_eigenvalue(const SymOperator &op) {
    detail::require_symmetric(op, "smallest_eigenvalue");
    return detail::eigenvalues(op).minCoeff();
}

inline double largest_eigenvalue(const SymOperator &op) {
    detail::require_symmetric(op, "largest_eigenvalue");
    return detail::eigenvalues(op).maxCoeff();
}

/// Solves op(A) = B for symmetric positive definite op.
inline SymMatrix solve(const SymOperator &op, const SymMatrix &b) {
    detail::require_symmetric(op, "solve");
    detail::require_dim(op.dim() == b.dim(), "solve: dimension mismatch");
    const Vector ev = detail::eigenvalues(op);
    const double norm = ev.cwiseAbs().maxCoeff();
    const double lo = ev.minCoeff();
    if (!(lo > 1e-12 * norm)) {
        std::ostringstream msg;
        msg << "solve: operator is not positive definite (smallest eigenvalue " << lo << ", norm " << norm << ")";
        throw NumericalError(msg.str());
    }
    Eigen::LLT<Matrix> llt(op.matrix());
    if (llt.info() != Eigen::Success) throw NumericalError("solve: Cholesky factorization failed");
    const Vector rhs = detail::to_vec(b.matrix());
    Vector x = llt.solve(rhs);
    // One refinement sweep keeps the relative residual well below 1e-10.
    x += llt.solve(rhs - op.matrix() * x);
    Matrix out(b.dim(), b.dim());
    detail::from_vec(x, out);
    return SymMatrix(out);
}

} // namespace lmsavg

#endif // LMSAVG_OPERATOR_ALGEBRA_HPP
