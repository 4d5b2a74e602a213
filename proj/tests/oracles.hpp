#ifndef LMSAVG_TESTS_ORACLES_HPP
#define LMSAVG_TESTS_ORACLES_HPP

// Independent reference computations used by the tests. Nothing here calls
// the asymptotics module.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lmsavg/moments.hpp"

namespace oracle {

using lmsavg::Matrix;
using lmsavg::Vector;

/// One joint outcome of (X, eps) with its probability.
struct Outcome {
    Vector x;
    double eps = 0.0;
    double p = 0.0;
};

/// E[eta_bar_n eta_bar_n^T] by enumerating every sequence of n - 1 i.i.d.
/// outcomes, with eta <- (I - gamma x x^T) eta - gamma eps x and
/// eta_bar_n = (eta_0 + ... + eta_{n-1}) / n.
inline Matrix enumerate_covariance(const std::vector<Outcome> &outcomes, const Vector &eta0, double gamma, int n) {
    const int d = static_cast<int>(eta0.size());
    Matrix acc = Matrix::Zero(d, d);
    std::function<void(int, const Vector &, const Vector &, double)> rec = [&](int depth, const Vector &eta,
                                                                              const Vector &sum, double prob) {
        if (depth == n - 1) {
            const Vector bar = sum / n;
            acc += prob * bar * bar.transpose();
            return;
        }
        for (const Outcome &o : outcomes) {
            const Vector next = eta - gamma * (o.x.dot(eta) + o.eps) * o.x;
            rec(depth + 1, next, sum + next, prob * o.p);
        }
    };
    rec(0, eta0, eta0, 1.0);
    return acc;
}

/// All 2^d sign vectors, equiprobable.
inline std::vector<Vector> rademacher_points(int d) {
    std::vector<Vector> pts;
    for (int mask = 0; mask < (1 << d); ++mask) {
        Vector x(d);
        for (int j = 0; j < d; ++j) x(j) = (mask >> j) & 1 ? 1.0 : -1.0;
        pts.push_back(x);
    }
    return pts;
}

/// Outcomes of X uniform over `points` with eps independent and uniform over `noise`.
inline std::vector<Outcome> product_outcomes(const std::vector<Vector> &points, const std::vector<double> &noise) {
    std::vector<Outcome> out;
    for (const Vector &x : points)
        for (double e : noise)
            out.push_back({x, e, 1.0 / static_cast<double>(points.size() * noise.size())});
    return out;
}

/// Deterministic scalar recursion with X = 1: eta_k = (1 - gamma)^k eta_0.
inline double scalar_bias(double gamma, double eta0, int n) {
    double eta = eta0, sum = 0.0;
    for (int k = 0; k < n; ++k) {
        sum += eta;
        eta *= 1.0 - gamma;
    }
    const double bar = sum / n;
    return bar * bar;
}

/// Scalar model X = 1, eps i.i.d. with variance s2, eta_0 = 0. The averaged
/// iterate is a linear combination of the eps_k; its variance is the sum of
/// squared coefficients times s2.
inline double scalar_variance(double gamma, double s2, int n) {
    // eta_m = -gamma sum_{k=1}^{m} (1-gamma)^{m-k} eps_k, so eps_k enters
    // eta_bar_n with weight -(gamma/n) sum_{m=k}^{n-1} (1-gamma)^{m-k}.
    double total = 0.0;
    for (int k = 1; k < n; ++k) {
        double w = 0.0, f = 1.0;
        for (int m = k; m < n; ++m) {
            w += f;
            f *= 1.0 - gamma;
        }
        w *= gamma / n;
        total += w * w;
    }
    return s2 * total;
}

inline Matrix random_spd(int d, std::mt19937_64 &rng, double min_eig = 0.1) {
    std::normal_distribution<double> normal;
    Matrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
    Matrix h = a * a.transpose() / d + min_eig * Matrix::Identity(d, d);
    return 0.5 * (h + h.transpose());
}

inline Vector random_vector(int d, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = normal(rng);
    return v;
}

/// Random discrete atoms with random positive probabilities.
inline std::vector<lmsavg::Atom> random_atoms(int d, int k, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> unif(0.2, 1.0);
    std::vector<lmsavg::Atom> atoms;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        lmsavg::Atom a;
        a.x = random_vector(d, rng) * unif(rng) * 1.5;
        a.y = random_vector(1, rng)(0);
        a.probability = unif(rng);
        total += a.probability;
        atoms.push_back(a);
    }
    for (auto &a : atoms) a.probability /= total;
    return atoms;
}

struct NamedSpec {
    std::string name;
    lmsavg::ProblemSpec spec;
};

/// Gaussian, discrete (independent and residual noise) and empirical specs.
inline std::vector<NamedSpec> spec_battery(std::uint64_t seed = 20240611) {
    std::mt19937_64 rng(seed);
    std::vector<NamedSpec> out;
    using namespace lmsavg;
    out.push_back({"gaussian-identity-3", gaussian_spec(SymMatrix::identity(3), Vector::Ones(3), Vector::Zero(3), 1.0)});
    out.push_back({"gaussian-harmonic-5", harmonic_gaussian_spec(5, 0.5, Vector::Ones(5), Vector::Zero(5))});
    for (int i = 0; i < 5; ++i) {
        const int d = 2 + i % 3;
        out.push_back({"gaussian-random-" + std::to_string(i),
                       gaussian_spec(SymMatrix(random_spd(d, rng)), random_vector(d, rng), random_vector(d, rng),
                                     0.3 + 0.2 * i)});
    }
    for (int i = 0; i < 4; ++i) {
        const int d = 1 + i % 3;
        out.push_back({"discrete-independent-" + std::to_string(i),
                       discrete_spec(random_atoms(d, 3 + 2 * i, rng), random_vector(d, rng), random_vector(d, rng),
                                     0.5 + 0.25 * i)});
    }
    for (int i = 0; i < 4; ++i) {
        const int d = 1 + i % 3;
        out.push_back({"discrete-residual-" + std::to_string(i),
                       discrete_spec(random_atoms(d, d + 3 + i, rng), random_vector(d, rng))});
    }
    for (int i = 0; i < 6; ++i) {
        const int d = 2 + i % 2;
        const int rows = 15 + 5 * i;
        const Vector w = random_vector(d, rng);
        std::normal_distribution<double> noise(0.0, 0.5);
        std::vector<Atom> data;
        for (int r = 0; r < rows; ++r) {
            Atom a;
            a.x = random_vector(d, rng);
            a.y = a.x.dot(w) + noise(rng);
            data.push_back(a);
        }
        out.push_back({"empirical-" + std::to_string(i), empirical_spec(data, random_vector(d, rng))});
    }
    return out;
}

} // namespace oracle

#endif // LMSAVG_TESTS_ORACLES_HPP
