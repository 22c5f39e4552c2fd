// Reference implementations kept deliberately naive and separate from the
// library: plain loops, direct formulas via std::lgamma, no compensated
// summation. Tests compare the fast paths against these.
#pragma once

#include <signmf/types.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracles {

using signmf::Matrix;
using signmf::Vector;

// sum of v*log(v/u) - v + u with the 0*log(0) := 0 convention
inline double gkl_naive(const Matrix& v, const Matrix& u) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
            const double a = v(i, j), b = u(i, j);
            if (a > 0.0) total += a * std::log(a / b) - a + b;
            else total += b;
        }
    return total;
}

inline double nb_div_naive(const Matrix& v, const Matrix& u, const Vector& alphas) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double a = alphas(i);
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
            const double x = v(i, j), m = u(i, j);
            if (std::isinf(a)) {
                if (x > 0.0) total += x * std::log(x / m) - x + m;
                else total += m;
            } else {
                if (x > 0.0) total += x * std::log(x / m);
                total += (a + x) * std::log((a + m) / (a + x));
            }
        }
    }
    return total;
}

// per-cell NB log pmf with the Gamma-function binomial coefficient. For
// integer counts lgamma(v+a) - lgamma(a) is summed as log(a)+...+log(a+v-1):
// the subtraction of two ~a*log(a) sized values loses ~1e-8 absolute at
// a ~ 1e7, far too coarse for grid-versus-solver likelihood comparisons.
inline double nb_logpmf(double v, double mu, double alpha) {
    if (mu == 0.0) return v == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    double rising = 0.0;
    if (v == std::floor(v) && v < 1e6) {
        for (double i = 0.0; i < v; ++i) rising += std::log(alpha + i);
    } else {
        rising = std::lgamma(v + alpha) - std::lgamma(alpha);
    }
    return rising - std::lgamma(v + 1.0) + v * std::log(mu / (alpha + mu)) +
           alpha * std::log(alpha / (alpha + mu));
}

inline double nb_loglik_naive(const Matrix& v, const Matrix& u, const Vector& alphas) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j) total += nb_logpmf(v(i, j), u(i, j), alphas(i));
    return total;
}

inline double poisson_logpmf(double v, double mu) {
    if (mu == 0.0) return v == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return v * std::log(mu) - mu - std::lgamma(v + 1.0);
}

inline double poisson_loglik_naive(const Matrix& v, const Matrix& u) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j) total += poisson_logpmf(v(i, j), u(i, j));
    return total;
}

// log-spaced grid search over alpha for one row; returns the argmax
inline double grid_alpha(const Vector& v, const Vector& mu, double lo, double hi, int points) {
    double best_alpha = lo, best_ll = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < points; ++g) {
        const double t = static_cast<double>(g) / static_cast<double>(points - 1);
        const double alpha = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
        double ll = 0.0;
        for (Eigen::Index j = 0; j < v.size(); ++j) ll += nb_logpmf(v(j), mu(j), alpha);
        if (ll > best_ll) {
            best_ll = ll;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

inline double grid_loglik(const Vector& v, const Vector& mu, double alpha) {
    double ll = 0.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) ll += nb_logpmf(v(j), mu(j), alpha);
    return ll;
}

// Exact rank-k instance: V = A*B with small random non-negative integers,
// padded so no row or column of V is zero.
struct Planted {
    Matrix v, w, h;
};

inline Planted planted_instance(Eigen::Index n, Eigen::Index m, int k, unsigned seed) {
    std::mt19937_64 rng(seed);
    // strictly positive exposures keep every factor visible in any subset of rows
    std::uniform_int_distribution<int> w_entry(1, 8), h_entry(0, 6);
    Planted p;
    for (int attempt = 0; attempt < 200; ++attempt) {
        p.w.resize(n, k);
        p.h.resize(k, m);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) p.w(i, j) = w_entry(rng);
        for (int i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < m; ++j) p.h(i, j) = h_entry(rng);
        p.v = p.w * p.h;
        bool ok = true;
        for (Eigen::Index i = 0; i < n && ok; ++i)
            if (p.v.row(i).sum() == 0.0) ok = false;
        if (ok) return p;
    }
    throw std::runtime_error("planted_instance: could not build a zero-free instance");
}

// random count matrix with Poisson-ish entries, no all-zero rows
inline Matrix random_counts(Eigen::Index n, Eigen::Index m, double mean, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::poisson_distribution<long> pois(mean);
    Matrix v(n, m);
    for (;;) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < m; ++j) v(i, j) = static_cast<double>(pois(rng));
        bool ok = true;
        for (Eigen::Index i = 0; i < n && ok; ++i)
            if (v.row(i).sum() == 0.0) ok = false;
        if (ok) return v;
    }
}

// ---- frozen high-precision constants (40-digit reference arithmetic) ----
namespace frozen {
// digamma at 1, 0.5, 0.001, 3.75, 123.456
inline constexpr double psi_1 = -0.577215664901532860607;
inline constexpr double psi_half = -1.96351002602142347944;
inline constexpr double psi_0_001 = -1000.57557193181030047;
inline constexpr double psi_3_75 = 1.18253738861179622864;
inline constexpr double psi_123_456 = 4.81182932382898538732;
// trigamma at the same points
inline constexpr double psi1_1 = 1.64493406684822643647;
inline constexpr double psi1_half = 4.93480220054467930942;
inline constexpr double psi1_0_001 = 1000001.64253319586898;
inline constexpr double psi1_3_75 = 0.305339852690253075486;
inline constexpr double psi1_123_456 = 0.00813294583427819801014;
// standard normal quantile at 0.975
inline constexpr double z_975 = 1.95996398454005423552;
// nb divergence of V=[[2,0,5],[1,3,4]] vs [[1.5,0.5,4.0],[2.0,2.5,3.5]], alpha=(5,7)
inline constexpr double nb_div_2x3 = 0.900826068553668709458;
// gkl([[2]] vs [[1]]) = 2 log 2 - 1
inline constexpr double gkl_2_1 = 0.386294361119890618834;
// log Poisson(3; mu=3)
inline constexpr double poisson_ll_3_3 = -1.49592260322372592663;
// log NB(0; mu=1, alpha=1) = log(1/2)
inline constexpr double minus_log2 = -0.693147180559945309417;
// log NB(4; mu=2.5, alpha=3)
inline constexpr double nb_ll_4_25_3 = -2.2641866510658172416;
}  // namespace frozen

}  // namespace oracles
