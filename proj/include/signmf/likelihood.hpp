#pragma once

#include "signmf/special_functions.hpp"
#include "signmf/types.hpp"

#include <cmath>
#include <string>

namespace signmf {

namespace detail {

inline void check_same_shape(const Matrix& v, const Matrix& wh, const char* what) {
    if (v.rows() != wh.rows() || v.cols() != wh.cols())
        throw validation_error(std::string(what) + ": dimension mismatch (" + std::to_string(v.rows()) + "x" +
                               std::to_string(v.cols()) + " vs " + std::to_string(wh.rows()) + "x" +
                               std::to_string(wh.cols()) + ")");
}

inline void check_supported(double v, double mu, Eigen::Index n, Eigen::Index m, const char* what) {
    if (v > 0.0 && mu <= 0.0)
        throw numerical_error(std::string(what) + ": fitted mean is zero at a positive count (row " +
                              std::to_string(n + 1) + ", column " + std::to_string(m + 1) +
                              "); degenerate factor");
}

// One cell of the generalized KL divergence, 0*log(0/x) = 0.
inline double gkl_cell(double v, double mu) {
    double t = mu - v;
    if (v > 0.0) t += v * std::log(v / mu);
    return t;
}

// One cell of the Negative Binomial divergence; alpha = inf falls back to the
// Poisson (GKL) cell, which is its pointwise limit. log1p keeps the second
// term accurate when alpha dwarfs the counts, where the ratio sits at 1+eps.
inline double nb_div_cell(double v, double mu, double alpha) {
    if (std::isinf(alpha)) return gkl_cell(v, mu);
    double t = -(alpha + v) * std::log1p((v - mu) / (alpha + mu));
    if (v > 0.0) t += v * std::log(v / mu);
    return t;
}

// Poisson log-pmf at v with mean mu, 0*log(0) = 0.
inline double poisson_cell(double v, double mu) {
    double t = -mu - std::lgamma(v + 1.0);
    if (v > 0.0) t += v * std::log(mu);
    return t;
}

// NB log-pmf: size alpha, success probability mu/(alpha+mu); gamma functions
// in place of the binomial coefficient so real alpha is supported.
inline double nb_loglik_cell(double v, double mu, double alpha) {
    if (std::isinf(alpha)) return poisson_cell(v, mu);
    double t = std::lgamma(v + alpha) - std::lgamma(alpha) - std::lgamma(v + 1.0) -
               alpha * std::log1p(mu / alpha);
    if (v > 0.0) t += v * std::log(mu / (alpha + mu));
    return t;
}

}  // namespace detail

/// Generalized Kullback-Leibler divergence sum_nm [V log(V/WH) - V + WH].
inline double gkl_divergence(const Matrix& v, const Matrix& wh) {
    detail::check_same_shape(v, wh, "gkl_divergence");
    CompensatedSum acc;
    for (Eigen::Index m = 0; m < v.cols(); ++m)
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            detail::check_supported(v(n, m), wh(n, m), n, m, "gkl_divergence");
            acc.add(detail::gkl_cell(v(n, m), wh(n, m)));
        }
    return acc.value();
}

inline double gkl_divergence(const CountMatrix& v, const Matrix& wh) { return gkl_divergence(v.counts, wh); }

/// Negative Binomial divergence
///   d_N(V||WH) = sum_nm { V log(V/WH) - (a_n+V) log((a_n+V)/(a_n+WH)) },
/// zero iff V = WH. Rows with alpha = inf contribute their GKL terms.
inline double nb_divergence(const Matrix& v, const Matrix& wh, const DispersionVector& alphas) {
    detail::check_same_shape(v, wh, "nb_divergence");
    validate_dispersion(alphas, v.rows());
    CompensatedSum acc;
    for (Eigen::Index m = 0; m < v.cols(); ++m)
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            detail::check_supported(v(n, m), wh(n, m), n, m, "nb_divergence");
            acc.add(detail::nb_div_cell(v(n, m), wh(n, m), alphas[n]));
        }
    return acc.value();
}

inline double nb_divergence(const CountMatrix& v, const Matrix& wh, const DispersionVector& alphas) {
    return nb_divergence(v.counts, wh, alphas);
}

/// Full Negative Binomial log-likelihood with per-patient dispersion.
/// -loglik equals nb_divergence up to a (W,H)-independent constant.
inline double nb_loglik(const Matrix& v, const Matrix& wh, const DispersionVector& alphas) {
    detail::check_same_shape(v, wh, "nb_loglik");
    validate_dispersion(alphas, v.rows());
    CompensatedSum acc;
    for (Eigen::Index m = 0; m < v.cols(); ++m)
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            detail::check_supported(v(n, m), wh(n, m), n, m, "nb_loglik");
            acc.add(detail::nb_loglik_cell(v(n, m), wh(n, m), alphas[n]));
        }
    return acc.value();
}

inline double nb_loglik(const CountMatrix& v, const Matrix& wh, const DispersionVector& alphas) {
    return nb_loglik(v.counts, wh, alphas);
}

/// Poisson log-likelihood; -loglik equals gkl_divergence up to a data-only
/// constant.
inline double poisson_loglik(const Matrix& v, const Matrix& wh) {
    detail::check_same_shape(v, wh, "poisson_loglik");
    CompensatedSum acc;
    for (Eigen::Index m = 0; m < v.cols(); ++m)
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            detail::check_supported(v(n, m), wh(n, m), n, m, "poisson_loglik");
            acc.add(detail::poisson_cell(v(n, m), wh(n, m)));
        }
    return acc.value();
}

inline double poisson_loglik(const CountMatrix& v, const Matrix& wh) { return poisson_loglik(v.counts, wh); }

/// Rescale so each signature row sums to one, absorbing the scale into the
/// exposures. The product W*H is unchanged.
inline Factorization normalize_factorization(const Factorization& f) {
    Factorization out = f;
    for (Eigen::Index k = 0; k < out.signatures.rows(); ++k) {
        const double s = out.signatures.row(k).sum();
        if (s <= 0.0)
            throw numerical_error("normalize_factorization: signature row " + std::to_string(k + 1) +
                                  " sums to zero (rank collapse)");
        out.signatures.row(k) /= s;
        out.exposures.col(k) *= s;
    }
    return out;
}

}  // namespace signmf
