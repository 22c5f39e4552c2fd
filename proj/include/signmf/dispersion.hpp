#pragma once

#include "signmf/likelihood.hpp"
#include "signmf/special_functions.hpp"
#include "signmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace signmf {

/// Shape-parameter search settings. Estimates are clamped to
/// [alpha_min, alpha_max]; a profile still increasing at alpha_max is
/// reported as the Poisson limit (+infinity).
struct DispersionConfig {
    double alpha_min = 1e-3;
    double alpha_max = 1e7;
    double tol = 1e-12;  // on log(alpha)
    int max_iters = 200;
};

inline void validate_dispersion_config(const DispersionConfig& cfg) {
    if (!(cfg.alpha_min > 0.0) || !(cfg.alpha_max > cfg.alpha_min))
        throw validation_error("dispersion: need 0 < alpha_min < alpha_max");
    if (!(cfg.tol > 0.0) || cfg.max_iters < 1)
        throw validation_error("dispersion: tol must be positive and max_iters >= 1");
}

struct AlphaScore {
    double score = 0.0;      // d loglik / d alpha
    double curvature = 0.0;  // d2 loglik / d alpha2
};

/// First and second derivative in alpha of the NB log-likelihood of the
/// cells (v_j, mu_j), means held fixed.
inline AlphaScore nb_alpha_score(const Vector& v, const Vector& mu, double alpha) {
    if (v.size() != mu.size()) throw validation_error("nb_alpha_score: length mismatch");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw validation_error("nb_alpha_score: alpha must be finite and positive");
    const double psi_alpha = digamma(alpha);
    const double psi1_alpha = trigamma(alpha);
    CompensatedSum score, curv;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        const double vj = v(j), mj = mu(j);
        if (vj > 0.0 && !(mj > 0.0))
            throw numerical_error("nb_alpha_score: zero mean at a positive count");
        const double am = alpha + mj;
        // log(alpha) - log(alpha + mu) via log1p: the difference survives even
        // when alpha dwarfs mu and both logs agree to machine precision
        score.add(digamma(vj + alpha) - psi_alpha - std::log1p(mj / alpha) + 1.0 - (vj + alpha) / am);
        curv.add(trigamma(vj + alpha) - psi1_alpha + 1.0 / alpha - 1.0 / am + (vj - mj) / (am * am));
    }
    return {score.value(), curv.value()};
}

namespace detail {

// Moment starting point: Var = mu + mu^2/alpha solved with the sample
// moments of the counts, clamped into the search interval.
inline double moment_alpha(const Vector& v, const DispersionConfig& cfg) {
    const double n = static_cast<double>(v.size());
    const double mean = v.mean();
    double ss = 0.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) ss += (v(j) - mean) * (v(j) - mean);
    const double var = n > 1.0 ? ss / (n - 1.0) : 0.0;
    const double excess = std::max(var - mean, 1e-8);
    const double alpha0 = mean > 0.0 ? mean * mean / excess : 1.0;
    return std::clamp(alpha0, cfg.alpha_min, cfg.alpha_max);
}

// Newton in log(alpha) with a sign-change bracket as safeguard. Callers have
// already established score(lo) > 0 > score(hi).
inline double solve_alpha(const Vector& v, const Vector& mu, double lo, double hi, double init,
                          const DispersionConfig& cfg) {
    double t_lo = std::log(lo), t_hi = std::log(hi);
    double t = std::clamp(std::log(init), t_lo, t_hi);
    for (int it = 0; it < cfg.max_iters; ++it) {
        const double alpha = std::exp(t);
        const AlphaScore s = nb_alpha_score(v, mu, alpha);
        if (s.score > 0.0)
            t_lo = t;
        else
            t_hi = t;
        // d/dt and d2/dt2 of the profile at t = log(alpha)
        const double g = alpha * s.score;
        const double hcurv = alpha * s.score + alpha * alpha * s.curvature;
        double t_next;
        if (hcurv < 0.0) {
            t_next = t - g / hcurv;
            if (!(t_next > t_lo && t_next < t_hi)) t_next = 0.5 * (t_lo + t_hi);
        } else {
            t_next = 0.5 * (t_lo + t_hi);
        }
        if (std::abs(t_next - t) < cfg.tol * (1.0 + std::abs(t)) || t_hi - t_lo < cfg.tol) return std::exp(t_next);
        t = t_next;
    }
    return std::exp(0.5 * (t_lo + t_hi));
}

inline double estimate_alpha(const Vector& v, const Vector& mu, const DispersionConfig& cfg) {
    const AlphaScore at_max = nb_alpha_score(v, mu, cfg.alpha_max);
    // rising or flat at the cap (flat covers degenerate rows where the
    // likelihood does not depend on alpha at all): Poisson limit
    if (at_max.score >= 0.0) return kAlphaPoisson;
    const AlphaScore at_min = nb_alpha_score(v, mu, cfg.alpha_min);
    if (at_min.score <= 0.0) return cfg.alpha_min;  // profile falling from the start
    return solve_alpha(v, mu, cfg.alpha_min, cfg.alpha_max, moment_alpha(v, cfg), cfg);
}

}  // namespace detail

/// Maximum-likelihood dispersion for one patient given fixed fitted means.
inline double estimate_row_dispersion(const Vector& v, const Vector& mu, const DispersionConfig& cfg = {}) {
    validate_dispersion_config(cfg);
    if (v.size() != mu.size()) throw validation_error("estimate_row_dispersion: length mismatch");
    if (v.size() == 0) throw validation_error("estimate_row_dispersion: empty row");
    return detail::estimate_alpha(v, mu, cfg);
}

/// Row-wise dispersion MLEs for a count matrix against fitted means.
inline DispersionVector estimate_dispersion(const Matrix& v, const Matrix& mu, const DispersionConfig& cfg = {}) {
    validate_dispersion_config(cfg);
    detail::check_same_shape(v, mu, "estimate_dispersion");
    DispersionVector out;
    out.alphas.resize(v.rows());
    for (Eigen::Index n = 0; n < v.rows(); ++n)
        out.alphas(n) = detail::estimate_alpha(v.row(n).transpose(), mu.row(n).transpose(), cfg);
    return out;
}

/// Single dispersion shared by every patient: all cells pooled into one
/// likelihood before the same search.
inline double estimate_shared_dispersion(const Matrix& v, const Matrix& mu, const DispersionConfig& cfg = {}) {
    validate_dispersion_config(cfg);
    detail::check_same_shape(v, mu, "estimate_shared_dispersion");
    Vector vf(v.size()), mf(mu.size());
    Eigen::Index t = 0;
    for (Eigen::Index j = 0; j < v.cols(); ++j)
        for (Eigen::Index i = 0; i < v.rows(); ++i, ++t) {
            vf(t) = v(i, j);
            mf(t) = mu(i, j);
        }
    return detail::estimate_alpha(vf, mf, cfg);
}

}  // namespace signmf
