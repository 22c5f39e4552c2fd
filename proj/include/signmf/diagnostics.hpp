#pragma once

#include "signmf/likelihood.hpp"
#include "signmf/special_functions.hpp"
#include "signmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace signmf {

struct QuantilePair {
    double lower = 0.0;
    double upper = 0.0;
};

/// Observed residual quantiles against the standard-normal reference, with
/// the overdispersion call.
struct QuantileCheck {
    QuantilePair observed;
    QuantilePair reference;
    bool overdispersed = false;
    double threshold = 1.5;  // flag when observed strictly contains threshold * reference
};

/// Linear-interpolation empirical quantile (the common "type 7" rule).
inline double empirical_quantile(std::vector<double> x, double p) {
    if (x.empty()) throw validation_error("empirical_quantile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw validation_error("empirical_quantile: p must be in [0, 1]");
    std::sort(x.begin(), x.end());
    const double h = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= x.size()) return x.back();
    const double w = h - static_cast<double>(lo);
    return x[lo] + w * (x[lo + 1] - x[lo]);
}

/// Compares the observed 2.5%/97.5% residual quantiles (configurable) with
/// the standard-normal pair. The fit is called overdispersed when the
/// observed interval strictly contains the reference interval inflated by
/// `threshold`.
inline QuantileCheck quantile_check(const Matrix& normalized, double p_low = 0.025, double p_high = 0.975,
                                    double threshold = 1.5) {
    if (normalized.size() == 0) throw validation_error("quantile_check: empty residuals");
    if (!(p_low > 0.0 && p_low < p_high && p_high < 1.0))
        throw validation_error("quantile_check: need 0 < p_low < p_high < 1");
    if (!(threshold > 0.0)) throw validation_error("quantile_check: threshold must be positive");
    std::vector<double> cells;
    cells.reserve(static_cast<std::size_t>(normalized.size()));
    for (Eigen::Index j = 0; j < normalized.cols(); ++j)
        for (Eigen::Index i = 0; i < normalized.rows(); ++i) cells.push_back(normalized(i, j));
    QuantileCheck out;
    out.observed.lower = empirical_quantile(cells, p_low);
    out.observed.upper = empirical_quantile(cells, p_high);
    out.reference.lower = normal_quantile(p_low);
    out.reference.upper = normal_quantile(p_high);
    out.threshold = threshold;
    out.overdispersed = out.observed.lower < threshold * out.reference.lower &&
                        out.observed.upper > threshold * out.reference.upper;
    return out;
}

/// Cell-level residual tables for a fitted factorization plus the summary
/// quantile check.
struct ResidualReport {
    Matrix fitted_mean;  // WH
    Matrix raw;          // V - WH
    Matrix sigma;        // model standard deviation per cell
    Matrix normalized;   // raw / sigma
    std::optional<Vector> envelope_alphas;  // (min, median, max) patient dispersion, NB fits only
    QuantileCheck quantiles;
    double frac_outside_2sigma = 0.0;
};

/// Raw residuals V - WH, their model standard deviations (Poisson: sqrt(mu);
/// NB: sqrt(mu*(1+mu/alpha_n))), and the normalized residuals. For NB fits
/// the (min, median, max) of the patient dispersions is reported so envelope
/// curves can be drawn across patients.
inline ResidualReport residual_report(const CountMatrix& v, const Factorization& f, double threshold = 1.5) {
    const Eigen::Index n = v.counts.rows(), m = v.counts.cols();
    if (f.exposures.rows() != n || f.signatures.cols() != m)
        throw validation_error("residual_report: factorization does not match the counts");
    if (f.model != NmfModel::Poisson) {
        if (!f.dispersion) throw validation_error("residual_report: NB fit without dispersions");
        validate_dispersion(*f.dispersion, n);
    }

    ResidualReport rep;
    rep.fitted_mean = f.fitted_mean();
    rep.raw = v.counts - rep.fitted_mean;
    rep.sigma.resize(n, m);
    rep.normalized.resize(n, m);
    long outside = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double alpha = f.model == NmfModel::Poisson ? kAlphaPoisson : f.dispersion->alphas(i);
        for (Eigen::Index j = 0; j < m; ++j) {
            detail::check_supported(v.counts(i, j), rep.fitted_mean(i, j), i, j, "residual_report");
            const double sd = std::sqrt(model_variance(rep.fitted_mean(i, j), alpha).variance);
            rep.sigma(i, j) = sd;
            rep.normalized(i, j) = rep.raw(i, j) == 0.0 ? 0.0 : rep.raw(i, j) / sd;
            if (std::abs(rep.normalized(i, j)) > 2.0) ++outside;
        }
    }
    rep.frac_outside_2sigma = static_cast<double>(outside) / static_cast<double>(n * m);
    if (f.model != NmfModel::Poisson) {
        std::vector<double> a(f.dispersion->alphas.data(), f.dispersion->alphas.data() + n);
        std::sort(a.begin(), a.end());
        Vector env(3);
        env << a.front(), a[a.size() / 2], a.back();
        rep.envelope_alphas = env;
    }
    rep.quantiles = quantile_check(rep.normalized, 0.025, 0.975, threshold);
    return rep;
}

/// Greedy maximum-cosine matching between estimated and true signature rows.
struct CosineMatch {
    std::vector<int> assignment;  // assignment[i] = row of h_true matched to row i of h_est
    Vector similarities;          // cosine of each matched pair, in [0, 1]
};

inline CosineMatch cosine_match(const Matrix& h_est, const Matrix& h_true) {
    if (h_est.rows() != h_true.rows() || h_est.cols() != h_true.cols())
        throw validation_error("cosine_match: shape mismatch");
    const Eigen::Index k = h_est.rows();
    if (k < 1) throw validation_error("cosine_match: empty input");
    Matrix cos(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
            const double den = h_est.row(i).norm() * h_true.row(j).norm();
            cos(i, j) = den > 0.0 ? h_est.row(i).dot(h_true.row(j)) / den : 0.0;
        }
    CosineMatch out;
    out.assignment.assign(static_cast<std::size_t>(k), -1);
    out.similarities = Vector::Zero(k);
    std::vector<bool> est_done(static_cast<std::size_t>(k), false), true_done(static_cast<std::size_t>(k), false);
    for (Eigen::Index round = 0; round < k; ++round) {
        Eigen::Index bi = -1, bj = -1;
        double best = -1.0;
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                if (!est_done[static_cast<std::size_t>(i)] && !true_done[static_cast<std::size_t>(j)] &&
                    cos(i, j) > best) {
                    best = cos(i, j);
                    bi = i;
                    bj = j;
                }
        est_done[static_cast<std::size_t>(bi)] = true;
        true_done[static_cast<std::size_t>(bj)] = true;
        out.assignment[static_cast<std::size_t>(bi)] = static_cast<int>(bj);
        out.similarities(bi) = best;
    }
    return out;
}

}  // namespace signmf
