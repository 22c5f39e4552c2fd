#pragma once

#include "signmf/likelihood.hpp"
#include "signmf/rng.hpp"
#include "signmf/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

namespace signmf {

/// Multiplicative-update solver settings. The stopping rule compares
/// successive objective values: relative |d_t - d_{t+1}| < eps*(1+|d_t|) by
/// default, plain |d_t - d_{t+1}| < eps when absolute_tol is set.
struct FitConfig {
    int rank = 2;
    double epsilon = 1e-8;
    bool absolute_tol = false;
    int max_iters = 100000;
    int restarts = 1;
    std::uint64_t seed = 0;
    double init_scale = 0.0;  // <= 0 selects sqrt(mean(V)/rank)
    std::optional<std::pair<Matrix, Matrix>> warm_start;  // explicit (W0, H0); disables restarts
};

inline void validate_fit_config(const FitConfig& cfg) {
    if (cfg.rank < 1) throw validation_error("fit: rank must be >= 1");
    if (!(cfg.epsilon > 0.0)) throw validation_error("fit: epsilon must be positive");
    if (cfg.max_iters < 1) throw validation_error("fit: max_iters must be >= 1");
    if (cfg.restarts < 1) throw validation_error("fit: restarts must be >= 1");
}

/// Observer invoked after every full (W, H) sweep; used by trace-level tests.
using SweepCallback = std::function<void(int iter, const Matrix& w, const Matrix& h, double objective)>;

/// Uniform random factors on (lo, init_scale), lo = 1e-8 * init_scale so no
/// entry starts at an absorbing zero. Same seed, same matrices.
inline std::pair<Matrix, Matrix> init_factors(Eigen::Index n, Eigen::Index m, int k, std::uint64_t seed,
                                              double init_scale) {
    if (n < 1 || m < 1 || k < 1) throw validation_error("init_factors: dimensions must be positive");
    if (!(init_scale > 0.0)) throw validation_error("init_factors: init_scale must be positive");
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(1e-8 * init_scale, init_scale);
    Matrix w(n, k), h(k, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) w(i, j) = unif(rng);
    for (int i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < m; ++j) h(i, j) = unif(rng);
    return {w, h};
}

namespace detail {

inline double default_init_scale(const Matrix& v, int rank) {
    return std::sqrt(v.mean() / static_cast<double>(rank));
}

// V/(WH) with the 0/x := 0 convention at zero counts.
inline void count_ratio(const Matrix& v, const Matrix& wh, Matrix& out) {
    out = (v.array() > 0.0).select(v.array() / wh.array(), 0.0);
}

// (V + a_n)/((WH) + a_n) rows; identically one for Poisson-limit patients.
inline void shifted_ratio(const Matrix& v, const Matrix& wh, const Vector& alphas, Matrix& out) {
    out.resize(v.rows(), v.cols());
    for (Eigen::Index n = 0; n < v.rows(); ++n) {
        const double a = alphas(n);
        if (std::isinf(a))
            out.row(n).setOnes();
        else
            out.row(n) = (v.row(n).array() + a) / (wh.row(n).array() + a);
    }
}

// Elementwise multiply-divide with the documented underflow guard: a zero
// denominator is floored at 1e-16 and the event counted.
inline void apply_update(Matrix& factor, const Matrix& numer, Matrix& denom, long& guard_hits) {
    for (Eigen::Index j = 0; j < denom.cols(); ++j)
        for (Eigen::Index i = 0; i < denom.rows(); ++i)
            if (denom(i, j) == 0.0) {
                denom(i, j) = 1e-16;
                ++guard_hits;
            }
    factor.array() *= numer.array() / denom.array();
}

struct SweepResult {
    Matrix w, h;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
    long guard_hits = 0;
};

// One run of the multiplicative-update scheme: W first, then H against the
// refreshed W, objective checked after the full sweep.
inline SweepResult run_updates(const Matrix& v, const Vector& alphas, Matrix w, Matrix h, const FitConfig& cfg,
                               const SweepCallback& on_sweep) {
    const bool poisson = [&] {
        for (Eigen::Index i = 0; i < alphas.size(); ++i)
            if (!std::isinf(alphas(i))) return false;
        return true;
    }();
    DispersionVector disp;
    disp.alphas = alphas;

    SweepResult res;
    Matrix wh = w * h;
    Matrix ratio, shifted, numer, denom;
    double d_prev = poisson ? gkl_divergence(v, wh) : nb_divergence(v, wh, disp);
    res.trace.push_back(d_prev);

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        // W update
        count_ratio(v, wh, ratio);
        numer.noalias() = ratio * h.transpose();
        if (poisson) {
            denom = h.rowwise().sum().transpose().replicate(w.rows(), 1);
        } else {
            shifted_ratio(v, wh, alphas, shifted);
            denom.noalias() = shifted * h.transpose();
        }
        apply_update(w, numer, denom, res.guard_hits);

        // H update against the refreshed W
        wh.noalias() = w * h;
        count_ratio(v, wh, ratio);
        numer.noalias() = w.transpose() * ratio;
        if (poisson) {
            denom = w.colwise().sum().transpose().replicate(1, h.cols());
        } else {
            shifted_ratio(v, wh, alphas, shifted);
            denom.noalias() = w.transpose() * shifted;
        }
        apply_update(h, numer, denom, res.guard_hits);

        wh.noalias() = w * h;
        const double d = poisson ? gkl_divergence(v, wh) : nb_divergence(v, wh, disp);
        res.trace.push_back(d);
        res.iterations = iter;
        if (on_sweep) on_sweep(iter, w, h, d);

        const double gap = std::abs(d_prev - d);
        const double threshold = cfg.absolute_tol ? cfg.epsilon : cfg.epsilon * (1.0 + std::abs(d_prev));
        d_prev = d;
        if (gap < threshold) {
            res.converged = true;
            break;
        }
    }
    res.w = std::move(w);
    res.h = std::move(h);
    res.objective = d_prev;
    return res;
}

inline Factorization fit_multiplicative(const CountMatrix& v, const Vector& alphas, const FitConfig& cfg,
                                        NmfModel model, const SweepCallback& on_sweep) {
    validate_fit_config(cfg);
    const Eigen::Index n = v.counts.rows(), m = v.counts.cols();
    if (cfg.rank >= std::min(n, m))
        throw validation_error("fit: rank " + std::to_string(cfg.rank) + " must be smaller than min(N, M) = " +
                               std::to_string(std::min(n, m)));
    const double scale = cfg.init_scale > 0.0 ? cfg.init_scale : detail::default_init_scale(v.counts, cfg.rank);

    SweepResult best;
    std::uint64_t best_seed = cfg.seed;
    bool have_best = false;
    const int restarts = cfg.warm_start ? 1 : cfg.restarts;
    for (int r = 0; r < restarts; ++r) {
        const std::uint64_t restart_seed = cfg.seed + static_cast<std::uint64_t>(r);
        Matrix w0, h0;
        if (cfg.warm_start) {
            w0 = cfg.warm_start->first;
            h0 = cfg.warm_start->second;
            if (w0.rows() != n || w0.cols() != cfg.rank || h0.rows() != cfg.rank || h0.cols() != m)
                throw validation_error("fit: warm start dimensions do not match");
        } else {
            std::tie(w0, h0) = init_factors(n, m, cfg.rank, restart_seed, scale);
        }
        SweepResult run = run_updates(v.counts, alphas, std::move(w0), std::move(h0), cfg,
                                      restarts == 1 ? on_sweep : SweepCallback{});
        if (!have_best || run.objective < best.objective) {  // ties keep the lowest restart seed
            best = std::move(run);
            best_seed = restart_seed;
            have_best = true;
        }
    }

    Factorization f;
    f.exposures = std::move(best.w);
    f.signatures = std::move(best.h);
    f.rank = cfg.rank;
    f.model = model;
    if (model != NmfModel::Poisson) {
        DispersionVector d;
        d.alphas = alphas;
        f.dispersion = std::move(d);
    }
    f.divergence = best.objective;
    f.iterations = best.iterations;
    f.seed = best_seed;
    f.converged = best.converged;
    f.objective_trace = std::move(best.trace);
    f.denominator_guard_hits = best.guard_hits;
    return f;
}

}  // namespace detail

/// Poisson NMF (Lee-Seung multiplicative updates on the GKL objective).
inline Factorization po_nmf(const CountMatrix& v, const FitConfig& cfg, const SweepCallback& on_sweep = {}) {
    const Vector alphas = Vector::Constant(v.counts.rows(), kAlphaPoisson);
    return detail::fit_multiplicative(v, alphas, cfg, NmfModel::Poisson, on_sweep);
}

/// Negative Binomial NMF with fixed per-patient dispersion: the W update
/// divides sum_m V/(WH) H by sum_m (V+a_n)/((WH)+a_n) H, then H is updated
/// against the refreshed W the same way.
inline Factorization nb_nmf(const CountMatrix& v, const DispersionVector& alphas, const FitConfig& cfg,
                            const SweepCallback& on_sweep = {}) {
    validate_dispersion(alphas, v.counts.rows());
    const NmfModel model = alphas.all_equal() ? NmfModel::NegBinShared : NmfModel::NegBinPatient;
    return detail::fit_multiplicative(v, alphas.alphas, cfg, model, on_sweep);
}

}  // namespace signmf
