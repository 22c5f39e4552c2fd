#pragma once

#include "signmf/likelihood.hpp"
#include "signmf/parallel.hpp"
#include "signmf/pipeline.hpp"
#include "signmf/rng.hpp"
#include "signmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace signmf {

enum class CostFunction { GKL, Frobenius, NBDivergence };

inline std::string to_string(CostFunction c) {
    switch (c) {
        case CostFunction::GKL: return "gkl";
        case CostFunction::Frobenius: return "frobenius";
        case CostFunction::NBDivergence: return "nb";
    }
    throw validation_error("unknown cost function");
}

inline CostFunction cost_from_string(const std::string& s) {
    if (s == "gkl") return CostFunction::GKL;
    if (s == "frobenius") return CostFunction::Frobenius;
    if (s == "nb") return CostFunction::NBDivergence;
    throw validation_error("unknown cost function '" + s + "' (expected gkl, frobenius, or nb)");
}

enum class Criterion { AIC, BIC };

inline std::string to_string(Criterion c) { return c == Criterion::AIC ? "aic" : "bic"; }

inline Criterion criterion_from_string(const std::string& s) {
    if (s == "aic") return Criterion::AIC;
    if (s == "bic") return Criterion::BIC;
    throw validation_error("unknown criterion '" + s + "' (expected aic or bic)");
}

/// Which observation count enters the BIC penalty: patients (the default) or
/// individual matrix cells.
enum class IcSampleSize { Patients, Cells };

/// Median with the usual mid-average convention for even lengths.
inline double median(std::vector<double> x) {
    if (x.empty()) throw validation_error("median: empty input");
    std::sort(x.begin(), x.end());
    const std::size_t h = x.size() / 2;
    return x.size() % 2 == 1 ? x[h] : 0.5 * (x[h - 1] + x[h]);
}

/// Deterministic train/test split of n patients: n_train distinct indices via
/// a partial Fisher-Yates shuffle driven by splitmix64 (no reliance on
/// implementation-defined std distributions), remainder is the test set.
/// Both halves come back sorted.
inline std::pair<std::vector<int>, std::vector<int>> make_split(int n, int n_train, std::uint64_t seed) {
    if (n < 2 || n_train < 1 || n_train >= n)
        throw validation_error("make_split: need 1 <= n_train < n");
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::uint64_t state = seed;
    for (int i = 0; i < n_train; ++i) {
        const std::uint64_t draw = bounded_uint64(state, static_cast<std::uint64_t>(n - i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i) + draw]);
    }
    std::vector<int> train(idx.begin(), idx.begin() + n_train);
    std::vector<int> test(idx.begin() + n_train, idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

struct SigmosConfig {
    std::vector<int> k_range;  // candidate ranks, each >= 2
    int splits = 10;           // J
    double test_fraction = 0.10;
    CostFunction cost = CostFunction::GKL;
    NmfModel method = NmfModel::Poisson;
    FitConfig fit;                // rank/seed fields are overridden per candidate
    DispersionConfig dispersion;  // used by NB methods
    std::uint64_t seed = 0;
    bool keep_fits = false;  // retain the full-data factorization per K
    int threads = 1;         // the (K, split) grid is embarrassingly parallel
};

/// Per-rank costs and the winner. For the information criteria the cost list
/// per rank has a single entry (the criterion value) and logliks/n_params are
/// filled in; for the split procedure they stay empty.
struct SelectionResult {
    std::vector<int> ranks;
    std::vector<std::vector<double>> costs;  // per rank
    std::vector<double> medians;             // per rank; equals the criterion value for AIC/BIC
    int chosen_rank = 0;
    std::string method_label;
    std::vector<double> logliks;   // AIC/BIC only
    std::vector<double> n_params;  // AIC/BIC only
    std::vector<Factorization> fits;  // populated when requested
};

namespace detail {

inline void check_k_range(const std::vector<int>& k_range) {
    if (k_range.empty()) throw validation_error("selection: k_range must be non-empty");
    for (int k : k_range)
        if (k < 2) throw validation_error("selection: candidate ranks must be >= 2");
}

// Smallest rank whose value ties the minimum; values within tie_tol of the
// minimum count as tied. tie_tol = 0 is the plain argmin.
inline int choose_rank(const std::vector<int>& ranks, const std::vector<double>& values, double tie_tol = 0.0) {
    const double cut = *std::min_element(values.begin(), values.end()) + tie_tol;
    int best = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (values[i] <= cut) best = std::min(best, ranks[i]);
    return best;
}

// A held-out patient can have counts at a mutation type the training rows
// never saw, leaving the predicted mean at zero; the divergence there is
// infinite, which is a legitimate (losing) score for that split, not a
// failure of the selection run.
inline double split_cost_impl(const Matrix& v_test, const Matrix& pred, CostFunction cost,
                              const Factorization& full_fit, const std::vector<int>& test_rows) {
    switch (cost) {
        case CostFunction::GKL:
            return gkl_divergence(v_test, pred);
        case CostFunction::Frobenius:
            return (v_test - pred).squaredNorm();
        case CostFunction::NBDivergence: {
            DispersionVector a;
            a.alphas.resize(static_cast<Eigen::Index>(test_rows.size()));
            for (std::size_t i = 0; i < test_rows.size(); ++i)
                a.alphas(static_cast<Eigen::Index>(i)) = full_fit.dispersion->alphas(test_rows[i]);
            return nb_divergence(v_test, pred, a);
        }
    }
    throw validation_error("unknown cost function");
}

inline double split_cost(const Matrix& v_test, const Matrix& pred, CostFunction cost,
                         const Factorization& full_fit, const std::vector<int>& test_rows) {
    try {
        return split_cost_impl(v_test, pred, cost, full_fit, test_rows);
    } catch (const numerical_error&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace detail

/// Rank selection by repeated patient splits: per candidate rank, fit the
/// full data once, then J times fit the training patients alone and score the
/// held-out patients with their full-data exposure rows times the
/// training-set signatures. The rank with the smallest median cost wins,
/// ties going to the smaller rank.
///
/// Each split fit starts from the full-data factors restricted to the
/// training rows. The held-out prediction multiplies full-data exposures by
/// training-set signatures, so the two fits must keep their factors in the
/// same column order; independent random starts permute the factors at random
/// and turn the test cost into noise. The warm start pins the order while the
/// updates still re-estimate every entry from the training rows alone.
inline SelectionResult sigmos(const CountMatrix& v, const SigmosConfig& cfg) {
    detail::check_k_range(cfg.k_range);
    if (cfg.splits < 1) throw validation_error("sigmos: need at least one split");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 0.5))
        throw validation_error("sigmos: test_fraction must lie in (0, 0.5)");
    if (cfg.cost == CostFunction::NBDivergence && cfg.method == NmfModel::Poisson)
        throw validation_error("sigmos: the nb cost needs an NB fitting method");
    const int n = static_cast<int>(v.counts.rows());
    const int m = static_cast<int>(v.counts.cols());
    const int n_train = static_cast<int>(std::ceil((1.0 - cfg.test_fraction) * n));
    if (n_train >= n) throw validation_error("sigmos: test fraction leaves no held-out patients");
    if (n_train < 1) throw validation_error("sigmos: test fraction leaves no training patients");
    for (int k : cfg.k_range)
        if (k >= std::min(n_train, m))
            throw validation_error("sigmos: rank " + std::to_string(k) + " too large for " +
                                   std::to_string(n_train) + " training patients");

    const int kn = static_cast<int>(cfg.k_range.size());
    std::vector<Factorization> fulls(static_cast<std::size_t>(kn));
    parallel_for(kn, cfg.threads, [&](int i) {
        FitConfig full_cfg = cfg.fit;
        full_cfg.rank = cfg.k_range[static_cast<std::size_t>(i)];
        full_cfg.seed = derive_seed(cfg.seed, {1u, static_cast<std::uint64_t>(full_cfg.rank)});
        fulls[static_cast<std::size_t>(i)] = fit_model(v, cfg.method, full_cfg, cfg.dispersion);
    });

    std::vector<std::vector<double>> costs(static_cast<std::size_t>(kn),
                                           std::vector<double>(static_cast<std::size_t>(cfg.splits)));
    parallel_for(kn * cfg.splits, cfg.threads, [&](int t) {
        const int ki = t / cfg.splits, j = t % cfg.splits;
        const int k = cfg.k_range[static_cast<std::size_t>(ki)];
        const Factorization& full = fulls[static_cast<std::size_t>(ki)];
        // split j is the same partition for every candidate rank: the ranks
        // are then compared on identical held-out patients, so the argmin is
        // not at the mercy of which patients each rank happened to hold out
        const auto [train_rows, test_rows] =
            make_split(n, n_train, derive_seed(cfg.seed, {2u, static_cast<std::uint64_t>(j)}));
        FitConfig split_cfg = cfg.fit;
        split_cfg.rank = k;
        split_cfg.seed =
            derive_seed(cfg.seed, {3u, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)});
        Matrix w0(static_cast<Eigen::Index>(train_rows.size()), k);
        for (std::size_t i = 0; i < train_rows.size(); ++i)
            w0.row(static_cast<Eigen::Index>(i)) = full.exposures.row(train_rows[i]);
        split_cfg.warm_start = {w0.cwiseMax(1e-100), full.signatures.cwiseMax(1e-100)};
        const Factorization part = fit_model(subset_rows(v, train_rows), cfg.method, split_cfg, cfg.dispersion);

        Matrix w_test(static_cast<Eigen::Index>(test_rows.size()), k);
        Matrix v_test(static_cast<Eigen::Index>(test_rows.size()), m);
        for (std::size_t i = 0; i < test_rows.size(); ++i) {
            w_test.row(static_cast<Eigen::Index>(i)) = full.exposures.row(test_rows[i]);
            v_test.row(static_cast<Eigen::Index>(i)) = v.counts.row(test_rows[i]);
        }
        const Matrix pred = w_test * part.signatures;
        costs[static_cast<std::size_t>(ki)][static_cast<std::size_t>(j)] =
            detail::split_cost(v_test, pred, cfg.cost, full, test_rows);
    });

    SelectionResult res;
    res.method_label = "sigmos(" + to_string(cfg.method) + "," + to_string(cfg.cost) + ")";
    for (int i = 0; i < kn; ++i) {
        res.ranks.push_back(cfg.k_range[static_cast<std::size_t>(i)]);
        res.medians.push_back(median(costs[static_cast<std::size_t>(i)]));
        res.costs.push_back(std::move(costs[static_cast<std::size_t>(i)]));
        if (cfg.keep_fits) res.fits.push_back(std::move(fulls[static_cast<std::size_t>(i)]));
    }
    // Noise-free data drives every rank at or above the planted one to a cost
    // of numerically zero; medians within a sliver of the curve's total range
    // are indistinguishable, and the smallest rank among them wins. Infinite
    // medians (degenerate split predictions) stay out of the range.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double m : res.medians)
        if (std::isfinite(m)) {
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
    res.chosen_rank = detail::choose_rank(res.ranks, res.medians, hi > lo ? 1e-3 * (hi - lo) : 0.0);
    return res;
}

inline double aic(double loglik, double n_params) { return -2.0 * loglik + 2.0 * n_params; }

inline double bic(double loglik, double n_params, double n_obs) {
    if (n_obs < 2.0) throw validation_error("bic: n_obs must be at least 2");
    return -2.0 * loglik + std::log(n_obs) * n_params;
}

/// Free-parameter count used in the criteria: every entry of W and H, plus
/// the dispersion parameters the NB variants estimate (one per patient, or a
/// single shared one).
inline double count_parameters(int rank, Eigen::Index n, Eigen::Index m, NmfModel model) {
    double extra = 0.0;
    if (model == NmfModel::NegBinPatient) extra = static_cast<double>(n);
    if (model == NmfModel::NegBinShared) extra = 1.0;
    return static_cast<double>(rank) * static_cast<double>(n + m) + extra;
}

struct IcConfig {
    std::vector<int> k_range;
    Criterion criterion = Criterion::AIC;
    IcSampleSize sample_size = IcSampleSize::Patients;  // BIC n_obs convention
    NmfModel method = NmfModel::Poisson;
    FitConfig fit;
    DispersionConfig dispersion;
    std::uint64_t seed = 0;
    bool keep_fits = false;
    int threads = 1;
};

/// Rank selection by information criterion: fit every candidate rank on the
/// full data, evaluate the model log-likelihood, and take the argmin of
/// -2*loglik + penalty. Ties go to the smaller rank.
inline SelectionResult select_by_ic(const CountMatrix& v, const IcConfig& cfg) {
    detail::check_k_range(cfg.k_range);
    const Eigen::Index n = v.counts.rows(), m = v.counts.cols();
    for (int k : cfg.k_range)
        if (k >= std::min(n, m))
            throw validation_error("selection: rank " + std::to_string(k) + " must be smaller than min(N, M)");

    SelectionResult res;
    res.method_label = to_string(cfg.criterion) + "(" + to_string(cfg.method) + ")";
    const double n_obs = cfg.sample_size == IcSampleSize::Patients ? static_cast<double>(n)
                                                                   : static_cast<double>(n) * static_cast<double>(m);
    const int kn = static_cast<int>(cfg.k_range.size());
    std::vector<Factorization> fits(static_cast<std::size_t>(kn));
    std::vector<double> lls(static_cast<std::size_t>(kn));
    parallel_for(kn, cfg.threads, [&](int i) {
        const int k = cfg.k_range[static_cast<std::size_t>(i)];
        FitConfig full_cfg = cfg.fit;
        full_cfg.rank = k;
        full_cfg.seed = derive_seed(cfg.seed, {1u, static_cast<std::uint64_t>(k)});
        Factorization fit = fit_model(v, cfg.method, full_cfg, cfg.dispersion);
        const Matrix mu = fit.fitted_mean();
        lls[static_cast<std::size_t>(i)] = fit.model == NmfModel::Poisson
                                               ? poisson_loglik(v.counts, mu)
                                               : nb_loglik(v.counts, mu, *fit.dispersion);
        fits[static_cast<std::size_t>(i)] = std::move(fit);
    });
    for (int i = 0; i < kn; ++i) {
        const int k = cfg.k_range[static_cast<std::size_t>(i)];
        const double ll = lls[static_cast<std::size_t>(i)];
        const double prm = count_parameters(k, n, m, fits[static_cast<std::size_t>(i)].model);
        const double value = cfg.criterion == Criterion::AIC ? aic(ll, prm) : bic(ll, prm, n_obs);
        res.ranks.push_back(k);
        res.medians.push_back(value);
        res.costs.push_back({value});
        res.logliks.push_back(ll);
        res.n_params.push_back(prm);
        if (cfg.keep_fits) res.fits.push_back(std::move(fits[static_cast<std::size_t>(i)]));
    }
    res.chosen_rank = detail::choose_rank(res.ranks, res.medians);
    return res;
}

}  // namespace signmf
