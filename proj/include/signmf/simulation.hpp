#pragma once

#include "signmf/rng.hpp"
#include "signmf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace signmf {

/// The canonical 96 single-base-substitution categories: six base changes,
/// each in sixteen trinucleotide contexts, e.g. "A[C>A]A".
inline std::vector<std::string> mutation_type_labels() {
    static const char* subs[] = {"C>A", "C>G", "C>T", "T>A", "T>C", "T>G"};
    static const char bases[] = {'A', 'C', 'G', 'T'};
    std::vector<std::string> out;
    out.reserve(96);
    for (const char* sub : subs)
        for (char five : bases)
            for (char three : bases)
                out.push_back(std::string(1, five) + "[" + sub + "]" + three);
    return out;
}

/// A catalog of reference signatures: rows are probability vectors over the
/// mutation types.
struct ReferenceSignatures {
    Matrix profiles;  // K_ref x M, rows sum to 1
    std::vector<std::string> names;
    std::vector<std::string> mutation_types;
};

inline void validate_signatures(const ReferenceSignatures& ref) {
    const Eigen::Index k = ref.profiles.rows(), m = ref.profiles.cols();
    if (k < 1 || m < 1) throw validation_error("signatures: empty catalog");
    if (ref.names.size() != static_cast<std::size_t>(k))
        throw validation_error("signatures: name count does not match rows");
    if (ref.mutation_types.size() != static_cast<std::size_t>(m))
        throw validation_error("signatures: mutation-type count does not match columns");
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < m; ++j)
            if (!(ref.profiles(i, j) >= 0.0))
                throw validation_error("signatures: negative entry in row '" + ref.names[static_cast<std::size_t>(i)] + "'");
        const double s = ref.profiles.row(i).sum();
        if (std::abs(s - 1.0) > 1e-6)
            throw validation_error("signatures: row '" + ref.names[static_cast<std::size_t>(i)] +
                                   "' sums to " + std::to_string(s) + ", expected 1");
    }
}

/// Dirichlet-style random catalog for runs without a reference file. Low
/// concentration gives the spiky profiles typical of real signatures.
inline ReferenceSignatures synthetic_signatures(int k, std::uint64_t seed, double concentration = 0.2) {
    if (k < 1) throw validation_error("synthetic_signatures: need k >= 1");
    if (!(concentration > 0.0)) throw validation_error("synthetic_signatures: concentration must be positive");
    ReferenceSignatures ref;
    ref.mutation_types = mutation_type_labels();
    const Eigen::Index m = static_cast<Eigen::Index>(ref.mutation_types.size());
    ref.profiles.resize(k, m);
    auto rng = make_rng(derive_seed(seed, {0x5349u}));
    std::gamma_distribution<double> gamma(concentration, 1.0);
    for (int i = 0; i < k; ++i) {
        double total = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double g = gamma(rng);
            ref.profiles(i, j) = g;
            total += g;
        }
        if (!(total > 0.0)) throw numerical_error("synthetic_signatures: degenerate draw");
        ref.profiles.row(i) /= total;
        ref.names.push_back("S" + std::to_string(i + 1));
    }
    return ref;
}

enum class NoiseModel { Poisson, NegBinConstant, NegBinUniform };

inline std::string to_string(NoiseModel n) {
    switch (n) {
        case NoiseModel::Poisson: return "poisson";
        case NoiseModel::NegBinConstant: return "nb";
        case NoiseModel::NegBinUniform: return "nb-uniform";
    }
    throw validation_error("unknown noise model");
}

struct SimConfig {
    int n_patients = 20;
    int n_signatures = 5;
    std::vector<std::string> required_signatures;  // must exist in the catalog; may be empty
    double exposure_mean = 6000.0;
    double exposure_dispersion = 1.5;
    NoiseModel noise = NoiseModel::Poisson;
    double alpha = 10.0;       // NegBinConstant
    double alpha_lo = 10.0;    // NegBinUniform
    double alpha_hi = 500.0;
    std::uint64_t seed = 0;
};

struct SimulatedDataset {
    CountMatrix counts;
    Matrix exposures;   // true W, N x K
    Matrix signatures;  // true H, K x M
    Vector alphas;      // per-patient truth; +infinity under Poisson noise
    std::vector<std::string> signature_names;
};

/// One draw from the Gamma-Poisson mixture with the given mean: multiply the
/// mean by Gamma(alpha, alpha) (unit mean) and draw Poisson. This is the NB
/// with variance mean*(1 + mean/alpha); alpha = +infinity degrades to plain
/// Poisson.
inline long long sample_nb(double mean, double alpha, std::mt19937_64& rng) {
    if (!(mean >= 0.0)) throw validation_error("sample_nb: mean must be non-negative");
    if (!(alpha > 0.0)) throw validation_error("sample_nb: alpha must be positive");
    if (mean == 0.0) return 0;
    double rate = mean;
    if (!std::isinf(alpha)) {
        std::gamma_distribution<double> gamma(alpha, 1.0 / alpha);
        rate = gamma(rng) * mean;
    }
    if (rate == 0.0) return 0;
    std::poisson_distribution<long long> poisson(rate);
    return poisson(rng);
}

namespace detail {

// required names first, then a uniform without-replacement draw of the rest
inline std::vector<Eigen::Index> pick_signatures(const ReferenceSignatures& ref, const SimConfig& cfg,
                                                 std::uint64_t seed) {
    const Eigen::Index k_ref = ref.profiles.rows();
    if (cfg.n_signatures > k_ref)
        throw validation_error("simulate: asked for " + std::to_string(cfg.n_signatures) + " signatures, catalog has " +
                               std::to_string(k_ref));
    std::vector<Eigen::Index> chosen;
    std::vector<bool> used(static_cast<std::size_t>(k_ref), false);
    for (const std::string& name : cfg.required_signatures) {
        const auto it = std::find(ref.names.begin(), ref.names.end(), name);
        if (it == ref.names.end()) throw validation_error("simulate: required signature '" + name + "' not in catalog");
        const auto idx = static_cast<Eigen::Index>(it - ref.names.begin());
        if (used[static_cast<std::size_t>(idx)])
            throw validation_error("simulate: signature '" + name + "' requested twice");
        used[static_cast<std::size_t>(idx)] = true;
        chosen.push_back(idx);
    }
    if (static_cast<int>(chosen.size()) > cfg.n_signatures)
        throw validation_error("simulate: more required signatures than n_signatures");
    std::vector<Eigen::Index> pool;
    for (Eigen::Index i = 0; i < k_ref; ++i)
        if (!used[static_cast<std::size_t>(i)]) pool.push_back(i);
    std::uint64_t state = seed;
    while (static_cast<int>(chosen.size()) < cfg.n_signatures) {
        const std::uint64_t at = bounded_uint64(state, pool.size());
        chosen.push_back(pool[at]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
    }
    return chosen;
}

}  // namespace detail

/// Synthetic dataset generator: true signatures come from the catalog, true
/// exposures are NB draws (mean exposure_mean, dispersion
/// exposure_dispersion), and the counts are Poisson or NB draws around the
/// true mean matrix. All-zero patients are redrawn; truth is returned
/// alongside the counts.
inline SimulatedDataset simulate_dataset(const SimConfig& cfg, const ReferenceSignatures& ref) {
    if (cfg.n_patients < 1 || cfg.n_signatures < 1)
        throw validation_error("simulate: n_patients and n_signatures must be positive");
    if (!(cfg.exposure_mean > 0.0) || !(cfg.exposure_dispersion > 0.0))
        throw validation_error("simulate: exposure parameters must be positive");
    if (cfg.noise == NoiseModel::NegBinConstant && !(cfg.alpha > 0.0))
        throw validation_error("simulate: alpha must be positive");
    if (cfg.noise == NoiseModel::NegBinUniform && !(cfg.alpha_lo > 0.0 && cfg.alpha_hi >= cfg.alpha_lo))
        throw validation_error("simulate: need 0 < alpha_lo <= alpha_hi");
    validate_signatures(ref);

    SimulatedDataset out;
    const std::vector<Eigen::Index> rows = detail::pick_signatures(ref, cfg, derive_seed(cfg.seed, {1u}));
    const Eigen::Index m = ref.profiles.cols();
    const int k = cfg.n_signatures, n = cfg.n_patients;
    out.signatures.resize(k, m);
    for (int i = 0; i < k; ++i) {
        out.signatures.row(i) = ref.profiles.row(rows[static_cast<std::size_t>(i)]);
        out.signature_names.push_back(ref.names[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
    }

    auto rng = make_rng(derive_seed(cfg.seed, {2u}));
    std::uniform_real_distribution<double> alpha_unif(cfg.alpha_lo, cfg.alpha_hi);
    out.exposures.resize(n, k);
    out.alphas.resize(n);
    Matrix v(n, m);
    for (int p = 0; p < n; ++p) {
        switch (cfg.noise) {
            case NoiseModel::Poisson: out.alphas(p) = kAlphaPoisson; break;
            case NoiseModel::NegBinConstant: out.alphas(p) = cfg.alpha; break;
            case NoiseModel::NegBinUniform: out.alphas(p) = alpha_unif(rng); break;
        }
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 100) throw numerical_error("simulate: patient keeps drawing all-zero counts");
            for (int i = 0; i < k; ++i)
                out.exposures(p, i) =
                    static_cast<double>(sample_nb(cfg.exposure_mean, cfg.exposure_dispersion, rng));
            const Eigen::RowVectorXd mu = out.exposures.row(p) * out.signatures;
            double total = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                v(p, j) = static_cast<double>(sample_nb(mu(j), out.alphas(p), rng));
                total += v(p, j);
            }
            if (total > 0.0) break;
        }
    }

    std::vector<std::string> patients;
    for (int p = 0; p < n; ++p) patients.push_back("P" + std::to_string(p + 1));
    out.counts = make_count_matrix(std::move(v), std::move(patients), ref.mutation_types);
    return out;
}

}  // namespace signmf
