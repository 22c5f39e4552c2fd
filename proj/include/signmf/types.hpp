#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace signmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Invalid inputs, malformed files, inconsistent dimensions. CLI exit code 1.
class validation_error : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Degenerate factors, divergent objectives and the like. CLI exit code 2.
class numerical_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kAlphaPoisson = std::numeric_limits<double>::infinity();

enum class NmfModel { Poisson, NegBinShared, NegBinPatient };

inline std::string to_string(NmfModel m) {
    switch (m) {
    case NmfModel::Poisson: return "poisson";
    case NmfModel::NegBinShared: return "nb-shared";
    case NmfModel::NegBinPatient: return "nb";
    }
    return "unknown";
}

inline NmfModel nmf_model_from_string(const std::string& s) {
    if (s == "poisson") return NmfModel::Poisson;
    if (s == "nb-shared") return NmfModel::NegBinShared;
    if (s == "nb") return NmfModel::NegBinPatient;
    throw validation_error("unknown model '" + s + "' (expected poisson, nb or nb-shared)");
}

/// Mutational catalog: rows are patients, columns are mutation types.
struct CountMatrix {
    Matrix counts;  // integral, non-negative entries
    std::vector<std::string> patient_ids;
    std::vector<std::string> mutation_types;

    Eigen::Index n_patients() const { return counts.rows(); }
    Eigen::Index n_types() const { return counts.cols(); }
};

/// Throws validation_error naming the offending cell when an invariant fails.
inline void validate_counts(const CountMatrix& v) {
    const Eigen::Index n = v.counts.rows(), m = v.counts.cols();
    if (n < 1 || m < 1) throw validation_error("count matrix must have at least one row and one column");
    if (static_cast<Eigen::Index>(v.patient_ids.size()) != n)
        throw validation_error("patient label count does not match row count");
    if (static_cast<Eigen::Index>(v.mutation_types.size()) != m)
        throw validation_error("mutation type label count does not match column count");
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double x = v.counts(i, j);
            if (!(x >= 0.0) || !std::isfinite(x))
                throw validation_error("negative or non-finite count at patient '" + v.patient_ids[i] +
                                       "', mutation type '" + v.mutation_types[j] + "' (row " +
                                       std::to_string(i + 1) + ", column " + std::to_string(j + 1) + ")");
            if (std::floor(x) != x)
                throw validation_error("non-integer count at patient '" + v.patient_ids[i] +
                                       "', mutation type '" + v.mutation_types[j] + "' (row " +
                                       std::to_string(i + 1) + ", column " + std::to_string(j + 1) + ")");
            row_sum += x;
        }
        if (row_sum == 0.0)
            throw validation_error("patient '" + v.patient_ids[i] + "' (row " + std::to_string(i + 1) +
                                   ") has zero total count");
    }
}

inline CountMatrix make_count_matrix(Matrix counts, std::vector<std::string> patient_ids,
                                     std::vector<std::string> mutation_types) {
    CountMatrix v{std::move(counts), std::move(patient_ids), std::move(mutation_types)};
    validate_counts(v);
    return v;
}

/// Counts with default labels P1..PN / T1..TM, validated.
inline CountMatrix make_count_matrix(Matrix counts) {
    std::vector<std::string> pid, mt;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) pid.push_back("P" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < counts.cols(); ++j) mt.push_back("T" + std::to_string(j + 1));
    return make_count_matrix(std::move(counts), std::move(pid), std::move(mt));
}

/// Row subset preserving labels (used by the train/test splits).
inline CountMatrix subset_rows(const CountMatrix& v, const std::vector<int>& rows) {
    CountMatrix out;
    out.counts.resize(static_cast<Eigen::Index>(rows.size()), v.counts.cols());
    out.mutation_types = v.mutation_types;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= v.counts.rows()) throw validation_error("row index out of range");
        out.counts.row(static_cast<Eigen::Index>(i)) = v.counts.row(rows[i]);
        out.patient_ids.push_back(v.patient_ids[static_cast<std::size_t>(rows[i])]);
    }
    return out;
}

/// Per-patient Negative Binomial dispersion. +infinity marks a Poisson-limit
/// patient; every finite entry must be positive.
struct DispersionVector {
    Vector alphas;

    static DispersionVector shared(double alpha, Eigen::Index n) {
        DispersionVector d;
        d.alphas = Vector::Constant(n, alpha);
        return d;
    }
    static DispersionVector poisson_limit(Eigen::Index n) { return shared(kAlphaPoisson, n); }

    Eigen::Index size() const { return alphas.size(); }
    double operator[](Eigen::Index i) const { return alphas(i); }

    bool all_poisson() const {
        for (Eigen::Index i = 0; i < alphas.size(); ++i)
            if (!std::isinf(alphas(i))) return false;
        return alphas.size() > 0;
    }
    bool all_equal() const {
        for (Eigen::Index i = 1; i < alphas.size(); ++i)
            if (alphas(i) != alphas(0)) return false;
        return true;
    }
};

inline void validate_dispersion(const DispersionVector& d, Eigen::Index expected_n) {
    if (d.alphas.size() != expected_n)
        throw validation_error("dispersion vector length " + std::to_string(d.alphas.size()) +
                               " does not match patient count " + std::to_string(expected_n));
    for (Eigen::Index i = 0; i < d.alphas.size(); ++i) {
        const double a = d.alphas(i);
        if (std::isnan(a) || a <= 0.0)
            throw validation_error("dispersion alpha_" + std::to_string(i + 1) + " must be positive");
    }
}

/// Mean/variance pair of one count cell under the assumed model.
struct ModelVariance {
    double mean = 0.0;
    double variance = 0.0;
};

/// Variance mu*(1 + mu/alpha) for Negative Binomial, mu in the Poisson limit.
inline ModelVariance model_variance(double mean, double alpha) {
    if (!(mean >= 0.0)) throw validation_error("model_variance: mean must be non-negative");
    if (!(alpha > 0.0)) throw validation_error("model_variance: alpha must be positive");
    const double var = std::isinf(alpha) ? mean : mean * (1.0 + mean / alpha);
    return ModelVariance{mean, var};
}

/// Result of one NMF fit: V ~ exposures * signatures.
struct Factorization {
    Matrix exposures;    // N x K
    Matrix signatures;   // K x M
    int rank = 0;
    NmfModel model = NmfModel::Poisson;
    std::optional<DispersionVector> dispersion;  // absent for Poisson fits
    double divergence = 0.0;                     // final objective value
    int iterations = 0;                          // full (W, H) sweeps performed
    std::uint64_t seed = 0;                      // seed of the winning restart
    bool converged = false;
    std::vector<double> objective_trace;         // objective after init and each sweep
    long denominator_guard_hits = 0;             // times an update denominator was floored

    Matrix fitted_mean() const { return exposures * signatures; }
};

}  // namespace signmf
