#pragma once

#include "signmf/simulation.hpp"
#include "signmf/types.hpp"

#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace signmf {

inline constexpr const char* kVersion = "0.1.0";

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_value(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// strtod rather than stod: underflow to a subnormal must parse (iterated
// factor updates legitimately leave entries that small), only overflow and
// trailing garbage are rejected.
inline double parse_number(const std::string& text, const std::string& where) {
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(begin, &end);
    bool bad = end == begin || (errno == ERANGE && std::abs(x) == HUGE_VAL);
    while (!bad && (*end == ' ' || *end == '\t')) ++end;
    if (bad || *end != '\0') throw validation_error("could not parse number '" + text + "' at " + where);
    return x;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

}  // namespace detail

/// A generic labeled CSV table: header row of column labels, first column of
/// row labels.
struct LabeledTable {
    std::string corner;
    std::vector<std::string> row_labels, col_labels;
    Matrix values;
};

inline LabeledTable read_labeled_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(detail::split_csv_line(line));
    }
    if (rows.size() < 2 || rows[0].size() < 2)
        throw validation_error("'" + path.string() + "': need a header row, a label column, and at least one value");
    LabeledTable t;
    t.corner = rows[0][0];
    t.col_labels.assign(rows[0].begin() + 1, rows[0].end());
    const std::size_t width = rows[0].size();
    t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(width - 1));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != width)
            throw validation_error("'" + path.string() + "': line " + std::to_string(r + 1) + " has " +
                                   std::to_string(rows[r].size()) + " fields, header has " + std::to_string(width));
        t.row_labels.push_back(rows[r][0]);
        for (std::size_t c = 1; c < width; ++c)
            t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) =
                parse_number(rows[r][c], path.string() + ":" + std::to_string(r + 1) + "," + std::to_string(c + 1));
    }
    return t;
}

namespace detail {

// "A[C>A]G" style label?
inline bool is_mutation_label(const std::string& s) {
    auto base = [](char c) { return c == 'A' || c == 'C' || c == 'G' || c == 'T'; };
    return s.size() == 7 && base(s[0]) && s[1] == '[' && base(s[2]) && s[3] == '>' && base(s[4]) && s[5] == ']' &&
           base(s[6]);
}

inline bool all_mutation_labels(const std::vector<std::string>& labels) {
    for (const auto& l : labels)
        if (!is_mutation_label(l)) return false;
    return !labels.empty();
}

}  // namespace detail

/// Writes a labeled matrix as CSV at full double precision.
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                             const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels,
                             const std::string& corner) {
    if (row_labels.size() != static_cast<std::size_t>(m.rows()) ||
        col_labels.size() != static_cast<std::size_t>(m.cols()))
        throw validation_error("write_matrix_csv: label counts do not match the matrix");
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write '" + path.string() + "'");
    out << corner;
    for (const auto& c : col_labels) out << ',' << c;
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << row_labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format_value(m(i, j));
        out << '\n';
    }
    if (!out) throw validation_error("write failed for '" + path.string() + "'");
}

/// Loads a patient-by-mutation-type count table. Orientation is
/// auto-detected: whichever axis carries mutation-type labels (or has the
/// canonical 96 entries) becomes the columns.
inline CountMatrix load_counts(const std::filesystem::path& path) {
    LabeledTable t = read_labeled_csv(path);
    bool transpose;
    if (detail::all_mutation_labels(t.col_labels)) {
        transpose = false;
    } else if (detail::all_mutation_labels(t.row_labels)) {
        transpose = true;
    } else if (t.values.cols() != 96 && t.values.rows() == 96) {
        transpose = true;
    } else {
        transpose = false;
    }
    Matrix v = transpose ? Matrix(t.values.transpose()) : std::move(t.values);
    std::vector<std::string> patients = transpose ? t.col_labels : t.row_labels;
    std::vector<std::string> types = transpose ? t.row_labels : t.col_labels;
    try {
        return make_count_matrix(std::move(v), std::move(patients), std::move(types));
    } catch (const validation_error& e) {
        throw validation_error("'" + path.string() + "': " + e.what());
    }
}

inline void write_counts(const std::filesystem::path& path, const CountMatrix& v) {
    write_matrix_csv(path, v.counts, v.patient_ids, v.mutation_types, "patient");
}

/// Loads a signature catalog. The axis whose vectors sum to one is the
/// mutation-type axis; the usual catalog layout (one column per signature,
/// 96 label rows) is transposed into rows-are-signatures form.
inline ReferenceSignatures load_signatures(const std::filesystem::path& path) {
    LabeledTable t = read_labeled_csv(path);
    auto sums_to_one = [](const Vector& sums) {
        for (Eigen::Index i = 0; i < sums.size(); ++i)
            if (std::abs(sums(i) - 1.0) > 1e-6) return false;
        return true;
    };
    const bool rows_are_signatures = sums_to_one(t.values.rowwise().sum());
    const bool cols_are_signatures = sums_to_one(t.values.colwise().sum().transpose());
    ReferenceSignatures ref;
    if (rows_are_signatures && (!cols_are_signatures || detail::all_mutation_labels(t.col_labels))) {
        ref.profiles = std::move(t.values);
        ref.names = std::move(t.row_labels);
        ref.mutation_types = std::move(t.col_labels);
    } else if (cols_are_signatures) {
        ref.profiles = t.values.transpose();
        ref.names = std::move(t.col_labels);
        ref.mutation_types = std::move(t.row_labels);
    } else {
        throw validation_error("'" + path.string() + "': neither axis of the signature table sums to 1");
    }
    try {
        validate_signatures(ref);
    } catch (const validation_error& e) {
        throw validation_error("'" + path.string() + "': " + e.what());
    }
    return ref;
}

inline void write_signatures(const std::filesystem::path& path, const ReferenceSignatures& ref) {
    write_matrix_csv(path, ref.profiles, ref.names, ref.mutation_types, "signature");
}

/// FNV-1a 64-bit digest, used to fingerprint input files in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open '" + path.string() + "' for digest");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return hex;
}

/// Provenance record written next to every CLI result set.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
};

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config"] = m.config;
    j["seed"] = m.seed;
    j["inputs"] = m.input_digests;
    j["version"] = kVersion;
    j["wall_seconds"] = m.wall_seconds;
    j["outputs"] = m.outputs;
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

}  // namespace signmf
