#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gfmmr/em.hpp"
#include "gfmmr/simulation.hpp"

namespace gfmmr {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kBundleSchema = "gfmmr.result/1";

struct CsvReadOptions {
    /// Replace missing cells by the column mean of the observed cells.
    bool mean_impute = false;
    /// First column holds row identifiers rather than values.
    bool row_ids = false;
};

struct ImputedCell {
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double value = 0.0;
};

struct CsvMatrix {
    MatrixXd values;
    std::vector<std::string> names;
    std::vector<std::string> row_ids;
    std::vector<ImputedCell> imputed;
};

/// Reads a header + numeric body. Missing cells ("", NA, NaN) are rejected
/// with their coordinates unless `mean_impute` is set.
CsvMatrix ingest_csv(const std::string& path, const std::string& role, const CsvReadOptions& opts = {});
CsvMatrix parse_csv(const std::string& text, const std::string& role, const CsvReadOptions& opts = {});

struct LoadOptions {
    CsvReadOptions csv{};
    /// Rows with fewer observed responses than this fraction are dropped.
    double min_observed_fraction = 0.0;
};

struct LoadReport {
    std::vector<Eigen::Index> dropped_rows;
    std::vector<ImputedCell> imputed_x;
    std::vector<ImputedCell> imputed_y;
    std::string summary() const;
};

Dataset load_dataset(const std::string& x_path, const std::string& y_path, const LoadOptions& opts = {},
                     LoadReport* report = nullptr);

void write_matrix_csv(const std::string& path, const MatrixXd& M, const std::vector<std::string>& header);
std::string matrix_csv(const MatrixXd& M, const std::vector<std::string>& header);

/// Everything needed to reuse a fit without refitting.
struct ResultBundle {
    std::string schema = kBundleSchema;
    std::string version = kLibraryVersion;
    std::uint64_t seed = 0;
    ModelParams params;
    Responsibilities resp;
    MembershipMatrix hard;
    std::vector<int> hard_pattern;
    std::vector<double> loglik_trace;
    double loglik = 0.0;
    double penalized_loglik = 0.0;
    int n_effective_params = 0;
    std::vector<std::string> pattern_labels;
    std::vector<std::string> pruned_patterns;
    std::vector<std::string> predictor_names;
    std::vector<std::string> response_names;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> warnings;
    std::map<std::string, std::string> config;
};

ResultBundle bundle_from_fit(const FitResult& fit, const Dataset& data, std::uint64_t seed,
                             std::map<std::string, std::string> config = {});

std::string bundle_to_string(const ResultBundle& bundle);
ResultBundle bundle_from_string(const std::string& text);
void save_bundle(const std::string& path, const ResultBundle& bundle);
ResultBundle load_bundle(const std::string& path);

/// X.csv, Y.csv and truth.json (coefficients, memberships, patterns, noise) in `dir`.
void save_sim_instance(const std::string& dir, const SimInstance& inst, const SimSpec& spec);
SimInstance load_sim_instance(const std::string& dir);
/// Reads only the ground truth sidecar (true_B, true_P, true_pattern, noise).
SimInstance load_sim_truth(const std::string& truth_path);

std::string read_file(const std::string& path);
/// Writes via a temporary file and rename.
void write_file(const std::string& path, const std::string& contents);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace gfmmr
