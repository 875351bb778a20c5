#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gfmmr {

/// One index set per objective cluster; sets may overlap.
using ClusterSet = std::vector<std::vector<int>>;

/// Measures as printed in the quality formulas: specificity = |A n A'| / |A|
/// (recall), sensitivity = |A n A'| / |A'| (precision).
struct Quality {
    double specificity = 0.0;
    double sensitivity = 0.0;
    double f1 = 0.0;
};

/// Both empty -> (1, 1, 1); one side empty -> (0, 0, 0).
Quality quality(const std::vector<int>& target, const std::vector<int>& retrieved);

struct MatchReport {
    /// retrieved index -> target index, -1 for a null partner. Sized to the
    /// padded length; entries past the real retrieved clusters are null clusters.
    std::vector<int> pairing;
    /// Per padded pair, aligned with `pairing`.
    std::vector<Quality> pairs;
    double mean_specificity = 0.0;
    double mean_sensitivity = 0.0;
    double mean_f1 = 0.0;
    double coefficient_sse = 0.0;
    std::size_t n_target = 0;
    std::size_t n_retrieved = 0;

    /// target index -> retrieved index (-1 when the target got a null cluster).
    std::vector<int> target_to_retrieved() const;
};

/// Pads the shorter list with null clusters and maximizes total F1 over
/// one-to-one pairings: exhaustive up to 8 clusters, greedy beyond.
MatchReport match_clusters(const ClusterSet& target, const ClusterSet& retrieved);

/// sum over paired (k, k') of ||B'_k' - B_k||_F^2; unpaired targets add ||B_k||^2.
double coefficient_sse(const std::vector<Eigen::MatrixXd>& true_B, const std::vector<Eigen::MatrixXd>& est_B,
                       const MatchReport& match);

/// Delimited table: one row per pair plus a mean row.
std::string metrics_table(const MatchReport& report);

}  // namespace gfmmr
