#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gfmmr {

struct SimilarityMatrix {
    Eigen::MatrixXd S;
    /// Per-point preference written onto the diagonal before message passing.
    Eigen::VectorXd preference;

    void set_preference(double value);
    void validate() const;
};

/// S(a, b) = -||row_a - row_b||^2 with the median off-diagonal similarity as preference.
SimilarityMatrix similarity_from_rows(const Eigen::MatrixXd& rows);

struct ApOptions {
    double damping = 0.9;
    int max_iter = 1000;
    int stable_iters = 50;
};

struct ApResult {
    std::vector<int> exemplar;  ///< exemplar index of every point
    std::vector<int> exemplars; ///< sorted distinct exemplars
    int iterations = 0;
    bool converged = false;

    /// Cluster label of every point (0-based, in exemplar order).
    std::vector<int> labels() const;
};

ApResult affinity_propagation(const SimilarityMatrix& sim, const ApOptions& opts = {});

double median_off_diagonal(const Eigen::MatrixXd& S);

}  // namespace gfmmr
