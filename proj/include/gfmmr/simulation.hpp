#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfmmr/em.hpp"
#include "gfmmr/mixture.hpp"
#include "gfmmr/rng.hpp"

namespace gfmmr {

enum class Scenario {
    partition,  ///< every row in exactly one objective cluster, n/K rows each
    overlap,    ///< pattern cardinality drawn from SimSpec::fractions
};

struct SimSpec {
    int n = 150;
    int p = 15;
    int q = 3;
    int K = 3;
    double rho_x = 0.5;
    double rho_e = 0.75;
    double p1 = 0.5;
    double p2 = 0.9;
    Scenario scenario = Scenario::partition;
    /// Probability of a row belonging to 1, 2, ..., K clusters (overlap scenario).
    std::vector<double> fractions{0.70, 0.22, 0.08};
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimInstance {
    Dataset data;
    std::vector<MatrixXd> true_B;
    MembershipMatrix true_P;
    std::vector<int> true_pattern;  ///< canonical pattern index per row
    MatrixXd noise;                 ///< Y minus the signal, computed after assembly

    /// Objective clusters as row-index sets.
    std::vector<std::vector<int>> true_clusters() const;
    /// sum_k B_k^T x_i P_ik for every row.
    MatrixXd signal() const;
};

/// rho^|i-j|; throws UsageError when |rho| >= 1.
MatrixXd ar_covariance(int dim, double rho);

/// W (.) S (.) T with W ~ N(0,1), S ~ Bernoulli(p1) entrywise and each row of
/// T all-one with probability p2.
MatrixXd generate_sparse_B(int p, int q, double p1, double p2, Rng& rng);

/// Rows drawn iid from N(0, cov) through the Cholesky factor of cov.
MatrixXd mvn_rows(int n, const MatrixXd& cov, Rng& rng);

SimInstance simulate(const SimSpec& spec);

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

}  // namespace gfmmr
