#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gfmmr/mixture.hpp"
#include "gfmmr/sparse_regression.hpp"

namespace gfmmr {

struct PlaidConfig {
    int K = 3;             ///< maximum number of layers
    int S = 10;            ///< inner iterations per layer (sequential) or sweeps (joint)
    double T_frac = 0.2;   ///< memberships saturate after S - T_frac * S iterations
    double tau = 0.6;      ///< pruning: keep row i iff ||z_i - B^T x_i||^2 <= tau ||z_i||^2
    int R = 2;             ///< backfitting passes after the layer search
    double lambda = 1.0;   ///< shared lasso weight of every layer and response
    /// Optional K x q per-layer, per-response weights overriding `lambda`.
    std::optional<MatrixXd> lambda_jk;
    std::uint64_t seed = 0;
    SolverOptions solver{};

    void validate(Eigen::Index q) const;
    double lambda_of(int k, Eigen::Index m) const;
};

struct PlaidLayer {
    MatrixXd B;
    VectorXd P;  ///< 0/1 membership of every row
};

struct PlaidFit {
    std::vector<PlaidLayer> layers;
    double residual_sse = 0.0;
    double Q_value = 0.0;
    /// Q after each backfitting pass (sequential fits only).
    std::vector<double> backfit_trace;

    /// Member rows of every layer.
    std::vector<std::vector<int>> clusters() const;
};

/// 1/2 sum_i ||y_i - sum_k P_ik B_k^T x_i||^2 + sum_k sum_m lambda_km ||B_k[:, m]||_1.
double plaid_objective(const std::vector<PlaidLayer>& layers, const Dataset& data, const PlaidConfig& config);

/// Keeps row i iff ||z_i - B^T x_i||^2 <= tau ||z_i||^2.
VectorXd plaid_prune(const MatrixXd& Z, const MatrixXd& X, const MatrixXd& B, double tau);

/// Greedy layer search followed by R backfitting passes over the coefficients.
PlaidFit plaid_fit_sequential(const Dataset& data, const PlaidConfig& config);

/// All K layers updated cyclically for S sweeps.
PlaidFit plaid_fit_joint(const Dataset& data, const PlaidConfig& config);

}  // namespace gfmmr
