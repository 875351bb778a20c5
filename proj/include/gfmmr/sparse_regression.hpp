#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace gfmmr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One weighted penalized multivariate regression. Rows are (observation,
/// pattern) pairs when built by the EM engine: `Ystar` carries the offsets of
/// the other components of each pattern and `w` the responsibilities.
struct StackedProblem {
    MatrixXd X;
    MatrixXd Ystar;
    VectorXd w;
    std::optional<MatrixXd> sigma_inv;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::vector<int> unpenalized_cols;
    /// Optional per-response override of lambda1 (separate solver only).
    std::optional<VectorXd> column_lambda1;

    Eigen::Index rows() const noexcept { return X.rows(); }
    Eigen::Index p() const noexcept { return X.cols(); }
    Eigen::Index q() const noexcept { return Ystar.cols(); }
    double lambda1_for(Eigen::Index column) const;
    bool penalized(Eigen::Index predictor) const;

    /// Throws ShapeError / DataError / FactorizationError on invalid input.
    void validate() const;
};

/// Sufficient statistics of a stacked problem: G = X^T W X, C = X^T W Y*.
struct GramStats {
    MatrixXd G;
    MatrixXd C;
    MatrixXd YtWY;
    double total_weight = 0.0;

    static GramStats from(const StackedProblem& problem);
    static GramStats from_rows(const StackedProblem& problem, const std::vector<Eigen::Index>& rows);
    GramStats& operator-=(const GramStats& other);
};

struct SolverOptions {
    double tol = 1e-7;
    int max_sweeps = 10000;
    /// Full sweep at least every this many sweeps once the active set is in use.
    int full_sweep_every = 10;
    /// Verify per-sweep objective monotonicity; throws NumericalError on a violation.
    bool check_monotone = false;
};

struct SolverReport {
    MatrixXd B;
    int iterations = 0;
    double max_kkt_violation = 0.0;
    double objective = 0.0;
    bool hit_sweep_cap = false;
};

/// q independent weighted lasso / elastic-net problems
///   1/2 sum_i w_i (y*_im - x_i^T b_m)^2 + lambda1 ||b_m||_1 + lambda2 ||b_m||_2^2
/// solved by cyclic coordinate descent with soft-thresholding.
SolverReport solve_separate_lasso(const StackedProblem& problem, const SolverOptions& opts = {},
                                  const MatrixXd* warm_start = nullptr);

/// tr((Y* - XB)^T W (Y* - XB) Omega) + 2 lambda1 ||B||_1 with Omega = sigma_inv,
/// solved by coordinate descent over all p*q entries.
SolverReport solve_coupled_lasso(const StackedProblem& problem, const SolverOptions& opts = {},
                                 const MatrixXd* warm_start = nullptr);

/// Dispatches on the presence of sigma_inv.
SolverReport solve(const StackedProblem& problem, const SolverOptions& opts = {},
                   const MatrixXd* warm_start = nullptr);

/// Gram-level entry points used by cross-validation (folds share statistics).
SolverReport solve_separate_gram(const GramStats& stats, const StackedProblem& shape,
                                 const SolverOptions& opts, const MatrixXd* warm_start);
SolverReport solve_coupled_gram(const GramStats& stats, const StackedProblem& shape,
                                const SolverOptions& opts, const MatrixXd* warm_start);

/// Largest subgradient-condition violation of B, on the scale of the separate
/// objective (the coupled gradient is halved so that sigma_inv = I agrees).
double kkt_violation(const StackedProblem& problem, const MatrixXd& B);

/// Smallest lambda1 for which B = 0 (on penalized rows) is optimal.
double lambda_max(const StackedProblem& problem);

/// Objective value of B for the problem (separate or coupled form).
double objective_value(const StackedProblem& problem, const MatrixXd& B);

/// Weighted squared prediction error; Omega-weighted when sigma_inv is present.
double prediction_error(const StackedProblem& problem, const MatrixXd& B,
                        const std::vector<Eigen::Index>& rows);

}  // namespace gfmmr
