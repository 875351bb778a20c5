#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfmmr/lambda_grid.hpp"
#include "gfmmr/mixture.hpp"
#include "gfmmr/rng.hpp"
#include "gfmmr/sparse_regression.hpp"

namespace gfmmr {

using MembershipMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Which patterns may carry mixing mass.
enum class PatternScope {
    all,         ///< generalized model: every nonempty subset
    singletons,  ///< classical mixture of regressions
};

enum class InitMethod {
    kmeans,            ///< k-means on the response rows
    random_partition,  ///< uniform random assignment of rows to components
};

struct EmConfig {
    int K = 3;
    PenaltyConfig penalty = PenaltyConfig::none(3);
    double rel_tol = 1e-5;
    int max_iter = 500;
    double prune_threshold = 0.01;
    int n_restarts = 5;
    bool coupled = false;
    std::uint64_t seed = 0;
    double sigma_jitter = 1e-8;

    PatternScope scope = PatternScope::all;
    /// Treat responses as independent: off-diagonal entries of Sigma are zeroed.
    bool diagonal_sigma = false;
    InitMethod init = InitMethod::kmeans;
    /// Component-wise cross-validation of lambda_k; re-tuned every `cv_every` iterations.
    std::optional<LambdaGrid> cv_grid;
    int cv_every = 5;
    /// Check every M-step against its own objective; throws NumericalError on a violation.
    bool audit = false;
    int workers = 1;
    SolverOptions solver{};

    void validate() const;
};

struct FitResult {
    ModelParams params;
    Responsibilities resp;
    MembershipMatrix hard;
    std::vector<int> hard_pattern;
    std::vector<double> loglik_trace;
    double loglik = 0.0;
    double penalized_loglik = 0.0;
    int n_effective_params = 0;
    std::vector<std::string> pruned_patterns;
    PenaltyConfig penalty;
    bool converged = false;
    int iterations = 0;
    int restart = 0;
    std::vector<std::string> warnings;
};

struct PruneResult {
    ModelParams params;
    Responsibilities resp;
    std::vector<std::string> pruned;
};

/// Posterior pattern probabilities via log-sum-exp; zero for patterns with pi = 0.
Responsibilities e_step(const ModelParams& params, const Dataset& data);
Responsibilities e_step(const ModelParams& params, const PatternSet& patterns, const Dataset& data);

/// Column means of Z.
VectorXd update_pi(const Responsibilities& resp);

/// The weighted penalized regression for component k: one row per
/// (observation, pattern containing k) with positive responsibility.
/// Throws EmptyComponentError when the total weight is below 1e-12.
StackedProblem build_component_problem(int k, const Responsibilities& resp, const VectorXd& pi,
                                       const ModelParams& params, const PatternSet& patterns,
                                       const Dataset& data, const PenaltyConfig& penalty, bool coupled,
                                       std::vector<int>* row_pattern = nullptr);

MatrixXd update_B_k(int k, const Responsibilities& resp, const VectorXd& pi, const ModelParams& params,
                    const Dataset& data, const PenaltyConfig& penalty, bool coupled,
                    const SolverOptions& opts = {});

/// Closed-form covariance update, symmetrized and jittered when not SPD.
MatrixXd update_sigma(const Responsibilities& resp, const ModelParams& params, const Dataset& data,
                      double sigma_jitter = 1e-8, bool diagonal = false);

/// sum_i sum_t z_it log f(y_i | t, B, sigma): the quantity update_sigma maximizes.
double sigma_objective(const Responsibilities& resp, const ModelParams& params, const Dataset& data,
                       const MatrixXd& sigma);

/// Patterns with pi below threshold lose their mass; the rest is renormalized
/// and responsibilities recomputed over the surviving patterns.
PruneResult prune(const ModelParams& params, const Responsibilities& resp, double threshold,
                  const Dataset& data);

/// n x K 0/1 matrix from the argmax pattern of each row; ties go to the
/// earlier pattern in canonical order.
MembershipMatrix hard_memberships(const Responsibilities& resp, const PatternSet& patterns,
                                  std::vector<int>* argmax_pattern = nullptr);

/// Nonzero coefficients + nonzero pi - 1 + nonzero upper-triangle Sigma entries.
int count_effective_params(const ModelParams& params);

/// Starting values following EmConfig::init.
ModelParams initialize(const Dataset& data, const EmConfig& config, Rng& rng);

FitResult fit_em(const Dataset& data, const EmConfig& config,
                 const std::optional<ModelParams>& init = std::nullopt);

/// Objective clusters as observation index sets.
std::vector<std::vector<int>> clusters_from_memberships(const MembershipMatrix& hard);

/// Singleton-only mixture with memberships taken from posterior > alpha
/// (the hard-threshold overlap heuristic).
MembershipMatrix threshold_memberships(const Responsibilities& resp, const PatternSet& patterns,
                                       double alpha);

std::string to_string(InitMethod m);
InitMethod init_method_from_string(const std::string& s);

}  // namespace gfmmr
