#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gfmmr/patterns.hpp"

namespace gfmmr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// n x p predictors paired with n x q responses.
struct Dataset {
    MatrixXd X;
    MatrixXd Y;
    std::vector<std::string> row_ids;
    std::vector<std::string> predictor_names;
    std::vector<std::string> response_names;

    Dataset() = default;
    /// Validates shapes and finiteness; throws ShapeError / DataError.
    Dataset(MatrixXd X_, MatrixXd Y_);

    Eigen::Index n() const noexcept { return X.rows(); }
    Eigen::Index p() const noexcept { return X.cols(); }
    Eigen::Index q() const noexcept { return Y.cols(); }

    void validate() const;
    /// Dataset restricted to the given response columns; names follow.
    Dataset select_responses(const std::vector<int>& columns) const;
};

/// Theta: K coefficient matrices, the shared error covariance and mixing
/// proportions indexed in canonical PatternSet order.
struct ModelParams {
    std::vector<MatrixXd> B;
    MatrixXd sigma;
    VectorXd pi;

    int K() const noexcept { return static_cast<int>(B.size()); }
    Eigen::Index p() const noexcept { return B.empty() ? 0 : B.front().rows(); }
    Eigen::Index q() const noexcept { return sigma.rows(); }

    double pi_of(const PatternSet& patterns, OverlapPattern t) const;
    /// Sum of pi over the patterns containing component k.
    double component_mass(const PatternSet& patterns, int k) const;

    /// Shape, probability, symmetry and positive-definiteness checks.
    void validate() const;
    void validate_against(const Dataset& data) const;
};

enum class PenaltyKind { none, lasso, elastic_net };

/// Per-component tuning values. Predictors listed in `unpenalized` (row
/// indices of B_k, e.g. an intercept column) never enter the penalty.
struct PenaltyConfig {
    PenaltyKind kind = PenaltyKind::none;
    std::vector<double> lambda1;
    std::vector<double> lambda2;
    std::vector<int> unpenalized;

    static PenaltyConfig none(int K);
    static PenaltyConfig lasso(std::vector<double> lambda);
    static PenaltyConfig lasso(int K, double lambda) { return lasso(std::vector<double>(static_cast<std::size_t>(K), lambda)); }
    static PenaltyConfig elastic_net(std::vector<double> l1, std::vector<double> l2);

    double l1(int k) const;
    double l2(int k) const;
    bool is_unpenalized(int predictor) const;
    void validate(int K) const;
};

/// n x |T| posterior pattern memberships.
struct Responsibilities {
    MatrixXd Z;
    void validate(double tol = 1e-10) const;
};

std::string to_string(PenaltyKind kind);
PenaltyKind penalty_kind_from_string(const std::string& s);

/// Cholesky-backed evaluator of N_q(0, Sigma) log-densities.
class GaussianKernel {
public:
    /// Throws FactorizationError if sigma is not symmetric positive-definite.
    explicit GaussianKernel(const MatrixXd& sigma);
    double logpdf(const Eigen::Ref<const VectorXd>& residual) const;
    /// Row-wise log-densities of residual rows.
    VectorXd logpdf_rows(const MatrixXd& residuals) const;
    double log_det() const noexcept { return log_det_; }
    Eigen::Index dim() const noexcept { return llt_.rows(); }
    MatrixXd inverse() const;

private:
    Eigen::LLT<MatrixXd> llt_;
    double log_det_ = 0.0;
};

/// Sum over members of B_k^T x.
VectorXd pattern_mean(const Eigen::Ref<const VectorXd>& x, OverlapPattern pattern,
                      const std::vector<MatrixXd>& B);
/// Sum of member coefficient matrices.
MatrixXd pattern_coefficients(OverlapPattern pattern, const std::vector<MatrixXd>& B);

double mvn_logpdf(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& mean,
                  const MatrixXd& sigma);

double log_sum_exp(const Eigen::Ref<const VectorXd>& v);

/// n x |T| matrix of log pi_t + log f(y_i | t); -inf where pi_t == 0 (the
/// density is not evaluated for those patterns).
MatrixXd log_joint_densities(const ModelParams& params, const PatternSet& patterns,
                             const Dataset& data);

/// Observed-data log-likelihood.
double log_likelihood(const ModelParams& params, const Dataset& data);
double log_likelihood(const ModelParams& params, const PatternSet& patterns, const Dataset& data);

/// sum_k (sum_{t containing k} pi_t) * rho_k(B_k).
double penalty_value(const ModelParams& params, const PenaltyConfig& penalty);
double penalty_value(const ModelParams& params, const PatternSet& patterns,
                     const PenaltyConfig& penalty);

double penalized_log_likelihood(const ModelParams& params, const Dataset& data,
                                const PenaltyConfig& penalty);

/// rho_k(B) for one coefficient matrix, honouring unpenalized predictors.
double component_penalty(const MatrixXd& B, const PenaltyConfig& penalty, int k);

}  // namespace gfmmr
