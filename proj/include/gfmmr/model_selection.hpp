#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfmmr/em.hpp"
#include "gfmmr/lambda_grid.hpp"

namespace gfmmr {

struct CvResult {
    /// Selected per-component value lambda_k.
    double lambda = 0.0;
    /// Selected value on the stacked problem's scale (lambda_k * component mass).
    double lambda_effective = 0.0;
    std::vector<double> grid;            ///< lambda_k units, decreasing
    std::vector<double> grid_effective;  ///< stacked-problem units
    std::vector<double> cv_error;        ///< mean held-out error per grid value
    MatrixXd B_selected;                 ///< full-data fit at the selected value
};

/// Fold index of every stacked row: rows are grouped by pattern, ordered by
/// decreasing weight within a pattern and dealt round-robin.
std::vector<int> assign_folds(const std::vector<int>& row_pattern, const VectorXd& w, int n_folds,
                              std::uint64_t seed = 0);

/// Cross-validation on an already stacked problem (weighted squared
/// prediction error of the subproblem). `row_pattern` gives each row's pattern.
CvResult cv_select_lambda_stacked(const StackedProblem& problem, const std::vector<int>& row_pattern,
                                  double component_mass, const LambdaGrid& grid,
                                  const SolverOptions& opts = {});

/// Component-wise CV for lambda_k on the current EM state. `lambda2` is the
/// component's fixed elastic-net weight (0 for lasso).
CvResult cv_select_lambda(int k, const Responsibilities& resp, const VectorXd& pi, const ModelParams& params,
                          const Dataset& data, const LambdaGrid& grid, bool coupled,
                          const SolverOptions& opts = {}, double lambda2 = 0.0);

enum class IcKind { aic, bic, custom };

struct IcConfig {
    std::vector<int> K_candidates{1, 2, 3};
    IcKind kind = IcKind::bic;
    double custom_an = 0.0;

    double a_n(Eigen::Index n) const;
    void validate() const;
};

struct IcRow {
    int K = 0;
    bool ok = false;
    double loglik = 0.0;
    int n_params = 0;
    double a_n = 0.0;
    double ic = 0.0;
    std::string error;
};

struct SelectKResult {
    int K = 0;
    std::vector<IcRow> table;
    std::optional<FitResult> best_fit;
};

/// Fits every candidate K and returns argmin of -2 l_n + N_K a_n (ties to the
/// smaller K). The template's penalty is broadcast across components.
SelectKResult select_K(const Dataset& data, const EmConfig& em_template, const IcConfig& ic);

/// Penalty of the template resized to K components (first lambda broadcast).
PenaltyConfig resize_penalty(const PenaltyConfig& penalty, int K);

std::string to_string(IcKind kind);
IcKind ic_kind_from_string(const std::string& s);

}  // namespace gfmmr
