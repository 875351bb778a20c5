#pragma once

#include <cstdint>
#include <vector>

namespace gfmmr {

/// Candidate tuning values for component-wise cross-validation.
///
/// When `values` is empty the grid is relative: `n_points` log-spaced values
/// from the stacked problem's lambda_max down to `min_ratio * lambda_max`.
/// Explicit values are in per-component units (lambda_k), strictly decreasing.
struct LambdaGrid {
    std::vector<double> values;
    int n_points = 20;
    double min_ratio = 1e-3;
    int n_folds = 10;
    std::uint64_t seed = 0;

    void validate() const;
    /// Decreasing effective values for a problem whose lambda_max is given.
    std::vector<double> resolve(double lambda_max_effective, double component_mass) const;
};

}  // namespace gfmmr
