#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gfmmr/affinity.hpp"
#include "gfmmr/em.hpp"
#include "gfmmr/io.hpp"
#include "gfmmr/model_selection.hpp"

namespace gfmmr {

/// APC preference: the median similarity, or a fixed value.
struct Preference {
    bool median = true;
    double value = 0.0;

    static Preference parse(const std::string& s);
    std::string str() const;
};

struct PipelineConfig {
    EmConfig em{};
    /// When set, every fit picks its own K by information criterion.
    std::optional<IcConfig> select_k;
    /// Level 1 compares label-aligned responsibilities (mean squared row difference).
    Preference level1{false, -0.5};
    /// Level 2 compares label-aligned coefficients scaled by their mean squared norm.
    Preference level2{false, -0.5};
    ApOptions ap{};
    /// Step-1 bundles are cached here by content hash; empty disables caching.
    std::string cache_dir;
    int workers = 1;

    void validate() const;
    /// Canonical text of every setting that affects step 1.
    std::string step1_key() const;
};

struct PipelineResult {
    std::vector<ResultBundle> step1;        ///< one q = 1 fit per response
    std::vector<bool> step1_cached;
    MatrixXd level1_similarity;
    std::vector<int> level1_labels;
    std::vector<std::vector<int>> level2_groups;  ///< response indices per final group
    std::vector<ResultBundle> group_fits;          ///< aligned with level2_groups
};

/// Permutation of components (new index -> old index) minimizing the squared
/// distance of `b`'s responsibilities to `a`'s; exhaustive for K <= 6.
std::vector<int> align_components(const MatrixXd& Za, const MatrixXd& Zb, int K);
/// Responsibility columns of a fit relabelled by a component permutation.
MatrixXd permute_patterns(const MatrixXd& Z, const std::vector<int>& perm, int K);

/// Level-1 distance: min over labelings of ||Za - Zb||^2 / n.
double responsibility_distance(const MatrixXd& Za, const MatrixXd& Zb, int K);
/// Level-2 distance: min over labelings of ||vec Ba - vec Bb||^2 scaled by the mean squared norm.
double coefficient_distance(const std::vector<MatrixXd>& Ba, const std::vector<MatrixXd>& Bb);

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config);

/// Writes step1/, groups.csv and group_<g>/ (bundle, matrices, cluster summaries).
void write_pipeline_outputs(const std::string& dir, const PipelineResult& result, const Dataset& data);

/// Per-cluster response summary of a fit: count, mean and median per response.
std::string cluster_summary_csv(const ResultBundle& bundle, const Dataset& data);

struct ClusterRef {
    enum class Kind { pattern, component } kind = Kind::component;
    int index = 0;
};

struct CoefficientRef {
    const ResultBundle* bundle = nullptr;
    int component = 0;
};

struct ResponseQuartiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct CrossPrediction {
    std::vector<int> rows;
    MatrixXd predicted;
    std::vector<ResponseQuartiles> quartiles;
};

/// X * (sum of the chosen coefficient matrices) on the rows hard-assigned to
/// `cluster` in `bundle`.
CrossPrediction cross_predict(const ResultBundle& bundle, const ClusterRef& cluster,
                              const std::vector<CoefficientRef>& choice, const Dataset& data);

/// Type-7 quantiles of a sample.
ResponseQuartiles quartiles(std::vector<double> v);

}  // namespace gfmmr
