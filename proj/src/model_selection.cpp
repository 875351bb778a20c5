#include "gfmmr/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gfmmr/errors.hpp"

namespace gfmmr {

// ------------------------------------------------------------ LambdaGrid

void LambdaGrid::validate() const {
    if (n_folds < 2) throw UsageError("cross-validation needs at least 2 folds");
    if (values.empty()) {
        if (n_points < 1) throw UsageError("relative lambda grid needs n_points >= 1");
        if (!(min_ratio > 0.0 && min_ratio <= 1.0)) throw UsageError("min_ratio must be in (0, 1]");
        return;
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0) || !std::isfinite(values[i])) throw UsageError("lambda grid values must be positive");
        if (i > 0 && !(values[i] < values[i - 1])) throw UsageError("lambda grid must be strictly decreasing");
    }
}

std::vector<double> LambdaGrid::resolve(double lambda_max_effective, double component_mass) const {
    std::vector<double> out;
    if (!values.empty()) {
        for (double v : values) out.push_back(v * component_mass);
        return out;
    }
    if (!(lambda_max_effective > 0.0)) return {0.0};
    if (n_points == 1) return {lambda_max_effective};
    const double lo = std::log(lambda_max_effective * min_ratio);
    const double hi = std::log(lambda_max_effective);
    for (int i = 0; i < n_points; ++i)
        out.push_back(std::exp(hi + (lo - hi) * static_cast<double>(i) / static_cast<double>(n_points - 1)));
    out.front() = lambda_max_effective;
    return out;
}

// -------------------------------------------------------------------- CV

std::vector<int> assign_folds(const std::vector<int>& row_pattern, const VectorXd& w, int n_folds,
                              std::uint64_t seed) {
    const std::size_t m = row_pattern.size();
    if (static_cast<Eigen::Index>(m) != w.size()) throw ShapeError("row pattern and weight lengths differ");
    std::vector<std::size_t> shuffled(m);
    std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
    Rng rng = make_stream(seed, 0xcf01d);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::size_t> tiebreak(m);
    for (std::size_t r = 0; r < m; ++r) tiebreak[shuffled[r]] = r;

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (row_pattern[a] != row_pattern[b]) return row_pattern[a] < row_pattern[b];
        const double wa = w(static_cast<Eigen::Index>(a));
        const double wb = w(static_cast<Eigen::Index>(b));
        if (wa != wb) return wa > wb;
        return tiebreak[a] < tiebreak[b];
    });
    std::vector<int> fold(m, 0);
    for (std::size_t r = 0; r < m; ++r) fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(n_folds));
    return fold;
}

CvResult cv_select_lambda_stacked(const StackedProblem& problem, const std::vector<int>& row_pattern,
                                  double component_mass, const LambdaGrid& grid, const SolverOptions& opts) {
    grid.validate();
    problem.validate();
    const int n_folds = grid.n_folds;
    const Eigen::Index positive = (problem.w.array() > 0.0).count();
    if (positive < n_folds)
        throw DataError("too few weighted rows for " + std::to_string(n_folds) + "-fold cross-validation (" +
                        std::to_string(positive) + ")");
    const std::vector<int> folds = assign_folds(row_pattern, problem.w, n_folds, grid.seed);

    std::vector<std::vector<Eigen::Index>> fold_rows(static_cast<std::size_t>(n_folds));
    for (std::size_t r = 0; r < folds.size(); ++r)
        fold_rows[static_cast<std::size_t>(folds[r])].push_back(static_cast<Eigen::Index>(r));

    const GramStats full = GramStats::from(problem);
    StackedProblem shape;
    shape.X.resize(0, problem.p());
    shape.Ystar.resize(0, problem.q());
    shape.sigma_inv = problem.sigma_inv;
    shape.lambda2 = problem.lambda2;
    shape.unpenalized_cols = problem.unpenalized_cols;

    CvResult out;
    out.grid_effective = grid.resolve(lambda_max(problem), component_mass);
    for (double v : out.grid_effective) out.grid.push_back(component_mass > 0.0 ? v / component_mass : v);
    out.cv_error.assign(out.grid_effective.size(), 0.0);

    auto fit = [&](const GramStats& stats, double lambda, const MatrixXd* warm) {
        shape.lambda1 = lambda;
        return shape.sigma_inv ? solve_coupled_gram(stats, shape, opts, warm)
                               : solve_separate_gram(stats, shape, opts, warm);
    };

    for (int f = 0; f < n_folds; ++f) {
        const auto& held = fold_rows[static_cast<std::size_t>(f)];
        if (held.empty()) continue;
        GramStats train = full;
        train -= GramStats::from_rows(problem, held);
        MatrixXd warm = MatrixXd::Zero(problem.p(), problem.q());
        for (std::size_t g = 0; g < out.grid_effective.size(); ++g) {
            const SolverReport rep = fit(train, out.grid_effective[g], &warm);
            warm = rep.B;
            out.cv_error[g] += prediction_error(problem, rep.B, held);
        }
    }
    for (double& e : out.cv_error) e /= full.total_weight;

    std::size_t best = 0;
    for (std::size_t g = 1; g < out.cv_error.size(); ++g)
        if (out.cv_error[g] < out.cv_error[best] * (1.0 - 1e-12)) best = g;
    out.lambda_effective = out.grid_effective[best];
    out.lambda = out.grid[best];
    out.B_selected = fit(full, out.lambda_effective, nullptr).B;
    return out;
}

CvResult cv_select_lambda(int k, const Responsibilities& resp, const VectorXd& pi, const ModelParams& params,
                          const Dataset& data, const LambdaGrid& grid, bool coupled, const SolverOptions& opts,
                          double lambda2) {
    const PatternSet patterns(params.K());
    std::vector<int> row_pattern;
    // Lambda values are replaced per grid point; the template only fixes lambda2.
    PenaltyConfig shape_penalty = lambda2 > 0.0
                                      ? PenaltyConfig::elastic_net(std::vector<double>(static_cast<std::size_t>(params.K()), 0.0),
                                                                   std::vector<double>(static_cast<std::size_t>(params.K()), lambda2))
                                      : PenaltyConfig::lasso(params.K(), 0.0);
    const StackedProblem prob =
        build_component_problem(k, resp, pi, params, patterns, data, shape_penalty, coupled, &row_pattern);
    double mass = 0.0;
    for (int t : patterns.containing(k)) mass += pi(t);
    return cv_select_lambda_stacked(prob, row_pattern, mass, grid, opts);
}

// --------------------------------------------------------------------- IC

double IcConfig::a_n(Eigen::Index n) const {
    switch (kind) {
        case IcKind::aic: return 2.0;
        case IcKind::bic: return std::log(static_cast<double>(n));
        case IcKind::custom: return custom_an;
    }
    return 0.0;
}

void IcConfig::validate() const {
    if (K_candidates.empty()) throw UsageError("no K candidates");
    for (int K : K_candidates)
        if (K < 1) throw UsageError("K candidates must be >= 1");
    if (kind == IcKind::custom && !(custom_an >= 0.0)) throw UsageError("custom a_n must be >= 0");
}

std::string to_string(IcKind kind) {
    switch (kind) {
        case IcKind::aic: return "aic";
        case IcKind::bic: return "bic";
        case IcKind::custom: return "custom";
    }
    return "bic";
}

IcKind ic_kind_from_string(const std::string& s) {
    if (s == "aic") return IcKind::aic;
    if (s == "bic") return IcKind::bic;
    if (s == "custom") return IcKind::custom;
    throw UsageError("unknown information criterion: " + s);
}

PenaltyConfig resize_penalty(const PenaltyConfig& penalty, int K) {
    PenaltyConfig out = penalty;
    const auto K_ = static_cast<std::size_t>(K);
    if (penalty.kind == PenaltyKind::none) {
        out.lambda1.assign(K_, 0.0);
        out.lambda2.clear();
        return out;
    }
    const double l1 = penalty.lambda1.empty() ? 0.0 : penalty.lambda1.front();
    out.lambda1.assign(K_, l1);
    if (penalty.kind == PenaltyKind::elastic_net) {
        const double l2 = penalty.lambda2.empty() ? 0.0 : penalty.lambda2.front();
        out.lambda2.assign(K_, l2);
    }
    return out;
}

SelectKResult select_K(const Dataset& data, const EmConfig& em_template, const IcConfig& ic) {
    ic.validate();
    SelectKResult out;
    const double an = ic.a_n(data.n());
    double best_ic = std::numeric_limits<double>::infinity();
    for (int K : ic.K_candidates) {
        IcRow row;
        row.K = K;
        row.a_n = an;
        try {
            EmConfig cfg = em_template;
            cfg.K = K;
            cfg.penalty = resize_penalty(em_template.penalty, K);
            FitResult fit = fit_em(data, cfg);
            row.loglik = fit.loglik;
            row.n_params = fit.n_effective_params;
            row.ic = -2.0 * row.loglik + static_cast<double>(row.n_params) * an;
            row.ok = true;
            if (row.ic < best_ic || (row.ic == best_ic && K < out.K)) {
                best_ic = row.ic;
                out.K = K;
                out.best_fit = std::move(fit);
            }
        } catch (const Error& e) {
            row.error = e.what();
        }
        out.table.push_back(row);
    }
    if (!out.best_fit) {
        std::string msg = "model selection failed for every candidate";
        for (const auto& r : out.table) msg += "; K=" + std::to_string(r.K) + ": " + r.error;
        throw NumericalError(msg);
    }
    return out;
}

}  // namespace gfmmr
