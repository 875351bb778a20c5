#include "gfmmr/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gfmmr/errors.hpp"
#include "gfmmr/model_selection.hpp"
#include "gfmmr/parallel.hpp"

namespace gfmmr {

namespace {

constexpr double kEmptyWeight = 1e-12;
constexpr double kNonzero = 1e-12;

Responsibilities normalize_rows(const MatrixXd& log_joint) {
    Responsibilities r;
    r.Z.resize(log_joint.rows(), log_joint.cols());
    for (Eigen::Index i = 0; i < log_joint.rows(); ++i) {
        const double lse = log_sum_exp(log_joint.row(i).transpose());
        if (!std::isfinite(lse)) throw NumericalError("row " + std::to_string(i) + " has zero likelihood under every pattern");
        for (Eigen::Index t = 0; t < log_joint.cols(); ++t) {
            const double v = log_joint(i, t);
            r.Z(i, t) = std::isfinite(v) ? std::exp(v - lse) : 0.0;
        }
        // renormalize to absorb rounding in exp
        r.Z.row(i) /= r.Z.row(i).sum();
    }
    return r;
}

double row_loglik_sum(const MatrixXd& log_joint) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < log_joint.rows(); ++i) total += log_sum_exp(log_joint.row(i).transpose());
    return total;
}

MatrixXd least_squares(const MatrixXd& X, const MatrixXd& Y) {
    // Min-norm solution; small groups may have fewer rows than predictors.
    return X.completeOrthogonalDecomposition().solve(Y);
}

MatrixXd symmetrize(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

// Jitter by sigma_jitter * (trace / q) * I until the factorization succeeds.
MatrixXd make_spd(MatrixXd S, double jitter) {
    S = symmetrize(S);
    const Eigen::Index q = S.rows();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() > 0.0) {
        Eigen::LLT<MatrixXd> llt(S);
        if (llt.info() == Eigen::Success) return S;
    }
    double scale = S.trace() / static_cast<double>(q);
    if (!(scale > 0.0)) scale = 1.0;
    double eps = std::max(jitter, 1e-300) * scale;
    for (int attempt = 0; attempt < 60; ++attempt) {
        MatrixXd T = S;
        T.diagonal().array() += eps;
        Eigen::SelfAdjointEigenSolver<MatrixXd> e2(T, Eigen::EigenvaluesOnly);
        Eigen::LLT<MatrixXd> llt(T);
        if (e2.eigenvalues().minCoeff() > 0.0 && llt.info() == Eigen::Success) return T;
        eps *= 10.0;
    }
    throw NumericalError("could not regularize covariance to positive-definite");
}

// Lloyd's algorithm with k-means++ seeding.
std::vector<int> kmeans_labels(const MatrixXd& rows, int K, Rng& rng, int max_iter = 100) {
    const Eigen::Index n = rows.rows();
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    if (K == 1) return labels;
    MatrixXd centers(K, rows.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = rows.row(pick(rng));
    VectorXd d2(n);
    for (int c = 1; c < K; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j) best = std::min(best, (rows.row(i) - centers.row(j)).squaredNorm());
            d2(i) = best;
        }
        const double total = d2.sum();
        Eigen::Index chosen = pick(rng);
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (Eigen::Index i = 0; i < n; ++i) {
                u -= d2(i);
                if (u <= 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.row(c) = rows.row(chosen);
    }
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < K; ++c) {
                const double d = (rows.row(i) - centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (labels[static_cast<std::size_t>(i)] != best) {
                labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        MatrixXd sums = MatrixXd::Zero(K, rows.cols());
        std::vector<int> counts(static_cast<std::size_t>(K), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[static_cast<std::size_t>(i)]) += rows.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < K; ++c)
            if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        if (!changed && it > 0) break;
    }
    return labels;
}

}  // namespace

// ------------------------------------------------------------- config

void EmConfig::validate() const {
    if (K < 1 || K > kMaxComponents) throw SizeLimitError("K must be in 1.." + std::to_string(kMaxComponents));
    penalty.validate(K);
    if (!(rel_tol > 0.0)) throw UsageError("rel_tol must be > 0");
    if (max_iter < 1) throw UsageError("max_iter must be >= 1");
    if (!(prune_threshold >= 0.0 && prune_threshold < 1.0)) throw UsageError("prune_threshold must be in [0, 1)");
    if (n_restarts < 1) throw UsageError("n_restarts must be >= 1");
    if (!(sigma_jitter >= 0.0)) throw UsageError("sigma_jitter must be >= 0");
    if (cv_every < 1) throw UsageError("cv_every must be >= 1");
    if (coupled && penalty.kind == PenaltyKind::elastic_net)
        throw UsageError("elastic net is only available with separate-response updates");
    if (cv_grid) cv_grid->validate();
}

std::string to_string(InitMethod m) { return m == InitMethod::kmeans ? "kmeans" : "random_partition"; }

InitMethod init_method_from_string(const std::string& s) {
    if (s == "kmeans") return InitMethod::kmeans;
    if (s == "random_partition" || s == "random") return InitMethod::random_partition;
    throw UsageError("unknown init method: " + s);
}

// --------------------------------------------------------------- E-step

Responsibilities e_step(const ModelParams& params, const PatternSet& patterns, const Dataset& data) {
    return normalize_rows(log_joint_densities(params, patterns, data));
}

Responsibilities e_step(const ModelParams& params, const Dataset& data) {
    return e_step(params, PatternSet(params.K()), data);
}

VectorXd update_pi(const Responsibilities& resp) {
    if (resp.Z.rows() == 0) throw DataError("empty responsibilities");
    // sequential sums keep the result independent of vectorization
    VectorXd pi(resp.Z.cols());
    for (Eigen::Index t = 0; t < resp.Z.cols(); ++t) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < resp.Z.rows(); ++i) s += resp.Z(i, t);
        pi(t) = s / static_cast<double>(resp.Z.rows());
    }
    return pi;
}

// --------------------------------------------------------------- M-step

StackedProblem build_component_problem(int k, const Responsibilities& resp, const VectorXd& pi,
                                       const ModelParams& params, const PatternSet& patterns,
                                       const Dataset& data, const PenaltyConfig& penalty, bool coupled,
                                       std::vector<int>* row_pattern) {
    if (k < 0 || k >= params.K()) throw DataError("component index out of range");
    if (resp.Z.rows() != data.n() || resp.Z.cols() != patterns.size())
        throw ShapeError("responsibilities do not match data and pattern set");
    const auto& owners = patterns.containing(k);
    Eigen::Index rows = 0;
    double total = 0.0;
    for (int t : owners)
        for (Eigen::Index i = 0; i < data.n(); ++i)
            if (resp.Z(i, t) > 0.0) {
                ++rows;
                total += resp.Z(i, t);
            }
    if (total < kEmptyWeight)
        throw EmptyComponentError(k, "component " + std::to_string(k + 1) + " has no responsibility mass");

    StackedProblem prob;
    prob.X.resize(rows, data.p());
    prob.Ystar.resize(rows, data.q());
    prob.w.resize(rows);
    if (row_pattern) row_pattern->clear();
    Eigen::Index r = 0;
    for (int t : owners) {
        std::vector<int> others = patterns[t].members();
        others.erase(std::remove(others.begin(), others.end(), k), others.end());
        MatrixXd offset_coef = MatrixXd::Zero(data.p(), data.q());
        for (int l : others) offset_coef += params.B[static_cast<std::size_t>(l)];
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double z = resp.Z(i, t);
            if (!(z > 0.0)) continue;
            prob.X.row(r) = data.X.row(i);
            prob.Ystar.row(r) = data.Y.row(i);
            if (!others.empty()) prob.Ystar.row(r).noalias() -= data.X.row(i) * offset_coef;
            prob.w(r) = z;
            if (row_pattern) row_pattern->push_back(t);
            ++r;
        }
    }
    double mass = 0.0;
    for (int t : owners) mass += pi(t);
    prob.lambda1 = penalty.l1(k) * mass;
    prob.lambda2 = penalty.l2(k) * mass;
    prob.unpenalized_cols = penalty.unpenalized;
    if (coupled) prob.sigma_inv = GaussianKernel(params.sigma).inverse();
    if (prob.sigma_inv) *prob.sigma_inv = symmetrize(*prob.sigma_inv);
    return prob;
}

MatrixXd update_B_k(int k, const Responsibilities& resp, const VectorXd& pi, const ModelParams& params,
                    const Dataset& data, const PenaltyConfig& penalty, bool coupled, const SolverOptions& opts) {
    const PatternSet patterns(params.K());
    const StackedProblem prob = build_component_problem(k, resp, pi, params, patterns, data, penalty, coupled);
    const MatrixXd& warm = params.B[static_cast<std::size_t>(k)];
    return solve(prob, opts, &warm).B;
}

MatrixXd update_sigma(const Responsibilities& resp, const ModelParams& params, const Dataset& data,
                      double sigma_jitter, bool diagonal) {
    const PatternSet patterns(params.K());
    if (resp.Z.rows() != data.n() || resp.Z.cols() != patterns.size())
        throw ShapeError("responsibilities do not match data and pattern set");
    MatrixXd S = MatrixXd::Zero(data.q(), data.q());
    for (int t = 0; t < patterns.size(); ++t) {
        const auto z = resp.Z.col(t);
        if (!(z.array() > 0.0).any()) continue;
        const MatrixXd R = data.Y - data.X * pattern_coefficients(patterns[t], params.B);
        const MatrixXd ZR = R.array().colwise() * z.array();
        S.noalias() += R.transpose() * ZR;
    }
    S /= resp.Z.sum();
    if (diagonal) S = MatrixXd(S.diagonal().asDiagonal());
    return make_spd(S, sigma_jitter);
}

double sigma_objective(const Responsibilities& resp, const ModelParams& params, const Dataset& data,
                       const MatrixXd& sigma) {
    const PatternSet patterns(params.K());
    const GaussianKernel kernel(sigma);
    double total = 0.0;
    for (int t = 0; t < patterns.size(); ++t) {
        const MatrixXd R = data.Y - data.X * pattern_coefficients(patterns[t], params.B);
        total += resp.Z.col(t).dot(kernel.logpdf_rows(R));
    }
    return total;
}

// ---------------------------------------------------------------- pruning

namespace {

std::vector<std::string> prune_pi(VectorXd& pi, const PatternSet& patterns, double threshold) {
    std::vector<std::string> pruned;
    for (int t = 0; t < pi.size(); ++t)
        if (pi(t) > 0.0 && pi(t) < threshold) {
            pruned.push_back(patterns[t].label());
            pi(t) = 0.0;
        }
    const double s = pi.sum();
    if (!(s > 0.0)) throw DegenerateModelError("every pattern fell below the pruning threshold");
    pi /= s;
    return pruned;
}

}  // namespace

PruneResult prune(const ModelParams& params, const Responsibilities& resp, double threshold,
                  const Dataset& data) {
    if (!(threshold >= 0.0 && threshold < 1.0)) throw UsageError("prune threshold must be in [0, 1)");
    const PatternSet patterns(params.K());
    PruneResult out;
    out.params = params;
    out.pruned = prune_pi(out.params.pi, patterns, threshold);
    if (out.pruned.empty()) {
        out.resp = resp;
        out.params.pi = params.pi;
    } else {
        out.resp = e_step(out.params, patterns, data);
    }
    return out;
}

// ---------------------------------------------------------------- helpers

MembershipMatrix hard_memberships(const Responsibilities& resp, const PatternSet& patterns,
                                  std::vector<int>* argmax_pattern) {
    MembershipMatrix hard = MembershipMatrix::Zero(resp.Z.rows(), patterns.K());
    if (argmax_pattern) argmax_pattern->assign(static_cast<std::size_t>(resp.Z.rows()), 0);
    for (Eigen::Index i = 0; i < resp.Z.rows(); ++i) {
        int best = 0;
        for (int t = 1; t < patterns.size(); ++t)
            if (resp.Z(i, t) > resp.Z(i, best)) best = t;
        for (int k : patterns[best].members()) hard(i, k) = 1;
        if (argmax_pattern) (*argmax_pattern)[static_cast<std::size_t>(i)] = best;
    }
    return hard;
}

MembershipMatrix threshold_memberships(const Responsibilities& resp, const PatternSet& patterns, double alpha) {
    MembershipMatrix hard = MembershipMatrix::Zero(resp.Z.rows(), patterns.K());
    for (Eigen::Index i = 0; i < resp.Z.rows(); ++i) {
        int best = 0;
        double best_p = -1.0;
        bool any = false;
        for (int k = 0; k < patterns.K(); ++k) {
            double p = 0.0;
            for (int t : patterns.containing(k)) p += resp.Z(i, t);
            if (p > alpha) {
                hard(i, k) = 1;
                any = true;
            }
            if (p > best_p) {
                best_p = p;
                best = k;
            }
        }
        if (!any) hard(i, best) = 1;
    }
    return hard;
}

std::vector<std::vector<int>> clusters_from_memberships(const MembershipMatrix& hard) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(hard.cols()));
    for (Eigen::Index k = 0; k < hard.cols(); ++k)
        for (Eigen::Index i = 0; i < hard.rows(); ++i)
            if (hard(i, k) != 0) out[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
    return out;
}

int count_effective_params(const ModelParams& params) {
    int count = 0;
    for (const auto& b : params.B) count += static_cast<int>((b.array().abs() > kNonzero).count());
    count += static_cast<int>((params.pi.array() > kNonzero).count()) - 1;
    for (Eigen::Index i = 0; i < params.sigma.rows(); ++i)
        for (Eigen::Index j = i; j < params.sigma.cols(); ++j)
            if (std::abs(params.sigma(i, j)) > kNonzero) ++count;
    return count;
}

// ---------------------------------------------------------- initialization

ModelParams initialize(const Dataset& data, const EmConfig& config, Rng& rng) {
    const int K = config.K;
    const PatternSet patterns(K);
    std::vector<int> labels;
    if (config.init == InitMethod::kmeans) {
        labels = kmeans_labels(data.Y, K, rng);
    } else {
        labels.resize(static_cast<std::size_t>(data.n()));
        std::uniform_int_distribution<int> u(0, K - 1);
        for (auto& l : labels) l = u(rng);
    }

    ModelParams params;
    params.B.assign(static_cast<std::size_t>(K), MatrixXd::Zero(data.p(), data.q()));
    std::vector<int> sizes(static_cast<std::size_t>(K), 0);
    MatrixXd residual = data.Y;
    for (int k = 0; k < K; ++k) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < data.n(); ++i)
            if (labels[static_cast<std::size_t>(i)] == k) rows.push_back(i);
        sizes[static_cast<std::size_t>(k)] = static_cast<int>(rows.size());
        if (rows.empty()) continue;
        MatrixXd Xk(static_cast<Eigen::Index>(rows.size()), data.p());
        MatrixXd Yk(static_cast<Eigen::Index>(rows.size()), data.q());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Xk.row(static_cast<Eigen::Index>(r)) = data.X.row(rows[r]);
            Yk.row(static_cast<Eigen::Index>(r)) = data.Y.row(rows[r]);
        }
        params.B[static_cast<std::size_t>(k)] = least_squares(Xk, Yk);
        for (Eigen::Index i : rows) residual.row(i) = data.Y.row(i) - data.X.row(i) * params.B[static_cast<std::size_t>(k)];
    }

    params.pi = VectorXd::Zero(patterns.size());
    const auto singles = patterns.singletons();
    const bool overlaps = config.scope == PatternScope::all && patterns.size() > K;
    const double single_mass = overlaps ? 0.9 : 1.0;
    const double total = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), 0));
    for (int k = 0; k < K; ++k) {
        // +1 keeps empty k-means groups alive
        params.pi(singles[static_cast<std::size_t>(k)]) =
            single_mass * (sizes[static_cast<std::size_t>(k)] + 1.0) / (total + K);
    }
    if (overlaps) {
        const double each = 0.1 / static_cast<double>(patterns.size() - K);
        for (int t = K; t < patterns.size(); ++t) params.pi(t) = each;
    }
    params.pi /= params.pi.sum();

    MatrixXd S = residual.transpose() * residual / static_cast<double>(data.n());
    if (config.diagonal_sigma) S = MatrixXd(S.diagonal().asDiagonal());
    params.sigma = make_spd(S, std::max(config.sigma_jitter, 1e-8));
    return params;
}

// ------------------------------------------------------------------ driver

namespace {

struct RunState {
    ModelParams params;
    PenaltyConfig penalty;
    std::vector<double> trace;
    std::vector<std::string> pruned;
    std::vector<std::string> warnings;
    bool converged = false;
    int iterations = 0;
};

bool has_mass(const VectorXd& pi, const PatternSet& patterns, int k) {
    for (int t : patterns.containing(k))
        if (pi(t) > 0.0) return true;
    return false;
}

void restrict_scope(VectorXd& pi, const PatternSet& patterns, PatternScope scope) {
    if (scope != PatternScope::singletons) return;
    for (int t = 0; t < patterns.size(); ++t)
        if (patterns[t].size() > 1) pi(t) = 0.0;
    const double s = pi.sum();
    if (!(s > 0.0)) throw DegenerateModelError("no singleton pattern carries mass");
    pi /= s;
}

RunState run_em(const Dataset& data, const EmConfig& config, ModelParams params, const PatternSet& patterns) {
    RunState st;
    st.penalty = config.penalty;
    restrict_scope(params.pi, patterns, config.scope);
    params.validate_against(data);

    const double audit_tol = 1e-8;
    ModelParams best = params;
    double best_pll = -std::numeric_limits<double>::infinity();
    double prev_ll = 0.0;

    for (int it = 1; it <= config.max_iter; ++it) {
        const MatrixXd lj = log_joint_densities(params, patterns, data);
        const double ll = row_loglik_sum(lj);
        if (!std::isfinite(ll))
            throw NumericalError("non-finite log-likelihood at iteration " + std::to_string(it));
        st.trace.push_back(ll);
        const double pll = ll - penalty_value(params, patterns, st.penalty);
        if (pll > best_pll) {
            best_pll = pll;
            best = params;
        }
        st.iterations = it;
        if (it > 1 && std::abs((ll - prev_ll) / prev_ll) < config.rel_tol) {
            st.converged = true;
            break;
        }
        prev_ll = ll;
        if (it == config.max_iter) break;

        const Responsibilities resp = normalize_rows(lj);
        ModelParams next = params;
        next.pi = update_pi(resp);

        if (config.cv_grid && st.penalty.kind != PenaltyKind::none && (it - 1) % config.cv_every == 0) {
            for (int k = 0; k < config.K; ++k) {
                if (!has_mass(next.pi, patterns, k)) continue;
                try {
                    const CvResult cv = cv_select_lambda(k, resp, next.pi, next, data, *config.cv_grid,
                                                         config.coupled, config.solver, st.penalty.l2(k));
                    auto& slot = st.penalty.lambda1[static_cast<std::size_t>(k)];
                    if (slot != cv.lambda) {
                        slot = cv.lambda;
                        // objectives under different lambdas are not comparable
                        best_pll = -std::numeric_limits<double>::infinity();
                    }
                } catch (const DataError& e) {
                    st.warnings.push_back("iteration " + std::to_string(it) + ": cv skipped for component " +
                                          std::to_string(k + 1) + ": " + e.what());
                }
            }
        }

        for (int k = 0; k < config.K; ++k) {
            auto& Bk = next.B[static_cast<std::size_t>(k)];
            if (!has_mass(next.pi, patterns, k)) {
                Bk.setZero();
                continue;
            }
            try {
                const StackedProblem prob =
                    build_component_problem(k, resp, next.pi, next, patterns, data, st.penalty, config.coupled);
                const SolverReport rep = solve(prob, config.solver, &Bk);
                if (config.audit) {
                    const double before = objective_value(prob, Bk);
                    if (rep.objective > before + audit_tol * std::max(1.0, std::abs(before)))
                        throw NumericalError("B update increased its objective at iteration " + std::to_string(it));
                }
                if (rep.hit_sweep_cap)
                    st.warnings.push_back("iteration " + std::to_string(it) + ": solver hit sweep cap for component " +
                                          std::to_string(k + 1));
                Bk = rep.B;
            } catch (const EmptyComponentError&) {
                for (int t : patterns.containing(k))
                    if (next.pi(t) > 0.0) {
                        st.pruned.push_back(patterns[t].label());
                        next.pi(t) = 0.0;
                    }
                if (!(next.pi.sum() > 0.0)) throw DegenerateModelError("all components emptied");
                next.pi /= next.pi.sum();
                Bk.setZero();
            }
        }

        const MatrixXd sigma = update_sigma(resp, next, data, config.sigma_jitter, config.diagonal_sigma);
        if (config.audit) {
            const double before = sigma_objective(resp, next, data, next.sigma);
            const double after = sigma_objective(resp, next, data, sigma);
            if (after < before - audit_tol * std::max(1.0, std::abs(before)))
                throw NumericalError("Sigma update decreased its objective at iteration " + std::to_string(it));
        }
        next.sigma = sigma;

        const auto newly = prune_pi(next.pi, patterns, config.prune_threshold);
        if (!newly.empty()) {
            st.pruned.insert(st.pruned.end(), newly.begin(), newly.end());
            // best-so-far is only compared within one support
            best_pll = -std::numeric_limits<double>::infinity();
        }
        for (int k = 0; k < config.K; ++k)
            if (!has_mass(next.pi, patterns, k)) next.B[static_cast<std::size_t>(k)].setZero();
        params = std::move(next);
    }
    st.params = std::move(best);
    return st;
}

}  // namespace

FitResult fit_em(const Dataset& data, const EmConfig& config, const std::optional<ModelParams>& init) {
    data.validate();
    config.validate();
    const PatternSet patterns(config.K);
    if (init && init->K() != config.K) throw ShapeError("initial parameters have a different K");

    const int runs = init ? 1 : config.n_restarts;
    std::vector<std::optional<RunState>> states(static_cast<std::size_t>(runs));
    std::vector<std::string> failures(static_cast<std::size_t>(runs));
    parallel_for(static_cast<std::size_t>(runs), config.workers, [&](std::size_t r) {
        try {
            ModelParams start;
            if (init) {
                start = *init;
            } else {
                Rng rng = make_stream(config.seed, r);
                start = initialize(data, config, rng);
            }
            states[r] = run_em(data, config, std::move(start), patterns);
        } catch (const NumericalError& e) {
            if (init) throw;
            failures[r] = e.what();
        }
    });

    int best = -1;
    double best_pll = -std::numeric_limits<double>::infinity();
    std::vector<double> plls(static_cast<std::size_t>(runs), -std::numeric_limits<double>::infinity());
    for (int r = 0; r < runs; ++r) {
        const auto& s = states[static_cast<std::size_t>(r)];
        if (!s) continue;
        const double pll = log_likelihood(s->params, patterns, data) - penalty_value(s->params, patterns, s->penalty);
        plls[static_cast<std::size_t>(r)] = pll;
        if (pll > best_pll) {
            best_pll = pll;
            best = r;
        }
    }
    if (best < 0) {
        std::string msg = "every restart failed";
        for (const auto& f : failures)
            if (!f.empty()) msg += "; " + f;
        throw NumericalError(msg);
    }

    RunState& s = *states[static_cast<std::size_t>(best)];
    FitResult out;
    out.params = std::move(s.params);
    out.resp = e_step(out.params, patterns, data);
    out.hard = hard_memberships(out.resp, patterns, &out.hard_pattern);
    out.loglik_trace = std::move(s.trace);
    out.loglik = log_likelihood(out.params, patterns, data);
    out.penalized_loglik = best_pll;
    out.n_effective_params = count_effective_params(out.params);
    out.pruned_patterns = std::move(s.pruned);
    out.penalty = std::move(s.penalty);
    out.converged = s.converged;
    out.iterations = s.iterations;
    out.restart = best;
    out.warnings = std::move(s.warnings);
    for (int r = 0; r < runs; ++r)
        if (!failures[static_cast<std::size_t>(r)].empty())
            out.warnings.push_back("restart " + std::to_string(r) + " failed: " + failures[static_cast<std::size_t>(r)]);
    if (data.n() <= patterns.size())
        out.warnings.push_back("n does not exceed the number of overlap patterns");
    return out;
}

}  // namespace gfmmr
