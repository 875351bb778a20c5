#include "gfmmr/sparse_regression.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gfmmr/errors.hpp"

namespace gfmmr {

namespace {

double soft_threshold(double u, double lambda) {
    if (u > lambda) return u - lambda;
    if (u < -lambda) return u + lambda;
    return 0.0;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Unpenalized-block least squares used to anchor lambda_max.
MatrixXd unpenalized_fit(const GramStats& s, const StackedProblem& shape) {
    MatrixXd B = MatrixXd::Zero(shape.p(), shape.q());
    const auto& u = shape.unpenalized_cols;
    if (u.empty()) return B;
    const Eigen::Index nu = static_cast<Eigen::Index>(u.size());
    MatrixXd Guu(nu, nu);
    MatrixXd Cu(nu, shape.q());
    for (Eigen::Index a = 0; a < nu; ++a) {
        Cu.row(a) = s.C.row(u[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nu; ++b)
            Guu(a, b) = s.G(u[static_cast<std::size_t>(a)], u[static_cast<std::size_t>(b)]);
    }
    const MatrixXd Bu = Guu.completeOrthogonalDecomposition().solve(Cu);
    for (Eigen::Index a = 0; a < nu; ++a) B.row(u[static_cast<std::size_t>(a)]) = Bu.row(a);
    return B;
}

void check_warm_start(const MatrixXd* warm, const StackedProblem& shape) {
    if (warm && (warm->rows() != shape.p() || warm->cols() != shape.q()))
        throw ShapeError("warm start has wrong shape");
}

}  // namespace

double StackedProblem::lambda1_for(Eigen::Index column) const {
    if (column_lambda1) return (*column_lambda1)(column);
    return lambda1;
}

bool StackedProblem::penalized(Eigen::Index predictor) const {
    return std::find(unpenalized_cols.begin(), unpenalized_cols.end(), static_cast<int>(predictor)) ==
           unpenalized_cols.end();
}

void StackedProblem::validate() const {
    if (X.rows() != Ystar.rows() || X.rows() != w.size())
        throw ShapeError("stacked problem row counts disagree");
    if (X.cols() < 1 || Ystar.cols() < 1) throw ShapeError("stacked problem needs p, q >= 1");
    if (!X.allFinite() || !Ystar.allFinite() || !w.allFinite())
        throw DataError("stacked problem has non-finite inputs");
    if ((w.array() < 0.0).any()) throw DataError("negative observation weight");
    if (!(w.array() > 0.0).any()) throw DataError("all observation weights are zero");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw DataError("lambda values must be >= 0");
    if (column_lambda1) {
        if (column_lambda1->size() != q()) throw ShapeError("column lambda length must equal q");
        if ((column_lambda1->array() < 0.0).any()) throw DataError("column lambdas must be >= 0");
    }
    for (int j : unpenalized_cols)
        if (j < 0 || j >= X.cols()) throw ShapeError("unpenalized column out of range");
    if (sigma_inv) {
        const MatrixXd& O = *sigma_inv;
        if (O.rows() != q() || O.cols() != q()) throw ShapeError("sigma_inv must be q x q");
        if (!O.allFinite()) throw FactorizationError("sigma_inv has non-finite entries");
        const double scale = std::max(1.0, O.cwiseAbs().maxCoeff());
        if ((O - O.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw FactorizationError("sigma_inv is not symmetric");
        Eigen::LLT<MatrixXd> llt(O);
        if (llt.info() != Eigen::Success) throw FactorizationError("sigma_inv is not positive-definite");
    }
}

GramStats GramStats::from(const StackedProblem& problem) {
    GramStats s;
    const MatrixXd WX = problem.X.array().colwise() * problem.w.array();
    s.G = problem.X.transpose() * WX;
    s.C = WX.transpose() * problem.Ystar;
    const MatrixXd WY = problem.Ystar.array().colwise() * problem.w.array();
    s.YtWY = problem.Ystar.transpose() * WY;
    s.total_weight = problem.w.sum();
    return s;
}

GramStats GramStats::from_rows(const StackedProblem& problem, const std::vector<Eigen::Index>& rows) {
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    MatrixXd X(m, problem.p());
    MatrixXd Y(m, problem.q());
    VectorXd w(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        X.row(r) = problem.X.row(i);
        Y.row(r) = problem.Ystar.row(i);
        w(r) = problem.w(i);
    }
    GramStats s;
    const MatrixXd WX = X.array().colwise() * w.array();
    s.G = X.transpose() * WX;
    s.C = WX.transpose() * Y;
    const MatrixXd WY = Y.array().colwise() * w.array();
    s.YtWY = Y.transpose() * WY;
    s.total_weight = w.sum();
    return s;
}

GramStats& GramStats::operator-=(const GramStats& other) {
    G -= other.G;
    C -= other.C;
    YtWY -= other.YtWY;
    total_weight -= other.total_weight;
    return *this;
}

// ------------------------------------------------------------ separate

namespace {

double separate_objective(const GramStats& s, const StackedProblem& shape, const MatrixXd& B) {
    double obj = 0.0;
    for (Eigen::Index m = 0; m < shape.q(); ++m) {
        const auto b = B.col(m);
        obj += 0.5 * (b.dot(s.G * b) - 2.0 * s.C.col(m).dot(b) + s.YtWY(m, m));
        const double l1 = shape.lambda1_for(m);
        for (Eigen::Index j = 0; j < shape.p(); ++j) {
            if (!shape.penalized(j)) continue;
            obj += l1 * std::abs(b(j)) + shape.lambda2 * b(j) * b(j);
        }
    }
    return obj;
}

double coupled_objective(const GramStats& s, const StackedProblem& shape, const MatrixXd& B) {
    const MatrixXd& O = *shape.sigma_inv;
    double obj = (s.YtWY * O).trace() - 2.0 * (B.transpose() * s.C * O).trace() +
                 (B.transpose() * s.G * B * O).trace();
    for (Eigen::Index j = 0; j < shape.p(); ++j)
        if (shape.penalized(j)) obj += 2.0 * shape.lambda1 * B.row(j).cwiseAbs().sum();
    return obj;
}

}  // namespace

SolverReport solve_separate_gram(const GramStats& s, const StackedProblem& shape,
                                 const SolverOptions& opts, const MatrixXd* warm_start) {
    if (shape.sigma_inv) throw UsageError("separate solver does not take sigma_inv");
    check_warm_start(warm_start, shape);
    const Eigen::Index p = shape.p();
    const Eigen::Index q = shape.q();
    SolverReport rep;
    rep.B = warm_start ? *warm_start : MatrixXd::Zero(p, q);

    VectorXd curvature(p);
    std::vector<bool> pen(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        pen[static_cast<std::size_t>(j)] = shape.penalized(j);
        curvature(j) = s.G(j, j) + (pen[static_cast<std::size_t>(j)] ? 2.0 * shape.lambda2 : 0.0);
    }

    int total_sweeps = 0;
    for (Eigen::Index m = 0; m < q; ++m) {
        auto b = rep.B.col(m);
        VectorXd Gb = s.G * b;
        const double l1 = shape.lambda1_for(m);

        auto coordinate = [&](Eigen::Index j) {
            const double a = curvature(j);
            const double old = b(j);
            if (a <= 0.0) {
                if (old != 0.0) {
                    Gb.noalias() -= s.G.col(j) * old;
                    b(j) = 0.0;
                }
                return 0.0;
            }
            const double u = s.C(j, m) - Gb(j) + s.G(j, j) * old;
            const double next = soft_threshold(u, pen[static_cast<std::size_t>(j)] ? l1 : 0.0) / a;
            const double delta = next - old;
            if (delta != 0.0) {
                Gb.noalias() += s.G.col(j) * delta;
                b(j) = next;
            }
            return std::max(1.0, a) * std::abs(delta);
        };

        auto column_objective = [&]() {
            double v = 0.5 * (b.dot(Gb) - 2.0 * s.C.col(m).dot(b) + s.YtWY(m, m));
            for (Eigen::Index j = 0; j < p; ++j)
                if (pen[static_cast<std::size_t>(j)]) v += l1 * std::abs(b(j)) + shape.lambda2 * b(j) * b(j);
            return v;
        };

        double prev_obj = opts.check_monotone ? column_objective() : 0.0;
        auto sweep = [&](bool full) {
            double max_change = 0.0;
            for (Eigen::Index j = 0; j < p; ++j) {
                if (!full && b(j) == 0.0) continue;
                max_change = std::max(max_change, coordinate(j));
            }
            ++total_sweeps;
            if (opts.check_monotone) {
                const double obj = column_objective();
                if (obj > prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)))
                    throw NumericalError("coordinate descent objective increased");
                prev_obj = obj;
            }
            return max_change;
        };

        int sweeps = 0;
        bool converged = false;
        while (sweeps < opts.max_sweeps) {
            const double d = sweep(true);
            ++sweeps;
            if (d < opts.tol) {
                converged = true;
                break;
            }
            for (int a = 1; a < opts.full_sweep_every && sweeps < opts.max_sweeps; ++a) {
                const double da = sweep(false);
                ++sweeps;
                if (da < opts.tol) break;
            }
        }
        if (!converged) rep.hit_sweep_cap = true;
        rep.iterations = std::max(rep.iterations, sweeps);
    }
    (void)total_sweeps;
    rep.objective = separate_objective(s, shape, rep.B);
    return rep;
}

SolverReport solve_coupled_gram(const GramStats& s, const StackedProblem& shape,
                                const SolverOptions& opts, const MatrixXd* warm_start) {
    if (!shape.sigma_inv) throw UsageError("coupled solver requires sigma_inv");
    if (shape.lambda2 != 0.0) throw UsageError("elastic net is only available in the separate solver");
    if (shape.column_lambda1) throw UsageError("per-column lambda is only available in the separate solver");
    check_warm_start(warm_start, shape);
    const MatrixXd& O = *shape.sigma_inv;
    const Eigen::Index p = shape.p();
    const Eigen::Index q = shape.q();
    SolverReport rep;
    rep.B = warm_start ? *warm_start : MatrixXd::Zero(p, q);
    MatrixXd& B = rep.B;
    MatrixXd M = s.G * B;
    const MatrixXd CO = s.C * O;
    std::vector<bool> pen(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) pen[static_cast<std::size_t>(j)] = shape.penalized(j);

    auto coordinate = [&](Eigen::Index j, Eigen::Index m) {
        const double a = s.G(j, j) * O(m, m);
        const double old = B(j, m);
        if (a <= 0.0) {
            if (old != 0.0) {
                M.col(m).noalias() -= s.G.col(j) * old;
                B(j, m) = 0.0;
            }
            return 0.0;
        }
        const double u = CO(j, m) - M.row(j).dot(O.col(m)) + a * old;
        const double next = soft_threshold(u, pen[static_cast<std::size_t>(j)] ? shape.lambda1 : 0.0) / a;
        const double delta = next - old;
        if (delta != 0.0) {
            M.col(m).noalias() += s.G.col(j) * delta;
            B(j, m) = next;
        }
        return std::max(1.0, a) * std::abs(delta);
    };

    double prev_obj = opts.check_monotone ? coupled_objective(s, shape, B) : 0.0;
    auto sweep = [&](bool full) {
        double max_change = 0.0;
        for (Eigen::Index m = 0; m < q; ++m)
            for (Eigen::Index j = 0; j < p; ++j) {
                if (!full && B(j, m) == 0.0) continue;
                max_change = std::max(max_change, coordinate(j, m));
            }
        if (opts.check_monotone) {
            const double obj = coupled_objective(s, shape, B);
            if (obj > prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)))
                throw NumericalError("coordinate descent objective increased");
            prev_obj = obj;
        }
        return max_change;
    };

    int sweeps = 0;
    bool converged = false;
    while (sweeps < opts.max_sweeps) {
        const double d = sweep(true);
        ++sweeps;
        if (d < opts.tol) {
            converged = true;
            break;
        }
        for (int a = 1; a < opts.full_sweep_every && sweeps < opts.max_sweeps; ++a) {
            const double da = sweep(false);
            ++sweeps;
            if (da < opts.tol) break;
        }
    }
    rep.iterations = sweeps;
    rep.hit_sweep_cap = !converged;
    rep.objective = coupled_objective(s, shape, B);
    return rep;
}

namespace {

double kkt_from_gram(const GramStats& s, const StackedProblem& shape, const MatrixXd& B) {
    MatrixXd grad;
    if (shape.sigma_inv) {
        grad = (s.G * B - s.C) * (*shape.sigma_inv);
    } else {
        grad = s.G * B - s.C;
        for (Eigen::Index j = 0; j < shape.p(); ++j)
            if (shape.penalized(j)) grad.row(j) += 2.0 * shape.lambda2 * B.row(j);
    }
    double worst = 0.0;
    for (Eigen::Index m = 0; m < shape.q(); ++m) {
        const double lambda = shape.sigma_inv ? shape.lambda1 : shape.lambda1_for(m);
        for (Eigen::Index j = 0; j < shape.p(); ++j) {
            const double g = grad(j, m);
            const double b = B(j, m);
            double v;
            if (!shape.penalized(j)) v = std::abs(g);
            else if (b != 0.0) v = std::abs(g + lambda * sign(b));
            else v = std::max(std::abs(g) - lambda, 0.0);
            worst = std::max(worst, v);
        }
    }
    return worst;
}

}  // namespace

SolverReport solve_separate_lasso(const StackedProblem& problem, const SolverOptions& opts,
                                  const MatrixXd* warm_start) {
    problem.validate();
    if (problem.sigma_inv) throw UsageError("solve_separate_lasso: sigma_inv must be absent");
    const GramStats s = GramStats::from(problem);
    SolverReport rep = solve_separate_gram(s, problem, opts, warm_start);
    rep.max_kkt_violation = kkt_from_gram(s, problem, rep.B);
    return rep;
}

SolverReport solve_coupled_lasso(const StackedProblem& problem, const SolverOptions& opts,
                                 const MatrixXd* warm_start) {
    problem.validate();
    if (!problem.sigma_inv) throw UsageError("solve_coupled_lasso: sigma_inv is required");
    const GramStats s = GramStats::from(problem);
    SolverReport rep = solve_coupled_gram(s, problem, opts, warm_start);
    rep.max_kkt_violation = kkt_from_gram(s, problem, rep.B);
    return rep;
}

SolverReport solve(const StackedProblem& problem, const SolverOptions& opts, const MatrixXd* warm_start) {
    return problem.sigma_inv ? solve_coupled_lasso(problem, opts, warm_start)
                             : solve_separate_lasso(problem, opts, warm_start);
}

double kkt_violation(const StackedProblem& problem, const MatrixXd& B) {
    if (B.rows() != problem.p() || B.cols() != problem.q()) throw ShapeError("B has wrong shape");
    return kkt_from_gram(GramStats::from(problem), problem, B);
}

double lambda_max(const StackedProblem& problem) {
    problem.validate();
    const GramStats s = GramStats::from(problem);
    const MatrixXd Bu = unpenalized_fit(s, problem);
    MatrixXd grad = s.C - s.G * Bu;
    if (problem.sigma_inv) grad = grad * (*problem.sigma_inv);
    double lmax = 0.0;
    for (Eigen::Index j = 0; j < problem.p(); ++j)
        if (problem.penalized(j)) lmax = std::max(lmax, grad.row(j).cwiseAbs().maxCoeff());
    return lmax;
}

double objective_value(const StackedProblem& problem, const MatrixXd& B) {
    const GramStats s = GramStats::from(problem);
    return problem.sigma_inv ? coupled_objective(s, problem, B) : separate_objective(s, problem, B);
}

double prediction_error(const StackedProblem& problem, const MatrixXd& B,
                        const std::vector<Eigen::Index>& rows) {
    double err = 0.0;
    for (Eigen::Index i : rows) {
        const VectorXd r = problem.Ystar.row(i).transpose() - B.transpose() * problem.X.row(i).transpose();
        const double quad = problem.sigma_inv ? r.dot((*problem.sigma_inv) * r) : r.squaredNorm();
        err += problem.w(i) * quad;
    }
    return err;
}

}  // namespace gfmmr
