#include "gfmmr/plaid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gfmmr/errors.hpp"
#include "gfmmr/rng.hpp"

namespace gfmmr {

namespace {

constexpr std::uint64_t kPlaidStream = 0x91a1d;

// Half-width of the relaxed membership band at inner iteration s.
double relax_step(int s, const PlaidConfig& c) {
    const double T = c.T_frac * c.S;
    return std::min(0.5, static_cast<double>(s) / (2.0 * (c.S - T)));
}

MatrixXd layer_fitted(const PlaidLayer& layer, const MatrixXd& X) {
    MatrixXd F = X * layer.B;
    return F.array().colwise() * layer.P.array();
}

// argmin_B 1/2 sum_i w_i ||Z_i - B^T x_i||^2 + sum_m lambda_m ||b_m||_1, warm-started.
MatrixXd weighted_layer_fit(const MatrixXd& X, const MatrixXd& Z, const VectorXd& w, int k,
                            const PlaidConfig& c, const MatrixXd& warm) {
    if (!(w.sum() > 1e-12)) return MatrixXd::Zero(X.cols(), Z.cols());
    StackedProblem prob;
    prob.X = X;
    prob.Ystar = Z;
    prob.w = w;
    VectorXd lam(Z.cols());
    for (Eigen::Index m = 0; m < Z.cols(); ++m) lam(m) = c.lambda_of(k, m);
    prob.column_lambda1 = lam;
    return solve_separate_lasso(prob, c.solver, &warm).B;
}

bool layer_empty(const PlaidLayer& layer) {
    return !(layer.P.sum() > 0.0) || layer.B.cwiseAbs().maxCoeff() <= 1e-12;
}

VectorXd initial_memberships(Eigen::Index n, std::uint64_t seed, int k) {
    Rng rng = make_stream(seed, kPlaidStream + static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd P(n);
    for (Eigen::Index i = 0; i < n; ++i) P(i) = u(rng);
    return P;
}

PlaidFit finish(std::vector<PlaidLayer> layers, const Dataset& data, const PlaidConfig& c) {
    PlaidFit fit;
    MatrixXd R = data.Y;
    for (const auto& l : layers) R -= layer_fitted(l, data.X);
    fit.residual_sse = R.squaredNorm();
    fit.layers = std::move(layers);
    fit.Q_value = plaid_objective(fit.layers, data, c);
    return fit;
}

}  // namespace

VectorXd plaid_prune(const MatrixXd& Z, const MatrixXd& X, const MatrixXd& B, double tau) {
    const MatrixXd R = Z - X * B;
    VectorXd P(Z.rows());
    for (Eigen::Index i = 0; i < Z.rows(); ++i)
        P(i) = R.row(i).squaredNorm() <= tau * Z.row(i).squaredNorm() ? 1.0 : 0.0;
    return P;
}

void PlaidConfig::validate(Eigen::Index q) const {
    if (K < 1) throw UsageError("plaid needs K >= 1");
    if (S < 1) throw UsageError("plaid needs S >= 1");
    const double T = T_frac * S;
    if (!(T > 0.0 && T < S)) throw UsageError("plaid needs 0 < T_frac * S < S");
    if (!(tau > 0.0 && tau < 1.0)) throw UsageError("plaid tau must be in (0, 1)");
    if (R < 0) throw UsageError("plaid R must be >= 0");
    if (!(lambda >= 0.0)) throw UsageError("plaid lambda must be >= 0");
    if (lambda_jk) {
        if (lambda_jk->rows() != K || lambda_jk->cols() != q)
            throw ShapeError("plaid lambda_jk must be K x q");
        if (!(lambda_jk->array() >= 0.0).all()) throw UsageError("plaid lambda_jk must be >= 0");
    }
}

double PlaidConfig::lambda_of(int k, Eigen::Index m) const {
    return lambda_jk ? (*lambda_jk)(k, m) : lambda;
}

std::vector<std::vector<int>> PlaidFit::clusters() const {
    std::vector<std::vector<int>> out;
    for (const auto& l : layers) {
        std::vector<int> rows;
        for (Eigen::Index i = 0; i < l.P.size(); ++i)
            if (l.P(i) > 0.5) rows.push_back(static_cast<int>(i));
        out.push_back(std::move(rows));
    }
    return out;
}

double plaid_objective(const std::vector<PlaidLayer>& layers, const Dataset& data, const PlaidConfig& config) {
    MatrixXd R = data.Y;
    double pen = 0.0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.B.rows() != data.p() || l.B.cols() != data.q() || l.P.size() != data.n())
            throw ShapeError("plaid layer does not match the data");
        R -= layer_fitted(l, data.X);
        for (Eigen::Index m = 0; m < l.B.cols(); ++m)
            pen += config.lambda_of(static_cast<int>(k), m) * l.B.col(m).lpNorm<1>();
    }
    return 0.5 * R.squaredNorm() + pen;
}

PlaidFit plaid_fit_sequential(const Dataset& data, const PlaidConfig& config) {
    data.validate();
    config.validate(data.q());
    const MatrixXd& X = data.X;
    std::vector<PlaidLayer> accepted;
    MatrixXd Z = data.Y;

    for (int k = 0; k < config.K; ++k) {
        PlaidLayer layer;
        layer.P = initial_memberships(data.n(), config.seed, k);
        layer.B = MatrixXd::Zero(data.p(), data.q());
        for (int s = 1; s <= config.S; ++s) {
            layer.B = weighted_layer_fit(X, Z, layer.P, k, config, layer.B);
            const MatrixXd R = Z - X * layer.B;
            const double h = relax_step(s, config);
            for (Eigen::Index i = 0; i < data.n(); ++i)
                layer.P(i) = R.row(i).squaredNorm() <= Z.row(i).squaredNorm() ? 0.5 + h : 0.5 - h;
        }
        layer.P = plaid_prune(Z, X, layer.B, config.tau);
        layer.B = weighted_layer_fit(X, Z, layer.P, k, config, layer.B);
        if (layer_empty(layer)) break;
        Z -= layer_fitted(layer, X);
        accepted.push_back(std::move(layer));
    }

    std::vector<double> trace;
    if (!accepted.empty()) {
        double q_prev = plaid_objective(accepted, data, config);
        trace.push_back(q_prev);
        for (int r = 0; r < config.R; ++r) {
            for (std::size_t k = 0; k < accepted.size(); ++k) {
                MatrixXd Rk = data.Y;
                for (std::size_t l = 0; l < accepted.size(); ++l)
                    if (l != k) Rk -= layer_fitted(accepted[l], X);
                accepted[k].B =
                    weighted_layer_fit(X, Rk, accepted[k].P, static_cast<int>(k), config, accepted[k].B);
            }
            const double q_now = plaid_objective(accepted, data, config);
            if (q_now > q_prev + 1e-9 * std::max(1.0, std::abs(q_prev)))
                throw NumericalError("plaid backfitting increased Q in pass " + std::to_string(r + 1));
            trace.push_back(q_now);
            q_prev = q_now;
        }
    }
    PlaidFit fit = finish(std::move(accepted), data, config);
    fit.backfit_trace = std::move(trace);
    return fit;
}

PlaidFit plaid_fit_joint(const Dataset& data, const PlaidConfig& config) {
    data.validate();
    config.validate(data.q());
    const MatrixXd& X = data.X;
    const auto K = static_cast<std::size_t>(config.K);
    std::vector<PlaidLayer> layers(K);
    for (std::size_t k = 0; k < K; ++k) {
        layers[k].P = initial_memberships(data.n(), config.seed, static_cast<int>(k));
        layers[k].B = MatrixXd::Zero(data.p(), data.q());
    }
    auto residual_without = [&](std::size_t k) {
        MatrixXd Rk = data.Y;
        for (std::size_t l = 0; l < K; ++l)
            if (l != k) Rk -= layer_fitted(layers[l], X);
        return Rk;
    };

    for (int s = 1; s <= config.S; ++s) {
        const double h = relax_step(s, config);
        for (std::size_t k = 0; k < K; ++k) {
            const MatrixXd Zk = residual_without(k);
            auto& layer = layers[k];
            layer.B = weighted_layer_fit(X, Zk, layer.P, static_cast<int>(k), config, layer.B);
            const MatrixXd R = Zk - X * layer.B;
            for (Eigen::Index i = 0; i < data.n(); ++i)
                layer.P(i) = R.row(i).squaredNorm() <= config.tau * Zk.row(i).squaredNorm() ? 0.5 + h : 0.5 - h;
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        const MatrixXd Zk = residual_without(k);
        auto& layer = layers[k];
        layer.P = plaid_prune(Zk, X, layer.B, config.tau);
        layer.B = weighted_layer_fit(X, Zk, layer.P, static_cast<int>(k), config, layer.B);
        if (layer_empty(layer)) {
            layer.P.setZero();
            layer.B.setZero();
        }
    }
    return finish(std::move(layers), data, config);
}

}  // namespace gfmmr
