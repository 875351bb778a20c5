#include "gfmmr/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gfmmr/errors.hpp"

namespace gfmmr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_finite(const MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw DataError(std::string(what) + " contains non-finite entries");
}

double symmetry_gap(const MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

}  // namespace

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(MatrixXd X_, MatrixXd Y_) : X(std::move(X_)), Y(std::move(Y_)) { validate(); }

void Dataset::validate() const {
    if (X.rows() < 1) throw ShapeError("dataset needs at least one row");
    if (X.rows() != Y.rows())
        throw ShapeError("X has " + std::to_string(X.rows()) + " rows but Y has " +
                         std::to_string(Y.rows()));
    if (X.cols() < 1 || Y.cols() < 1) throw ShapeError("X and Y need at least one column");
    require_finite(X, "X");
    require_finite(Y, "Y");
    if (!row_ids.empty() && static_cast<Eigen::Index>(row_ids.size()) != X.rows())
        throw ShapeError("row id count does not match row count");
    if (!predictor_names.empty() && static_cast<Eigen::Index>(predictor_names.size()) != X.cols())
        throw ShapeError("predictor name count does not match p");
    if (!response_names.empty() && static_cast<Eigen::Index>(response_names.size()) != Y.cols())
        throw ShapeError("response name count does not match q");
}

Dataset Dataset::select_responses(const std::vector<int>& columns) const {
    Dataset out;
    out.X = X;
    out.Y.resize(Y.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const int c = columns[j];
        if (c < 0 || c >= Y.cols()) throw ShapeError("response column out of range");
        out.Y.col(static_cast<Eigen::Index>(j)) = Y.col(c);
        if (!response_names.empty()) out.response_names.push_back(response_names[static_cast<std::size_t>(c)]);
    }
    out.row_ids = row_ids;
    out.predictor_names = predictor_names;
    out.validate();
    return out;
}

// ------------------------------------------------------------ ModelParams

double ModelParams::pi_of(const PatternSet& patterns, OverlapPattern t) const {
    const int idx = patterns.index_of(t);
    if (idx < 0) throw DataError("pattern " + t.label() + " not in pattern set");
    return pi(idx);
}

double ModelParams::component_mass(const PatternSet& patterns, int k) const {
    double mass = 0.0;
    for (int t : patterns.containing(k)) mass += pi(t);
    return mass;
}

void ModelParams::validate() const {
    if (B.empty()) throw ShapeError("model needs at least one component");
    const Eigen::Index p0 = B.front().rows();
    const Eigen::Index q0 = B.front().cols();
    for (const auto& b : B) {
        if (b.rows() != p0 || b.cols() != q0) throw ShapeError("coefficient matrices differ in shape");
        if (!b.allFinite()) throw NumericalError("coefficient matrix has non-finite entries");
    }
    if (sigma.rows() != q0 || sigma.cols() != q0) throw ShapeError("Sigma must be q x q");
    if (pi.size() != (Eigen::Index{1} << K()) - 1)
        throw ShapeError("pi must have 2^K - 1 entries");
    if ((pi.array() < 0.0).any()) throw DataError("pi has negative entries");
    if (std::abs(pi.sum() - 1.0) > 1e-10) throw DataError("pi does not sum to 1");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if (symmetry_gap(sigma) > 1e-10 * scale) throw FactorizationError("Sigma is not symmetric");
    GaussianKernel check(sigma);
    (void)check;
}

void ModelParams::validate_against(const Dataset& data) const {
    validate();
    if (p() != data.p()) throw ShapeError("coefficient rows do not match predictor count");
    if (q() != data.q()) throw ShapeError("coefficient columns do not match response count");
}

// ---------------------------------------------------------- PenaltyConfig

PenaltyConfig PenaltyConfig::none(int K) {
    PenaltyConfig c;
    c.kind = PenaltyKind::none;
    c.lambda1.assign(static_cast<std::size_t>(K), 0.0);
    return c;
}

PenaltyConfig PenaltyConfig::lasso(std::vector<double> lambda) {
    PenaltyConfig c;
    c.kind = PenaltyKind::lasso;
    c.lambda1 = std::move(lambda);
    return c;
}

PenaltyConfig PenaltyConfig::elastic_net(std::vector<double> l1, std::vector<double> l2) {
    PenaltyConfig c;
    c.kind = PenaltyKind::elastic_net;
    c.lambda1 = std::move(l1);
    c.lambda2 = std::move(l2);
    return c;
}

double PenaltyConfig::l1(int k) const {
    if (kind == PenaltyKind::none) return 0.0;
    return lambda1.at(static_cast<std::size_t>(k));
}

double PenaltyConfig::l2(int k) const {
    if (kind != PenaltyKind::elastic_net) return 0.0;
    return lambda2.at(static_cast<std::size_t>(k));
}

bool PenaltyConfig::is_unpenalized(int predictor) const {
    return std::find(unpenalized.begin(), unpenalized.end(), predictor) != unpenalized.end();
}

void PenaltyConfig::validate(int K) const {
    if (kind != PenaltyKind::none && static_cast<int>(lambda1.size()) != K)
        throw UsageError("penalty needs one lambda per component");
    for (double v : lambda1)
        if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("lambda values must be finite and >= 0");
    if (kind == PenaltyKind::elastic_net) {
        if (static_cast<int>(lambda2.size()) != K) throw UsageError("elastic net needs one lambda2 per component");
        for (double v : lambda2)
            if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("lambda2 values must be finite and >= 0");
    } else if (!lambda2.empty()) {
        throw UsageError("lambda2 is only valid for the elastic_net penalty");
    }
    for (int j : unpenalized)
        if (j < 0) throw UsageError("unpenalized predictor index must be >= 0");
}

std::string to_string(PenaltyKind kind) {
    switch (kind) {
        case PenaltyKind::none: return "none";
        case PenaltyKind::lasso: return "lasso";
        case PenaltyKind::elastic_net: return "elastic_net";
    }
    return "none";
}

PenaltyKind penalty_kind_from_string(const std::string& s) {
    if (s == "none") return PenaltyKind::none;
    if (s == "lasso") return PenaltyKind::lasso;
    if (s == "elastic_net" || s == "enet") return PenaltyKind::elastic_net;
    throw UsageError("unknown penalty kind: " + s);
}

void Responsibilities::validate(double tol) const {
    if ((Z.array() < 0.0).any() || (Z.array() > 1.0 + tol).any())
        throw NumericalError("responsibilities outside [0, 1]");
    for (Eigen::Index i = 0; i < Z.rows(); ++i)
        if (std::abs(Z.row(i).sum() - 1.0) > tol)
            throw NumericalError("responsibility row " + std::to_string(i) + " does not sum to 1");
}

// --------------------------------------------------------- GaussianKernel

GaussianKernel::GaussianKernel(const MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw ShapeError("Sigma must be square");
    if (!sigma.allFinite()) throw FactorizationError("Sigma has non-finite entries");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if (symmetry_gap(sigma) > 1e-10 * scale) throw FactorizationError("Sigma is not symmetric");
    llt_.compute(sigma);
    if (llt_.info() != Eigen::Success) throw FactorizationError("Sigma is not positive-definite");
    const auto diag = llt_.matrixLLT().diagonal();
    if ((diag.array() <= 0.0).any()) throw FactorizationError("Sigma is not positive-definite");
    log_det_ = 2.0 * diag.array().log().sum();
}

double GaussianKernel::logpdf(const Eigen::Ref<const VectorXd>& residual) const {
    const VectorXd w = llt_.matrixL().solve(residual);
    const double q = static_cast<double>(dim());
    return -0.5 * (q * std::log(2.0 * std::numbers::pi) + log_det_ + w.squaredNorm());
}

VectorXd GaussianKernel::logpdf_rows(const MatrixXd& residuals) const {
    // Solve L W^T = R^T for all rows at once.
    const MatrixXd W = llt_.matrixL().solve(residuals.transpose());
    const double q = static_cast<double>(dim());
    const double c = q * std::log(2.0 * std::numbers::pi) + log_det_;
    return (-0.5 * (W.colwise().squaredNorm().array() + c)).matrix().transpose();
}

MatrixXd GaussianKernel::inverse() const {
    return llt_.solve(MatrixXd::Identity(dim(), dim()));
}

// ------------------------------------------------------------- densities

VectorXd pattern_mean(const Eigen::Ref<const VectorXd>& x, OverlapPattern pattern,
                      const std::vector<MatrixXd>& B) {
    if (pattern.span() > static_cast<int>(B.size()))
        throw ShapeError("pattern " + pattern.label() + " refers to a missing component");
    if (B.empty()) throw ShapeError("no coefficient matrices");
    if (B.front().rows() != x.size()) throw ShapeError("x length does not match B rows");
    VectorXd mean = VectorXd::Zero(B.front().cols());
    for (int k : pattern.members()) mean.noalias() += B[static_cast<std::size_t>(k)].transpose() * x;
    return mean;
}

MatrixXd pattern_coefficients(OverlapPattern pattern, const std::vector<MatrixXd>& B) {
    if (pattern.span() > static_cast<int>(B.size()))
        throw ShapeError("pattern " + pattern.label() + " refers to a missing component");
    MatrixXd sum = MatrixXd::Zero(B.front().rows(), B.front().cols());
    for (int k : pattern.members()) sum += B[static_cast<std::size_t>(k)];
    return sum;
}

double mvn_logpdf(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& mean,
                  const MatrixXd& sigma) {
    if (y.size() != mean.size() || y.size() != sigma.rows())
        throw ShapeError("mvn_logpdf dimensions disagree");
    return GaussianKernel(sigma).logpdf(y - mean);
}

double log_sum_exp(const Eigen::Ref<const VectorXd>& v) {
    if (v.size() == 0) return kNegInf;
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

MatrixXd log_joint_densities(const ModelParams& params, const PatternSet& patterns,
                             const Dataset& data) {
    if (patterns.K() != params.K()) throw ShapeError("pattern set does not match K");
    if (params.p() != data.p() || params.q() != data.q())
        throw ShapeError("parameters do not match dataset dimensions");
    if (params.pi.size() != patterns.size()) throw ShapeError("pi length does not match pattern count");
    const GaussianKernel kernel(params.sigma);
    const Eigen::Index n = data.n();
    MatrixXd out(n, patterns.size());
    for (int t = 0; t < patterns.size(); ++t) {
        const double w = params.pi(t);
        if (w <= 0.0) {
            out.col(t).setConstant(kNegInf);
            continue;
        }
        const MatrixXd R = data.Y - data.X * pattern_coefficients(patterns[t], params.B);
        out.col(t) = kernel.logpdf_rows(R).array() + std::log(w);
    }
    return out;
}

double log_likelihood(const ModelParams& params, const PatternSet& patterns, const Dataset& data) {
    const MatrixXd lj = log_joint_densities(params, patterns, data);
    double total = 0.0;
    for (Eigen::Index i = 0; i < lj.rows(); ++i) total += log_sum_exp(lj.row(i).transpose());
    return total;
}

double log_likelihood(const ModelParams& params, const Dataset& data) {
    return log_likelihood(params, enumerate_patterns(params.K()), data);
}

double component_penalty(const MatrixXd& B, const PenaltyConfig& penalty, int k) {
    if (penalty.kind == PenaltyKind::none) return 0.0;
    const double l1 = penalty.l1(k);
    const double l2 = penalty.l2(k);
    double a1 = 0.0;
    double a2 = 0.0;
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        if (penalty.is_unpenalized(static_cast<int>(j))) continue;
        a1 += B.row(j).cwiseAbs().sum();
        a2 += B.row(j).squaredNorm();
    }
    return l1 * a1 + l2 * a2;
}

double penalty_value(const ModelParams& params, const PatternSet& patterns,
                     const PenaltyConfig& penalty) {
    if (penalty.kind == PenaltyKind::none) return 0.0;
    penalty.validate(params.K());
    double total = 0.0;
    for (int k = 0; k < params.K(); ++k)
        total += params.component_mass(patterns, k) *
                 component_penalty(params.B[static_cast<std::size_t>(k)], penalty, k);
    return total;
}

double penalty_value(const ModelParams& params, const PenaltyConfig& penalty) {
    return penalty_value(params, enumerate_patterns(params.K()), penalty);
}

double penalized_log_likelihood(const ModelParams& params, const Dataset& data,
                                const PenaltyConfig& penalty) {
    const PatternSet patterns(params.K());
    return log_likelihood(params, patterns, data) - penalty_value(params, patterns, penalty);
}

}  // namespace gfmmr
