#include "gfmmr/simulation.hpp"

#include <cmath>
#include <numeric>

#include "gfmmr/errors.hpp"

namespace gfmmr {

namespace {

enum Stream : std::uint64_t { kStreamB = 1, kStreamX = 2, kStreamE = 3, kStreamP = 4 };

}  // namespace

void SimSpec::validate() const {
    if (n < 1 || p < 1 || q < 1) throw UsageError("simulation needs n, p, q >= 1");
    if (K < 1 || K > kMaxComponents) throw SizeLimitError("simulation K must be in 1.." + std::to_string(kMaxComponents));
    if (!(std::abs(rho_x) < 1.0) || !(std::abs(rho_e) < 1.0)) throw UsageError("|rho| must be < 1");
    if (!(p1 >= 0.0 && p1 <= 1.0) || !(p2 >= 0.0 && p2 <= 1.0)) throw UsageError("p1 and p2 must be in [0, 1]");
    if (scenario == Scenario::overlap) {
        if (fractions.empty() || static_cast<int>(fractions.size()) > K)
            throw UsageError("overlap fractions must have between 1 and K entries");
        double total = 0.0;
        for (double f : fractions) {
            if (!(f >= 0.0)) throw UsageError("overlap fractions must be nonnegative");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9) throw UsageError("overlap fractions must sum to 1");
    }
}

MatrixXd ar_covariance(int dim, double rho) {
    if (dim < 1) throw UsageError("covariance dimension must be >= 1");
    if (!(std::abs(rho) < 1.0)) throw UsageError("AR covariance needs |rho| < 1");
    MatrixXd S(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) S(i, j) = std::pow(rho, std::abs(i - j));
    return S;
}

MatrixXd generate_sparse_B(int p, int q, double p1, double p2, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution s_draw(p1);
    std::bernoulli_distribution t_draw(p2);
    MatrixXd B(p, q);
    for (int j = 0; j < p; ++j) {
        const bool row_on = t_draw(rng);
        for (int m = 0; m < q; ++m) {
            const double w = normal(rng);
            const bool s = s_draw(rng);
            B(j, m) = (row_on && s) ? w : 0.0;
        }
    }
    return B;
}

MatrixXd mvn_rows(int n, const MatrixXd& cov, Rng& rng) {
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw FactorizationError("covariance is not positive definite");
    const MatrixXd L = llt.matrixL();
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd Z(n, cov.rows());
    for (int i = 0; i < n; ++i)
        for (Eigen::Index m = 0; m < cov.rows(); ++m) Z(i, m) = normal(rng);
    return Z * L.transpose();
}

std::vector<std::vector<int>> SimInstance::true_clusters() const {
    return clusters_from_memberships(true_P);
}

MatrixXd SimInstance::signal() const {
    const Eigen::Index n = data.n();
    MatrixXd S = MatrixXd::Zero(n, data.q());
    for (std::size_t k = 0; k < true_B.size(); ++k) {
        const MatrixXd XB = data.X * true_B[k];
        for (Eigen::Index i = 0; i < n; ++i)
            if (true_P(i, static_cast<Eigen::Index>(k)) != 0) S.row(i) += XB.row(i);
    }
    return S;
}

SimInstance simulate(const SimSpec& spec) {
    spec.validate();
    const PatternSet patterns(spec.K);
    SimInstance out;

    Rng rng_b = make_stream(spec.seed, kStreamB);
    for (int k = 0; k < spec.K; ++k) out.true_B.push_back(generate_sparse_B(spec.p, spec.q, spec.p1, spec.p2, rng_b));

    Rng rng_x = make_stream(spec.seed, kStreamX);
    MatrixXd X = mvn_rows(spec.n, ar_covariance(spec.p, spec.rho_x), rng_x);
    Rng rng_e = make_stream(spec.seed, kStreamE);
    const MatrixXd E = mvn_rows(spec.n, ar_covariance(spec.q, spec.rho_e), rng_e);

    out.true_pattern.resize(static_cast<std::size_t>(spec.n));
    if (spec.scenario == Scenario::partition) {
        // Blocks of n/K rows; the remainder goes to the earlier clusters.
        const int base = spec.n / spec.K;
        const int extra = spec.n % spec.K;
        int row = 0;
        for (int k = 0; k < spec.K; ++k) {
            const int size = base + (k < extra ? 1 : 0);
            for (int r = 0; r < size; ++r) out.true_pattern[static_cast<std::size_t>(row++)] = k;
        }
    } else {
        Rng rng_p = make_stream(spec.seed, kStreamP);
        std::discrete_distribution<int> cardinality(spec.fractions.begin(), spec.fractions.end());
        std::vector<std::vector<int>> by_size(static_cast<std::size_t>(spec.K) + 1);
        for (int s = 1; s <= spec.K; ++s) by_size[static_cast<std::size_t>(s)] = patterns.of_size(s);
        for (int i = 0; i < spec.n; ++i) {
            const auto& pool = by_size[static_cast<std::size_t>(cardinality(rng_p) + 1)];
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            out.true_pattern[static_cast<std::size_t>(i)] = pool[pick(rng_p)];
        }
    }

    out.true_P = MembershipMatrix::Zero(spec.n, spec.K);
    for (int i = 0; i < spec.n; ++i)
        for (int k : patterns[out.true_pattern[static_cast<std::size_t>(i)]].members()) out.true_P(i, k) = 1;

    out.data.X = std::move(X);
    out.data.Y = MatrixXd::Zero(spec.n, spec.q);
    const MatrixXd S = out.signal();
    out.data.Y = S + E;
    out.noise = out.data.Y - S;
    for (int j = 0; j < spec.p; ++j) out.data.predictor_names.push_back("x" + std::to_string(j + 1));
    for (int m = 0; m < spec.q; ++m) out.data.response_names.push_back("y" + std::to_string(m + 1));
    out.data.validate();
    return out;
}

std::string to_string(Scenario s) { return s == Scenario::partition ? "partition" : "overlap"; }

Scenario scenario_from_string(const std::string& s) {
    if (s == "partition" || s == "1") return Scenario::partition;
    if (s == "overlap" || s == "2") return Scenario::overlap;
    throw UsageError("unknown scenario: " + s);
}

}  // namespace gfmmr
