#include <doctest.h>

#include "gfmmr/errors.hpp"
#include "gfmmr/em.hpp"
#include "gfmmr/simulation.hpp"
#include "oracles.hpp"

using namespace gfmmr;

namespace {

ModelParams params_of(std::vector<MatrixXd> B, MatrixXd sigma, VectorXd pi) {
    ModelParams m;
    m.B = std::move(B);
    m.sigma = std::move(sigma);
    m.pi = std::move(pi);
    return m;
}

}  // namespace

TEST_CASE("e_step edge cases") {
    std::mt19937_64 rng(1);
    const Dataset d(oracle::random_matrix(10, 2, rng), oracle::random_matrix(10, 2, rng));

    const auto one = e_step(params_of({oracle::random_matrix(2, 2, rng)}, MatrixXd::Identity(2, 2), VectorXd::Ones(1)), d);
    CHECK(one.Z.isOnes(0.0));

    const MatrixXd B = oracle::random_matrix(2, 2, rng);
    const auto sym = e_step(params_of({B, B}, MatrixXd::Identity(2, 2), VectorXd::Constant(3, 1.0 / 3)), d);
    for (Eigen::Index i = 0; i < 10; ++i) {
        CHECK(sym.Z(i, 0) == doctest::Approx(sym.Z(i, 1)).epsilon(1e-12));
        CHECK(sym.Z.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("symmetric singletons give uniform responsibilities") {
    // identical B_k with pi mass only on singletons: the only symmetric case
    // where every pattern with mass has the same mean
    std::mt19937_64 rng(2);
    const Dataset d(oracle::random_matrix(6, 2, rng), oracle::random_matrix(6, 1, rng));
    const MatrixXd B = oracle::random_matrix(2, 1, rng);
    VectorXd pi = VectorXd::Zero(7);
    pi.head(3).setConstant(1.0 / 3);
    const auto r = e_step(params_of({B, B, B}, MatrixXd::Identity(1, 1), pi), d);
    CHECK((r.Z.leftCols(3).array() - 1.0 / 3).abs().maxCoeff() < 1e-12);
    CHECK(r.Z.rightCols(4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("well separated point belongs to its component") {
    MatrixXd X(1, 1);
    X << 1.0;
    MatrixXd Y(1, 1);
    Y << 10.0;
    const Dataset d(X, Y);
    const auto m = params_of({MatrixXd::Constant(1, 1, 10.0), MatrixXd::Constant(1, 1, -10.0)}, MatrixXd::Identity(1, 1),
                             VectorXd::Constant(3, 1.0 / 3));
    const auto r = e_step(m, d);
    CHECK(r.Z(0, 0) > 0.999);
    CHECK((r.Z - oracle::e_step(X, Y, m.B, m.sigma, m.pi)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("e_step survives extreme residuals") {
    MatrixXd X(1, 1);
    X << 1.0;
    MatrixXd Y(1, 1);
    Y << 1e4;
    const auto r = e_step(params_of({MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 1.0)}, MatrixXd::Identity(1, 1),
                                    VectorXd::Constant(3, 1.0 / 3)),
                          Dataset(X, Y));
    CHECK(r.Z.allFinite());
    CHECK(r.Z(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("update_pi") {
    Responsibilities r;
    r.Z = MatrixXd::Zero(3, 3);
    r.Z.col(0).setOnes();
    CHECK(update_pi(r) == (VectorXd(3) << 1.0, 0.0, 0.0).finished());
    r.Z = MatrixXd::Zero(2, 3);
    r.Z(0, 0) = r.Z(1, 1) = 1.0;
    CHECK(update_pi(r) == (VectorXd(3) << 0.5, 0.5, 0.0).finished());
}

TEST_CASE("update_B_k") {
    std::mt19937_64 rng(3);
    SUBCASE("K=1 reduces to least squares") {
        const Dataset d(oracle::random_matrix(30, 3, rng), oracle::random_matrix(30, 2, rng));
        Responsibilities r;
        r.Z = MatrixXd::Ones(30, 1);
        const auto m = params_of({MatrixXd::Zero(3, 2)}, MatrixXd::Identity(2, 2), VectorXd::Ones(1));
        SolverOptions o;
        o.tol = 1e-12;
        const MatrixXd B = update_B_k(0, r, m.pi, m, d, PenaltyConfig::none(1), false, o);
        CHECK((B - oracle::weighted_ls(d.X, d.Y, VectorXd::Ones(30))).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("lambda above lambda_max gives zero") {
        const Dataset d(oracle::random_matrix(30, 3, rng), oracle::random_matrix(30, 2, rng));
        Responsibilities r;
        r.Z = MatrixXd::Ones(30, 1);
        const auto m = params_of({MatrixXd::Zero(3, 2)}, MatrixXd::Identity(2, 2), VectorXd::Ones(1));
        const auto prob = build_component_problem(0, r, m.pi, m, PatternSet(1), d, PenaltyConfig::none(1), false);
        const double lmax = lambda_max(prob);
        CHECK(update_B_k(0, r, m.pi, m, d, PenaltyConfig::lasso(1, 1.01 * lmax), false).isZero(0.0));
    }
    SUBCASE("overlap row with B_2 fixed recovers B_1") {
        const MatrixXd X = oracle::random_matrix(40, 3, rng);
        const MatrixXd B1 = oracle::random_matrix(3, 2, rng);
        const MatrixXd B2 = oracle::random_matrix(3, 2, rng);
        const Dataset d(X, X * (B1 + B2));
        Responsibilities r;
        r.Z = MatrixXd::Zero(40, 3);
        r.Z.col(2).setOnes();
        const auto m = params_of({MatrixXd::Zero(3, 2), B2}, MatrixXd::Identity(2, 2), (VectorXd(3) << 0, 0, 1).finished());
        CHECK((update_B_k(0, r, m.pi, m, d, PenaltyConfig::none(2), false) - B1).cwiseAbs().maxCoeff() < 1e-3);
        CHECK((update_B_k(0, r, m.pi, m, d, PenaltyConfig::none(2), true) - B1).cwiseAbs().maxCoeff() < 1e-3);
    }
    SUBCASE("no mass is an empty component") {
        const Dataset d(oracle::random_matrix(5, 1, rng), oracle::random_matrix(5, 1, rng));
        Responsibilities r;
        r.Z = MatrixXd::Zero(5, 3);
        r.Z.col(1).setOnes();
        const auto m = params_of({MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)}, MatrixXd::Identity(1, 1),
                                 (VectorXd(3) << 0, 1, 0).finished());
        CHECK_THROWS_AS(update_B_k(0, r, m.pi, m, d, PenaltyConfig::none(2), false), EmptyComponentError);
    }
}

TEST_CASE("update_sigma closed forms") {
    std::mt19937_64 rng(4);
    const MatrixXd X = oracle::random_matrix(20, 2, rng);
    const MatrixXd Y = oracle::random_matrix(20, 3, rng);
    Responsibilities r;
    r.Z = MatrixXd::Ones(20, 1);
    const auto m = params_of({MatrixXd::Zero(2, 3)}, MatrixXd::Identity(3, 3), VectorXd::Ones(1));
    CHECK((update_sigma(r, m, Dataset(X, Y)) - Y.transpose() * Y / 20.0).cwiseAbs().maxCoeff() < 1e-12);

    const auto zero = update_sigma(r, m, Dataset(X, MatrixXd::Zero(20, 3)));
    CHECK(zero.llt().info() == Eigen::Success);
    CHECK(zero.cwiseAbs().maxCoeff() < 1e-6);
    CHECK((zero - MatrixXd(zero.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);

    const auto diag = update_sigma(r, m, Dataset(X, Y), 1e-8, true);
    CHECK((diag - MatrixXd((Y.transpose() * Y / 20.0).diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prune") {
    std::mt19937_64 rng(5);
    const Dataset d(oracle::random_matrix(8, 1, rng), oracle::random_matrix(8, 1, rng));
    auto m = params_of({MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, -0.5)}, MatrixXd::Identity(1, 1),
                       (VectorXd(3) << 0.5, 0.3, 0.2).finished());
    const auto r = e_step(m, d);
    const auto same = prune(m, r, 0.01, d);
    CHECK(same.pruned.empty());
    CHECK(same.params.pi == m.pi);
    CHECK(same.resp.Z == r.Z);

    m.pi << 0.6, 0.395, 0.005;
    const auto cut = prune(m, e_step(m, d), 0.01, d);
    CHECK(cut.pruned == std::vector<std::string>{"12"});
    CHECK(cut.params.pi(2) == 0.0);
    CHECK(cut.params.pi(0) == doctest::Approx(0.6 / 0.995).epsilon(1e-14));
    CHECK(cut.resp.Z.col(2).isZero(0.0));
}

TEST_CASE("hard memberships break ties toward the earlier pattern") {
    Responsibilities r;
    r.Z = MatrixXd::Zero(2, 3);
    r.Z.row(0) << 0.4, 0.2, 0.4;
    r.Z.row(1) << 0.1, 0.2, 0.7;
    std::vector<int> arg;
    const auto h = hard_memberships(r, PatternSet(2), &arg);
    CHECK(arg == std::vector<int>{0, 2});
    CHECK(h(0, 0) == 1);
    CHECK(h(0, 1) == 0);
    CHECK(h(1, 0) == 1);
    CHECK(h(1, 1) == 1);
}

TEST_CASE("effective parameter count") {
    ModelParams a = params_of(std::vector<MatrixXd>(3, MatrixXd::Zero(2, 3)), MatrixXd::Identity(3, 3),
                              VectorXd::Constant(7, 1.0 / 7));
    CHECK(count_effective_params(a) == 9);
    MatrixXd S(2, 2);
    S << 2.0, 0.5, 0.5, 1.0;
    ModelParams b = params_of({MatrixXd::Constant(2, 2, 1.0)}, S, VectorXd::Ones(1));
    CHECK(count_effective_params(b) == 7);
}

TEST_CASE("single noiseless regression is recovered") {
    std::mt19937_64 rng(6);
    const MatrixXd X = oracle::random_matrix(50, 3, rng);
    const MatrixXd B = oracle::random_matrix(3, 2, rng);
    const Dataset d(X, X * B);
    EmConfig c;
    c.K = 1;
    c.penalty = PenaltyConfig::none(1);
    c.n_restarts = 1;
    const auto fit = fit_em(d, c);
    CHECK((fit.params.B[0] - oracle::weighted_ls(X, d.Y, VectorXd::Ones(50))).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("fit_em is deterministic and label equivariant") {
    SimSpec s;
    s.n = 120;
    s.seed = 9;
    s.scenario = Scenario::overlap;
    const auto inst = simulate(s);
    EmConfig c;
    c.n_restarts = 2;
    c.seed = 4;
    c.audit = true;
    const auto a = fit_em(inst.data, c);
    const auto b = fit_em(inst.data, c);
    CHECK(a.loglik_trace == b.loglik_trace);
    CHECK(a.resp.Z == b.resp.Z);

    // relabel a starting point and fit from both
    Rng rng = make_stream(3, 0);
    const ModelParams init = initialize(inst.data, c, rng);
    const PatternSet ps(3);
    const std::vector<int> perm{1, 2, 0};  // new k -> old k
    ModelParams re = init;
    std::vector<int> col(7);
    for (int k = 0; k < 3; ++k) re.B[static_cast<std::size_t>(k)] = init.B[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    for (int t = 0; t < 7; ++t) {
        std::vector<int> old;
        for (int k : ps[t].members()) old.push_back(perm[static_cast<std::size_t>(k)]);
        col[static_cast<std::size_t>(t)] = ps.index_of(OverlapPattern::from_members(old));
        re.pi(t) = init.pi(col[static_cast<std::size_t>(t)]);
    }
    // B_k are updated in label order, so agreement holds at convergence only
    EmConfig one = c;
    one.audit = false;
    one.rel_tol = 1e-13;
    one.max_iter = 5000;
    one.solver.tol = 1e-12;
    const auto f0 = fit_em(inst.data, one, init);
    const auto f1 = fit_em(inst.data, one, re);
    for (int k = 0; k < 3; ++k)
        CHECK((f1.params.B[static_cast<std::size_t>(k)] - f0.params.B[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])])
                  .cwiseAbs()
                  .maxCoeff() < 1e-6);
    for (int t = 0; t < 7; ++t)
        CHECK((f1.resp.Z.col(t) - f0.resp.Z.col(col[static_cast<std::size_t>(t)])).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("singleton-only fit has non-decreasing likelihood") {
    SimSpec s;
    s.n = 150;
    s.seed = 21;
    const auto inst = simulate(s);
    EmConfig c;
    c.scope = PatternScope::singletons;
    c.prune_threshold = 0.0;
    c.n_restarts = 1;
    c.rel_tol = 1e-9;
    c.solver.tol = 1e-12;
    const auto fit = fit_em(inst.data, c);
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
        CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-8 * std::abs(fit.loglik_trace[i - 1]));
    for (int t = 3; t < 7; ++t) CHECK(fit.params.pi(t) == 0.0);
}

TEST_CASE("config validation") {
    EmConfig c;
    c.K = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = EmConfig{};
    c.rel_tol = -1.0;
    CHECK_THROWS(c.validate());
}
