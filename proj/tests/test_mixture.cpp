#include <doctest.h>

#include <cmath>
#include <set>

#include "gfmmr/errors.hpp"
#include "gfmmr/mixture.hpp"
#include "gfmmr/patterns.hpp"
#include "oracles.hpp"

using namespace gfmmr;

TEST_CASE("canonical pattern order for K=3") {
    const PatternSet ps(3);
    CHECK(ps.labels() == std::vector<std::string>{"1", "2", "3", "12", "13", "23", "123"});
    CHECK(PatternSet(1).size() == 1);
    CHECK(PatternSet(4).size() == 15);
    CHECK_THROWS_AS(enumerate_patterns(0), SizeLimitError);
    CHECK_THROWS_AS(enumerate_patterns(13), SizeLimitError);
}

TEST_CASE("pattern sets match recursive enumeration") {
    for (int K = 1; K <= 8; ++K) {
        const PatternSet ps(K);
        const auto ref = oracle::subsets(K);
        REQUIRE(ps.size() == (1 << K) - 1);
        REQUIRE(static_cast<std::size_t>(ps.size()) == ref.size());
        std::set<std::uint32_t> masks;
        for (int t = 0; t < ps.size(); ++t) {
            CHECK(ps[t].members() == ref[static_cast<std::size_t>(t)]);
            CHECK(ps.index_of(ps[t]) == t);
            masks.insert(ps[t].mask());
        }
        CHECK(masks.size() == ref.size());
        for (int k = 0; k < K; ++k) CHECK(ps.containing(k).size() == static_cast<std::size_t>(1 << (K - 1)));
    }
}

TEST_CASE("pattern_mean sums member contributions") {
    std::vector<MatrixXd> B{MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 2.0), MatrixXd::Constant(1, 1, 3.0)};
    VectorXd x(1);
    x << 2.0;
    CHECK(pattern_mean(x, OverlapPattern(0b111), B)(0) == doctest::Approx(12.0));
    CHECK(pattern_mean(x, OverlapPattern(0b001), B)(0) == 2.0);
    std::vector<MatrixXd> C{MatrixXd::Constant(2, 2, 1.5), MatrixXd::Constant(2, 2, -1.5)};
    VectorXd x2(2);
    x2 << 0.3, -0.7;
    CHECK(pattern_mean(x2, OverlapPattern(0b11), C).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mvn_logpdf closed forms") {
    VectorXd y(2), m(2);
    y << 0.4, -1.0;
    m = y;
    CHECK(mvn_logpdf(y, m, MatrixXd::Identity(2, 2)) == doctest::Approx(-std::log(2 * oracle::kPi)).epsilon(1e-14));
    VectorXd y1(1), m1(1);
    y1 << 2.0;
    m1 << 0.0;
    MatrixXd s1(1, 1);
    s1 << 4.0;
    CHECK(mvn_logpdf(y1, m1, s1) == doctest::Approx(-0.5 * std::log(8 * oracle::kPi) - 0.5).epsilon(1e-14));

    VectorXd y3(3), m3 = VectorXd::Zero(3);
    y3 << 0.5, -1.2, 2.0;
    VectorXd d(3);
    d << 0.5, 2.0, 3.0;
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) sum += std::log(oracle::density(y3.segment(c, 1), m3.segment(c, 1), d.segment(c, 1).asDiagonal()));
    CHECK(mvn_logpdf(y3, m3, d.asDiagonal()) == doctest::Approx(sum).epsilon(1e-12));

    MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(mvn_logpdf(y, m, bad), FactorizationError);
}

TEST_CASE("univariate density integrates to one") {
    VectorXd m(1);
    m << 0.3;
    MatrixXd s(1, 1);
    s << 1.7;
    const double h = 1e-3;
    double total = 0.0;
    for (double v = -15.0; v <= 15.0; v += h) {
        VectorXd y(1);
        y << v;
        total += std::exp(mvn_logpdf(y, m, s)) * h;
    }
    CHECK(std::abs(total - 1.0) < 1e-4);
}

namespace {

struct Instance {
    Dataset data;
    ModelParams params;
};

Instance random_instance(std::mt19937_64& rng, int n, int p, int q, int K) {
    Instance in;
    in.data = Dataset(oracle::random_matrix(n, p, rng), oracle::random_matrix(n, q, rng, 2.0));
    for (int k = 0; k < K; ++k) in.params.B.push_back(oracle::random_matrix(p, q, rng, 0.7));
    in.params.sigma = oracle::random_spd(q, rng);
    in.params.pi = oracle::random_simplex((1 << K) - 1, rng);
    return in;
}

}  // namespace

TEST_CASE("log_likelihood matches brute-force enumeration") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const int K = 1 + rep % 3;
        auto in = random_instance(rng, 3 + rep, 2, 1 + rep % 3, K);
        const double ref = oracle::log_likelihood(in.data.X, in.data.Y, in.params.B, in.params.sigma, in.params.pi);
        CHECK(log_likelihood(in.params, in.data) == doctest::Approx(ref).epsilon(1e-11));
    }
}

TEST_CASE("mixture collapses when all components are equal") {
    std::mt19937_64 rng(5);
    auto in = random_instance(rng, 12, 3, 2, 1);
    // pattern {1,2} would double the mean, so only singletons carry mass
    ModelParams two = in.params;
    two.B.push_back(in.params.B[0]);
    two.pi = VectorXd::Zero(3);
    two.pi << 0.25, 0.75, 0.0;
    CHECK(log_likelihood(two, in.data) == doctest::Approx(log_likelihood(in.params, in.data)).epsilon(1e-12));

    double direct = 0.0;
    for (Eigen::Index i = 0; i < in.data.n(); ++i)
        direct += mvn_logpdf(in.data.Y.row(i).transpose(), in.params.B[0].transpose() * in.data.X.row(i).transpose(),
                             in.params.sigma);
    CHECK(log_likelihood(in.params, in.data) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("log_likelihood is invariant to relabelling components") {
    std::mt19937_64 rng(8);
    auto in = random_instance(rng, 15, 3, 2, 3);
    const PatternSet ps(3);
    const std::vector<int> perm{2, 0, 1};  // new k -> old k
    ModelParams re = in.params;
    for (int k = 0; k < 3; ++k) re.B[static_cast<std::size_t>(k)] = in.params.B[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    for (int t = 0; t < ps.size(); ++t) {
        std::vector<int> old_members;
        for (int k : ps[t].members()) old_members.push_back(perm[static_cast<std::size_t>(k)]);
        re.pi(t) = in.params.pi(ps.index_of(OverlapPattern::from_members(old_members)));
    }
    CHECK(log_likelihood(re, in.data) == doctest::Approx(log_likelihood(in.params, in.data)).epsilon(1e-12));
}

TEST_CASE("penalty_value weights by pattern mass") {
    ModelParams m;
    m.B = {MatrixXd::Zero(2, 1), MatrixXd::Zero(2, 1)};
    m.B[0] << 1.0, -2.0;
    m.sigma = MatrixXd::Identity(1, 1);
    m.pi = VectorXd(3);
    m.pi << 0.5, 0.3, 0.2;
    CHECK(penalty_value(m, PenaltyConfig::lasso({2.0, 5.0})) == doctest::Approx(4.2));
    CHECK(penalty_value(m, PenaltyConfig::lasso({0.0, 0.0})) == 0.0);
    CHECK(penalty_value(m, PenaltyConfig::lasso({4.0, 10.0})) == doctest::Approx(8.4));
    m.B[0].setZero();
    CHECK(penalty_value(m, PenaltyConfig::lasso({2.0, 5.0})) == 0.0);
}

TEST_CASE("penalized likelihood reduces to likelihood without penalty") {
    std::mt19937_64 rng(3);
    auto in = random_instance(rng, 10, 2, 2, 2);
    CHECK(penalized_log_likelihood(in.params, in.data, PenaltyConfig::none(2)) == log_likelihood(in.params, in.data));
}

TEST_CASE("dataset validation") {
    CHECK_THROWS_AS(Dataset(MatrixXd::Zero(3, 2), MatrixXd::Zero(4, 1)), ShapeError);
    MatrixXd X = MatrixXd::Zero(3, 2);
    X(1, 1) = std::nan("");
    CHECK_THROWS_AS(Dataset(X, MatrixXd::Zero(3, 1)), DataError);
}
