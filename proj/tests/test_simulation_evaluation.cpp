#include <doctest.h>

#include <algorithm>

#include "gfmmr/errors.hpp"
#include "gfmmr/evaluation.hpp"
#include "gfmmr/simulation.hpp"
#include "oracles.hpp"

using namespace gfmmr;

TEST_CASE("ar covariance") {
    CHECK(ar_covariance(4, 0.0) == MatrixXd::Identity(4, 4));
    CHECK(ar_covariance(3, 0.5)(0, 2) == 0.25);
    CHECK_THROWS_AS(ar_covariance(3, 1.0), UsageError);
}

TEST_CASE("sparse coefficient generator") {
    Rng rng = make_stream(1, 1);
    CHECK(generate_sparse_B(15, 3, 0.5, 0.0, rng).isZero(0.0));
    const MatrixXd dense = generate_sparse_B(15, 3, 1.0, 1.0, rng);
    CHECK((dense.array() != 0.0).all());
}

TEST_CASE("default instance shapes and reconstruction") {
    SimSpec s;
    s.seed = 5;
    const auto inst = simulate(s);
    CHECK(inst.data.X.rows() == 150);
    CHECK(inst.data.X.cols() == 15);
    CHECK(inst.data.Y.cols() == 3);
    CHECK((inst.true_P.rowwise().sum().array() == 1).all());
    CHECK(inst.data.Y - inst.signal() == inst.noise);
    const auto again = simulate(s);
    CHECK(again.data.X == inst.data.X);
    CHECK(again.data.Y == inst.data.Y);
    CHECK(again.true_pattern == inst.true_pattern);

    s.n = 151;
    const auto odd = simulate(s);
    CHECK(odd.true_clusters()[0].size() == 51);
    CHECK(odd.true_clusters()[2].size() == 50);
}

TEST_CASE("overlap fractions follow the law of large numbers") {
    SimSpec s;
    s.n = 10000;
    s.p = 2;
    s.scenario = Scenario::overlap;
    s.seed = 17;
    const auto inst = simulate(s);
    std::vector<double> frac(4, 0.0);
    for (Eigen::Index i = 0; i < s.n; ++i) frac[static_cast<std::size_t>(inst.true_P.row(i).sum())] += 1.0 / s.n;
    CHECK(std::abs(frac[1] - 0.70) < 0.02);
    CHECK(std::abs(frac[2] - 0.22) < 0.02);
    CHECK(std::abs(frac[3] - 0.08) < 0.02);
    CHECK(inst.data.Y - inst.signal() == inst.noise);
}

TEST_CASE("predictor covariance matches the AR(1) structure") {
    Rng rng = make_stream(3, 2);
    const MatrixXd X = mvn_rows(50000, ar_covariance(5, 0.5), rng);
    const MatrixXd C = (X.rowwise() - X.colwise().mean()).transpose() * (X.rowwise() - X.colwise().mean()) / 49999.0;
    CHECK((C - ar_covariance(5, 0.5)).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("quality measures") {
    const Quality same = quality({1, 2, 3}, {1, 2, 3});
    CHECK(same.f1 == 1.0);
    CHECK(quality({1, 2}, {3, 4}).f1 == 0.0);
    const Quality q = quality({1, 2, 3, 4}, {2, 3, 4, 5, 6, 7});
    CHECK(q.f1 == doctest::Approx(0.6));
    CHECK(q.specificity == doctest::Approx(0.75));
    CHECK(q.sensitivity == doctest::Approx(0.5));
    const Quality swapped = quality({2, 3, 4, 5, 6, 7}, {1, 2, 3, 4});
    CHECK(swapped.specificity == q.sensitivity);
    CHECK(swapped.f1 == q.f1);
    CHECK(quality({}, {}).f1 == 1.0);
    CHECK(quality({1}, {}).f1 == 0.0);
}

TEST_CASE("matching recovers permutations and pads with null clusters") {
    const ClusterSet target{{0, 1, 2}, {3, 4}, {5, 6, 7, 8}};
    CHECK(match_clusters(target, target).mean_f1 == 1.0);
    const ClusterSet shuffled{target[2], target[0], target[1]};
    const auto m = match_clusters(target, shuffled);
    CHECK(m.mean_f1 == 1.0);
    CHECK(m.pairing[0] == 2);
    CHECK(m.pairing[1] == 0);
    CHECK(m.pairing[2] == 1);

    const auto short_m = match_clusters(target, {target[0], target[2]});
    const auto t2r = short_m.target_to_retrieved();
    CHECK(t2r[1] == -1);
    CHECK(short_m.mean_f1 == doctest::Approx(2.0 / 3.0));

    // brute force over all orders on both sides
    const ClusterSet noisy{{0, 1, 3}, {4, 5, 2}, {6, 7, 8, 0}};
    const double ref = match_clusters(target, noisy).mean_f1;
    ClusterSet t = target;
    std::sort(t.begin(), t.end());
    do {
        CHECK(match_clusters(t, noisy).mean_f1 == doctest::Approx(ref).epsilon(1e-14));
    } while (std::next_permutation(t.begin(), t.end()));
    for (const auto& p : match_clusters(target, noisy).pairs) {
        CHECK(p.f1 >= 0.0);
        CHECK(p.f1 <= 1.0);
    }
}

TEST_CASE("coefficient sse") {
    std::mt19937_64 rng(4);
    std::vector<MatrixXd> B{oracle::random_matrix(3, 2, rng), oracle::random_matrix(3, 2, rng)};
    const ClusterSet c{{0}, {1}};
    const auto id = match_clusters(c, c);
    CHECK(coefficient_sse(B, B, id) == 0.0);
    auto off = B;
    off[1](2, 1) += 2.0;
    CHECK(coefficient_sse(B, off, id) == doctest::Approx(4.0));
    const auto est = std::vector<MatrixXd>{oracle::random_matrix(3, 2, rng), oracle::random_matrix(3, 2, rng)};
    double brute = 0.0;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) {
                const double d = B[static_cast<std::size_t>(k)](i, j) - est[static_cast<std::size_t>(k)](i, j);
                brute += d * d;
            }
    CHECK(coefficient_sse(B, est, id) == doctest::Approx(brute).epsilon(1e-14));
}
