#include <doctest.h>

#include <filesystem>

#include "gfmmr/errors.hpp"
#include "gfmmr/io.hpp"
#include "gfmmr/pipeline.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gfmmr;
namespace fs = std::filesystem;

TEST_CASE("csv parsing") {
    const auto m = parse_csv("a,b\n1,2\n3,4\n", "X");
    CHECK(m.names == std::vector<std::string>{"a", "b"});
    CHECK(m.values == (MatrixXd(2, 2) << 1, 2, 3, 4).finished());

    try {
        parse_csv("a,b\n1,NA\n3,4\n", "X");
        FAIL("missing cell accepted");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 1") != std::string::npos);
        CHECK(msg.find("b") != std::string::npos);
    }

    CsvReadOptions o;
    o.mean_impute = true;
    const auto imp = parse_csv("a,b\n1,NA\n3,4\n5,8\n", "X", o);
    CHECK(imp.values(0, 1) == 6.0);
    REQUIRE(imp.imputed.size() == 1);
    CHECK(imp.imputed[0].col == 1);
    CHECK_THROWS_AS(parse_csv("a,b\n1,x\n", "X"), DataError);
    CHECK_THROWS_AS(parse_csv("a,b\n1\n", "X"), DataError);
}

TEST_CASE("bundle round trip is byte identical") {
    const auto inst = test_support::small_instance(60, 3);
    EmConfig c;
    c.n_restarts = 1;
    const auto fit = fit_em(inst.data, c);
    const auto bundle = bundle_from_fit(fit, inst.data, 3, {{"K", "3"}});
    const std::string s1 = bundle_to_string(bundle);
    const auto back = bundle_from_string(s1);
    CHECK(bundle_to_string(back) == s1);
    CHECK(back.params.B[1] == fit.params.B[1]);
    CHECK(back.resp.Z == fit.resp.Z);
    CHECK(back.loglik == fit.loglik);

    const fs::path dir = test_support::scratch_dir("bundle");
    save_bundle((dir / "a.json").string(), bundle);
    save_bundle((dir / "b.json").string(), load_bundle((dir / "a.json").string()));
    CHECK(read_file((dir / "a.json").string()) == read_file((dir / "b.json").string()));
    CHECK_THROWS_AS(bundle_from_string("{\"schema\":\"other\"}"), DataError);
}

TEST_CASE("simulated instances survive a save and reload") {
    SimSpec s;
    s.n = 45;
    s.seed = 12;
    s.scenario = Scenario::overlap;
    const auto inst = simulate(s);
    const fs::path dir = test_support::scratch_dir("sim");
    save_sim_instance(dir.string(), inst, s);
    const auto back = load_sim_instance(dir.string());
    CHECK(back.data.X == inst.data.X);
    CHECK(back.data.Y == inst.data.Y);
    CHECK(back.true_P == inst.true_P);
    CHECK(back.noise == inst.noise);
    CHECK(back.true_B[2] == inst.true_B[2]);
}

TEST_CASE("preferences") {
    CHECK(Preference::parse("median").median);
    CHECK(Preference::parse("-0.25").value == -0.25);
    CHECK_THROWS_AS(Preference::parse("low"), UsageError);
}

TEST_CASE("quartiles use linear interpolation") {
    const auto q = quartiles({4.0, 1.0, 3.0, 2.0});
    CHECK(q.min == 1.0);
    CHECK(q.q1 == 1.75);
    CHECK(q.median == 2.5);
    CHECK(q.q3 == 3.25);
    CHECK(q.max == 4.0);
}

TEST_CASE("cross prediction") {
    const auto inst = test_support::small_instance(90, 5, 0.0);
    EmConfig c;
    c.n_restarts = 2;
    c.scope = PatternScope::singletons;
    const auto fit = fit_em(inst.data, c);
    const auto bundle = bundle_from_fit(fit, inst.data, 0);
    const ClusterRef cl{ClusterRef::Kind::component, 0};

    // the generating parameters reproduce noiseless responses exactly
    ResultBundle truth = bundle;
    truth.params.B = inst.true_B;
    truth.hard = inst.true_P;
    const auto own = cross_predict(truth, cl, {{&truth, 0}}, inst.data);
    double worst = 0.0;
    for (std::size_t r = 0; r < own.rows.size(); ++r)
        worst = std::max(worst, (own.predicted.row(static_cast<Eigen::Index>(r)) - inst.data.Y.row(own.rows[r])).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-12);

    ResultBundle zero = bundle;
    for (auto& B : zero.params.B) B.setZero();
    CHECK(cross_predict(bundle, cl, {{&zero, 0}}, inst.data).predicted.isZero(0.0));

    const auto p0 = cross_predict(bundle, cl, {{&bundle, 1}}, inst.data);
    const auto p1 = cross_predict(bundle, cl, {{&bundle, 2}}, inst.data);
    const auto both = cross_predict(bundle, cl, {{&bundle, 1}, {&bundle, 2}}, inst.data);
    CHECK((both.predicted - p0.predicted - p1.predicted).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(cross_predict(bundle, cl, {}, inst.data), UsageError);
}

TEST_CASE("pipeline groups identically generated responses") {
    const auto d = test_support::pipeline_data(150, 0.2, 1);
    PipelineConfig pc;
    pc.em.K = 3;
    pc.em.seed = 1;
    // k-means on a single response column rarely separates the blocks
    pc.em.init = InitMethod::random_partition;
    pc.em.n_restarts = 20;
    pc.workers = 2;
    pc.cache_dir = test_support::scratch_dir("cache").string();
    const auto r = run_pipeline(d, pc);
    CHECK(r.level2_groups == std::vector<std::vector<int>>{{0, 1, 2}, {3}});
    CHECK(r.level1_labels[0] == r.level1_labels[1]);
    CHECK(r.level1_labels[0] != r.level1_labels[3]);
    REQUIRE(r.group_fits.size() == 2);
    CHECK(r.group_fits[0].params.q() == 3);

    const auto again = run_pipeline(d, pc);
    for (bool cached : again.step1_cached) CHECK(cached);
    CHECK(bundle_to_string(again.group_fits[0]) == bundle_to_string(r.group_fits[0]));

    const fs::path out = test_support::scratch_dir("pipeline_out");
    write_pipeline_outputs(out.string(), r, d);
    CHECK(fs::exists(out / "groups.csv"));
    CHECK(fs::exists(out / "group_1" / "bundle.json"));
}

TEST_CASE("pipeline on one response is a single fit") {
    const auto d = test_support::pipeline_data(120, 0.2, 2).select_responses({0});
    PipelineConfig pc;
    pc.em.K = 3;
    pc.em.seed = 4;
    const auto r = run_pipeline(d, pc);
    REQUIRE(r.group_fits.size() == 1);
    const auto direct = fit_em(d, pc.em);
    CHECK(r.group_fits[0].params.B[0] == direct.params.B[0]);
    CHECK(r.group_fits[0].loglik == direct.loglik);
}
