#include <doctest.h>

#include <sstream>

#include "commands.hpp"
#include "gfmmr/io.hpp"
#include "test_support.hpp"

using namespace gfmmr;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "gfmmr");
    std::ostringstream o, e;
    Run r;
    r.code = cli::run(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

}  // namespace

TEST_CASE("simulate, fit and evaluate") {
    const fs::path dir = test_support::scratch_dir("cli");
    const std::string sim = (dir / "sim").string();
    REQUIRE(run({"simulate", "--n", "90", "--seed", "3", "--out", sim}).code == 0);
    CHECK(fs::exists(fs::path(sim) / "truth.json"));

    const std::string x = sim + "/X.csv", y = sim + "/Y.csv";
    const auto f1 = run({"fit", "--x", x, "--y", y, "--K", "3", "--seed", "5", "--restarts", "2", "--out",
                         (dir / "fit1").string()});
    REQUIRE(f1.code == 0);
    const auto b = load_bundle((dir / "fit1" / "bundle.json").string());
    CHECK(b.params.K() == 3);
    CHECK(b.params.B[0].rows() == 15);
    CHECK(b.params.B[0].cols() == 3);

    // refit from re-saved copies of the inputs
    write_file((dir / "X2.csv").string(), read_file(x));
    write_file((dir / "Y2.csv").string(), read_file(y));
    REQUIRE(run({"fit", "--x", (dir / "X2.csv").string(), "--y", (dir / "Y2.csv").string(), "--K", "3", "--seed", "5",
                 "--restarts", "2", "--out", (dir / "fit2").string()})
                .code == 0);
    const auto b2 = load_bundle((dir / "fit2" / "bundle.json").string());
    CHECK(b2.params.B[2] == b.params.B[2]);
    CHECK(b2.resp.Z == b.resp.Z);

    REQUIRE(run({"simulate", "--n", "60", "--K", "1", "--seed", "4", "--out", (dir / "sim1").string()}).code == 0);
    REQUIRE(run({"fit", "--x", (dir / "sim1" / "X.csv").string(), "--y", (dir / "sim1" / "Y.csv").string(), "--K", "1",
                 "--out", (dir / "fitk1").string()})
                .code == 0);
    const auto ev = run({"evaluate", "--bundle", (dir / "fitk1" / "bundle.json").string(), "--truth",
                         (dir / "sim1" / "truth.json").string(), "--out", (dir / "eval").string()});
    REQUIRE(ev.code == 0);
    CHECK(ev.out.find("mean,,1,1,1") != std::string::npos);
}

TEST_CASE("usage and data errors map to exit codes") {
    const fs::path dir = test_support::scratch_dir("cli_err");
    const auto bad = run({"fit", "--bogus"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("\"exit_code\":1") != std::string::npos);

    write_file((dir / "X.csv").string(), "a,b\n1,2\n3,NA\n");
    write_file((dir / "Y.csv").string(), "y\n1\n2\n");
    const auto missing = run({"fit", "--x", (dir / "X.csv").string(), "--y", (dir / "Y.csv").string(), "--K", "1",
                              "--out", (dir / "o").string()});
    CHECK(missing.code == 2);

    write_file((dir / "cfg.ini").string(), "K = 2\nnot_an_option = 1\n");
    CHECK(run({"fit", "--config", (dir / "cfg.ini").string(), "--x", "X.csv"}).code == 1);
}

TEST_CASE("config file values apply and flags override them") {
    const fs::path dir = test_support::scratch_dir("cli_cfg");
    REQUIRE(run({"simulate", "--n", "60", "--seed", "2", "--out", (dir / "sim").string()}).code == 0);
    write_file((dir / "cfg.ini").string(), "# fit settings\nK = 2\nrestarts = 1\n");
    const std::string x = (dir / "sim" / "X.csv").string(), y = (dir / "sim" / "Y.csv").string();
    REQUIRE(run({"fit", "--config", (dir / "cfg.ini").string(), "--x", x, "--y", y, "--out", (dir / "a").string()}).code ==
            0);
    CHECK(load_bundle((dir / "a" / "bundle.json").string()).params.K() == 2);
    REQUIRE(run({"fit", "--config", (dir / "cfg.ini").string(), "--K", "3", "--x", x, "--y", y, "--out",
                 (dir / "b").string()})
                .code == 0);
    CHECK(load_bundle((dir / "b" / "bundle.json").string()).params.K() == 3);
}
