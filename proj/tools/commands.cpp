#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "gfmmr/errors.hpp"
#include "gfmmr/evaluation.hpp"
#include "gfmmr/io.hpp"
#include "gfmmr/model_selection.hpp"
#include "gfmmr/parallel.hpp"
#include "gfmmr/pipeline.hpp"
#include "gfmmr/plaid.hpp"
#include "gfmmr/simulation.hpp"

namespace gfmmr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_output_dir() {
    const char* env = std::getenv("GFMMR_OUTPUT_DIR");
    return env != nullptr && *env != '\0' ? env : "gfmmr_out";
}

std::string kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::data: return "data";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::convergence: return "convergence";
    }
    return "unknown";
}

void report_error(std::ostream& err, const std::string& command, ErrorKind kind, const std::string& message) {
    json j;
    j["error"] = {{"command", command}, {"kind", kind_name(kind)}, {"exit_code", static_cast<int>(kind)},
                  {"message", message}};
    err << j.dump() << "\n";
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// Every option of a subcommand with its effective value, for the bundle's config echo.
std::map<std::string, std::string> config_echo(const CLI::App* app) {
    std::map<std::string, std::string> out;
    for (const CLI::Option* opt : app->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        std::string value;
        if (opt->count() > 0) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
        } else {
            value = opt->get_default_str();
        }
        out[name] = value;
    }
    return out;
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path is required");
    if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

void prepare_output_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir);
}

// ------------------------------------------------------------ option sets

struct InputOpts {
    std::string x;
    std::string y;
    bool mean_impute = false;
    bool row_ids = false;
    double min_observed_fraction = 0.0;

    void add(CLI::App* app, bool need_y = true) {
        app->add_option("--x", x, "predictor CSV (header row, one row per observation)")->required();
        auto* oy = app->add_option("--y", y, "response CSV");
        if (need_y) oy->required();
        app->add_flag("--mean-impute", mean_impute, "replace missing cells by column means (reported)");
        app->add_flag("--row-ids", row_ids, "first CSV column holds row identifiers");
        app->add_option("--min-observed-fraction", min_observed_fraction,
                        "drop rows with fewer observed responses than this fraction")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
    }
    void check() const {
        require_file(x, "predictor file");
        require_file(y, "response file");
    }
    Dataset load(std::ostream& out) const {
        LoadOptions lo;
        lo.csv.mean_impute = mean_impute;
        lo.csv.row_ids = row_ids;
        lo.min_observed_fraction = min_observed_fraction;
        LoadReport rep;
        Dataset d = load_dataset(x, y, lo, &rep);
        if (!rep.dropped_rows.empty() || !rep.imputed_x.empty() || !rep.imputed_y.empty())
            out << "ingestion report\n" << rep.summary();
        return d;
    }
};

struct EmOpts {
    int K = 3;
    std::string penalty = "none";
    std::vector<double> lambda{0.0};
    std::vector<double> lambda2{0.0};
    std::vector<int> unpenalized;
    std::string profile;
    double rel_tol = 0.0;
    int max_iter = 500;
    double prune_threshold = 0.01;
    int restarts = 5;
    bool coupled = false;
    double sigma_jitter = 1e-8;
    std::string scope = "all";
    bool diagonal_sigma = false;
    std::string init = "kmeans";
    bool cv = false;
    int cv_folds = 10;
    int cv_points = 20;
    double cv_min_ratio = 1e-3;
    std::vector<double> cv_grid;
    int cv_every = 5;
    bool audit = false;

    void add(CLI::App* app, const std::string& default_profile) {
        profile = default_profile;
        app->add_option("--K", K, "number of objective clusters")->capture_default_str();
        app->add_option("--penalty", penalty, "none | lasso | elastic_net")
            ->check(CLI::IsMember({"none", "lasso", "elastic_net"}))
            ->capture_default_str();
        app->add_option("--lambda", lambda, "lasso weight: one value or one per component")->delimiter(',');
        app->add_option("--lambda2", lambda2, "ridge weight of the elastic net: one value or one per component")
            ->delimiter(',');
        app->add_option("--unpenalized", unpenalized, "0-based predictor columns left unpenalized")->delimiter(',');
        app->add_option("--profile", profile, "real (rel_tol 1e-3) | simulation (rel_tol 1e-5)")
            ->check(CLI::IsMember({"real", "simulation"}))
            ->capture_default_str();
        app->add_option("--rel-tol", rel_tol, "relative log-likelihood tolerance (overrides the profile)");
        app->add_option("--max-iter", max_iter, "EM iteration cap")->capture_default_str();
        app->add_option("--prune-threshold", prune_threshold, "patterns with smaller mixing weight are removed")
            ->capture_default_str();
        app->add_option("--restarts", restarts, "random restarts")->capture_default_str();
        app->add_flag("--coupled", coupled, "Sigma-coupled coefficient updates");
        app->add_option("--sigma-jitter", sigma_jitter, "relative diagonal jitter for Sigma")->capture_default_str();
        app->add_option("--scope", scope, "all | singletons")
            ->check(CLI::IsMember({"all", "singletons"}))
            ->capture_default_str();
        app->add_flag("--diagonal-sigma", diagonal_sigma, "independent responses (diagonal Sigma)");
        app->add_option("--init", init, "kmeans | random_partition")
            ->check(CLI::IsMember({"kmeans", "random_partition"}))
            ->capture_default_str();
        app->add_flag("--cv", cv, "tune lambda_k by component-wise cross-validation");
        app->add_option("--cv-folds", cv_folds, "cross-validation folds")->capture_default_str();
        app->add_option("--cv-points", cv_points, "relative grid size")->capture_default_str();
        app->add_option("--cv-min-ratio", cv_min_ratio, "smallest grid value relative to lambda_max")
            ->capture_default_str();
        app->add_option("--cv-grid", cv_grid, "explicit decreasing lambda_k grid")->delimiter(',');
        app->add_option("--cv-every", cv_every, "re-tune every this many EM iterations")->capture_default_str();
        app->add_flag("--audit", audit, "check every M-step against its objective");
    }

    static std::vector<double> per_component(const std::vector<double>& v, int K, const std::string& what) {
        if (v.size() == 1) return std::vector<double>(static_cast<std::size_t>(K), v.front());
        if (static_cast<int>(v.size()) == K) return v;
        throw UsageError(what + " needs 1 or K values");
    }

    EmConfig build(std::uint64_t seed, int workers) const {
        EmConfig c;
        c.K = K;
        if (penalty == "none" && !cv) {
            c.penalty = PenaltyConfig::none(K);
        } else if (penalty == "elastic_net") {
            c.penalty = PenaltyConfig::elastic_net(per_component(lambda, K, "--lambda"),
                                                   per_component(lambda2, K, "--lambda2"));
        } else {
            c.penalty = PenaltyConfig::lasso(per_component(lambda, K, "--lambda"));
        }
        c.penalty.unpenalized = unpenalized;
        c.rel_tol = rel_tol > 0.0 ? rel_tol : (profile == "real" ? 1e-3 : 1e-5);
        c.max_iter = max_iter;
        c.prune_threshold = prune_threshold;
        c.n_restarts = restarts;
        c.coupled = coupled;
        c.seed = seed;
        c.sigma_jitter = sigma_jitter;
        c.scope = scope == "singletons" ? PatternScope::singletons : PatternScope::all;
        c.diagonal_sigma = diagonal_sigma;
        c.init = init_method_from_string(init);
        if (cv) {
            LambdaGrid g;
            g.values = cv_grid;
            g.n_points = cv_points;
            g.min_ratio = cv_min_ratio;
            g.n_folds = cv_folds;
            g.seed = seed;
            c.cv_grid = g;
        }
        c.cv_every = cv_every;
        c.audit = audit;
        c.workers = workers;
        c.validate();
        return c;
    }
};

struct CommonOpts {
    std::string out = default_output_dir();
    std::uint64_t seed = 0;
    int workers = workers_from_env(1);

    void add(CLI::App* app) {
        app->add_option("--out", out, "output directory (default: $GFMMR_OUTPUT_DIR or gfmmr_out)")
            ->capture_default_str();
        app->add_option("--seed", seed, "random seed")->capture_default_str();
        app->add_option("--workers", workers, "worker threads (default: $GFMMR_WORKERS or 1)")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    }
};

// ---------------------------------------------------------------- outputs

void write_fit_outputs(const std::string& dir, const ResultBundle& b) {
    const fs::path root(dir);
    save_bundle((root / "bundle.json").string(), b);
    for (int k = 0; k < b.params.K(); ++k)
        write_matrix_csv((root / ("B_" + std::to_string(k + 1) + ".csv")).string(), b.params.B[static_cast<std::size_t>(k)],
                         b.response_names);
    write_matrix_csv((root / "sigma.csv").string(), b.params.sigma, b.response_names);
    write_matrix_csv((root / "responsibilities.csv").string(), b.resp.Z, b.pattern_labels);
    std::vector<std::string> comp;
    for (int k = 0; k < b.params.K(); ++k) comp.push_back("cluster" + std::to_string(k + 1));
    write_matrix_csv((root / "memberships.csv").string(), b.hard.cast<double>(), comp);
    std::ostringstream pi;
    pi << "pattern,pi\n";
    for (std::size_t t = 0; t < b.pattern_labels.size(); ++t)
        pi << b.pattern_labels[t] << ',' << fmt(b.params.pi(static_cast<Eigen::Index>(t))) << '\n';
    write_file((root / "pi.csv").string(), pi.str());
    std::ostringstream tr;
    tr << "iteration,loglik\n";
    for (std::size_t i = 0; i < b.loglik_trace.size(); ++i) tr << i + 1 << ',' << fmt(b.loglik_trace[i]) << '\n';
    write_file((root / "loglik_trace.csv").string(), tr.str());
}

std::string fit_summary(const ResultBundle& b, const PenaltyConfig& penalty) {
    std::ostringstream os;
    os << "K: " << b.params.K() << "\n";
    os << "log-likelihood: " << fmt(b.loglik) << "\n";
    os << "penalized log-likelihood: " << fmt(b.penalized_loglik) << "\n";
    os << "effective parameters: " << b.n_effective_params << "\n";
    os << "iterations: " << b.iterations << (b.converged ? " (converged)" : " (not converged)") << "\n";
    os << "penalty: " << to_string(penalty.kind);
    for (double v : penalty.lambda1) os << ' ' << fmt(v);
    os << "\nmixing proportions:";
    for (std::size_t t = 0; t < b.pattern_labels.size(); ++t)
        os << ' ' << b.pattern_labels[t] << '=' << fmt(b.params.pi(static_cast<Eigen::Index>(t)));
    os << "\n";
    if (!b.pruned_patterns.empty()) {
        os << "pruned patterns:";
        for (const auto& p : b.pruned_patterns) os << ' ' << p;
        os << "\n";
    }
    for (const auto& w : b.warnings) os << "warning: " << w << "\n";
    return os.str();
}

int finish_fit(const std::string& dir, const ResultBundle& b, const PenaltyConfig& penalty, std::ostream& out) {
    write_fit_outputs(dir, b);
    const std::string summary = fit_summary(b, penalty);
    write_file((fs::path(dir) / "summary.txt").string(), summary);
    out << summary;
    if (!b.converged) throw ConvergenceError("EM stopped after " + std::to_string(b.iterations) +
                                            " iterations without meeting the tolerance; partial results in " + dir);
    return 0;
}

// --------------------------------------------------------------- commands

struct Cli {
    CLI::App app{"Generalized finite mixtures of multivariate regressions", "gfmmr"};
    std::ostream& out;
    std::function<int()> action;
    std::string config_path;

    explicit Cli(std::ostream& o) : out(o) {
        app.require_subcommand(1);
        app.set_version_flag("--version", kLibraryVersion);
    }

    CLI::App* sub(const std::string& name, const std::string& help) {
        CLI::App* s = app.add_subcommand(name, help);
        s->add_option("--config", config_path, "flat key = value configuration file (CLI flags take precedence)");
        return s;
    }
};

void add_simulate(Cli& cli) {
    auto spec = std::make_shared<SimSpec>();
    auto common = std::make_shared<CommonOpts>();
    auto scenario = std::make_shared<std::string>("partition");
    CLI::App* s = cli.sub("simulate", "generate a simulated data set with ground truth");
    s->add_option("--n", spec->n, "observations")->capture_default_str();
    s->add_option("--p", spec->p, "predictors")->capture_default_str();
    s->add_option("--q", spec->q, "responses")->capture_default_str();
    s->add_option("--K", spec->K, "objective clusters")->capture_default_str();
    s->add_option("--rho-x", spec->rho_x, "AR correlation of the predictors")->capture_default_str();
    s->add_option("--rho-e", spec->rho_e, "AR correlation of the errors")->capture_default_str();
    s->add_option("--p1", spec->p1, "entrywise nonzero probability")->capture_default_str();
    s->add_option("--p2", spec->p2, "row-active probability")->capture_default_str();
    s->add_option("--scenario", *scenario, "partition | overlap")
        ->check(CLI::IsMember({"partition", "overlap"}))
        ->capture_default_str();
    s->add_option("--fractions", spec->fractions, "overlap cardinality fractions")->delimiter(',');
    common->add(s);
    s->callback([&cli, spec, common, scenario, s] {
        cli.action = [&cli, spec, common, scenario, s] {
            spec->scenario = scenario_from_string(*scenario);
            spec->seed = common->seed;
            spec->validate();
            prepare_output_dir(common->out);
            const SimInstance inst = simulate(*spec);
            save_sim_instance(common->out, inst, *spec);
            (void)s;
            cli.out << "wrote " << spec->n << " x " << spec->p << " predictors and " << spec->n << " x " << spec->q
                    << " responses to " << common->out << "\n";
            return 0;
        };
    });
}

void add_fit(Cli& cli, const std::string& name, bool tune) {
    auto in = std::make_shared<InputOpts>();
    auto em = std::make_shared<EmOpts>();
    auto common = std::make_shared<CommonOpts>();
    CLI::App* s = cli.sub(name, tune ? "fit with component-wise cross-validated lambda_k"
                                     : "fit the generalized mixture by penalized EM");
    in->add(s);
    em->add(s, "real");
    common->add(s);
    s->callback([&cli, in, em, common, s, tune] {
        cli.action = [&cli, in, em, common, s, tune] {
            in->check();
            if (tune) {
                em->cv = true;
                if (em->penalty == "none") em->penalty = "lasso";
            }
            const EmConfig cfg = em->build(common->seed, common->workers);
            prepare_output_dir(common->out);
            const Dataset data = in->load(cli.out);
            const FitResult fit = fit_em(data, cfg);
            const ResultBundle b = bundle_from_fit(fit, data, common->seed, config_echo(s));
            if (tune) {
                std::ostringstream os;
                os << "component,lambda\n";
                for (std::size_t k = 0; k < fit.penalty.lambda1.size(); ++k)
                    os << k + 1 << ',' << fmt(fit.penalty.lambda1[k]) << '\n';
                write_file((fs::path(common->out) / "lambda.csv").string(), os.str());
            }
            return finish_fit(common->out, b, fit.penalty, cli.out);
        };
    });
}

void add_select_k(Cli& cli) {
    auto in = std::make_shared<InputOpts>();
    auto em = std::make_shared<EmOpts>();
    auto common = std::make_shared<CommonOpts>();
    auto ic = std::make_shared<IcConfig>();
    auto ic_kind = std::make_shared<std::string>("bic");
    CLI::App* s = cli.sub("select-k", "choose K by information criterion");
    in->add(s);
    em->add(s, "real");
    common->add(s);
    s->add_option("--candidates", ic->K_candidates, "candidate K values")->delimiter(',');
    s->add_option("--ic", *ic_kind, "bic | aic | custom")->check(CLI::IsMember({"bic", "aic", "custom"}))->capture_default_str();
    s->add_option("--an", ic->custom_an, "penalty weight a_n of the custom criterion");
    s->callback([&cli, in, em, common, ic, ic_kind, s] {
        cli.action = [&cli, in, em, common, ic, ic_kind, s] {
            in->check();
            ic->kind = ic_kind_from_string(*ic_kind);
            ic->validate();
            const EmConfig cfg = em->build(common->seed, common->workers);
            prepare_output_dir(common->out);
            const Dataset data = in->load(cli.out);
            const SelectKResult sel = select_K(data, cfg, *ic);
            std::ostringstream table;
            table << "K,ok,loglik,n_params,a_n,ic,error\n";
            for (const auto& r : sel.table)
                table << r.K << ',' << (r.ok ? 1 : 0) << ',' << fmt(r.loglik) << ',' << r.n_params << ','
                      << fmt(r.a_n) << ',' << fmt(r.ic) << ",\"" << r.error << "\"\n";
            write_file((fs::path(common->out) / "ic_table.csv").string(), table.str());
            cli.out << table.str() << "selected K: " << sel.K << "\n";
            const ResultBundle b = bundle_from_fit(*sel.best_fit, data, common->seed, config_echo(s));
            return finish_fit(common->out, b, sel.best_fit->penalty, cli.out);
        };
    });
}

json plaid_json(const PlaidFit& fit) {
    json j;
    j["schema"] = "gfmmr.plaid/1";
    j["Q_value"] = fit.Q_value;
    j["residual_sse"] = fit.residual_sse;
    j["backfit_trace"] = fit.backfit_trace;
    json layers = json::array();
    for (const auto& l : fit.layers) {
        json B = json::array();
        for (Eigen::Index i = 0; i < l.B.rows(); ++i) {
            json r = json::array();
            for (Eigen::Index m = 0; m < l.B.cols(); ++m) r.push_back(l.B(i, m));
            B.push_back(r);
        }
        std::vector<int> members;
        for (Eigen::Index i = 0; i < l.P.size(); ++i)
            if (l.P(i) > 0.5) members.push_back(static_cast<int>(i));
        layers.push_back({{"B", B}, {"members", members}});
    }
    j["layers"] = layers;
    return j;
}

void add_plaid(Cli& cli) {
    auto in = std::make_shared<InputOpts>();
    auto common = std::make_shared<CommonOpts>();
    auto pc = std::make_shared<PlaidConfig>();
    auto variant = std::make_shared<std::string>("sequential");
    CLI::App* s = cli.sub("plaid", "generalized plaid baseline");
    in->add(s);
    common->add(s);
    s->add_option("--variant", *variant, "sequential | joint")->check(CLI::IsMember({"sequential", "joint"}))->capture_default_str();
    s->add_option("--K", pc->K, "maximum layers")->capture_default_str();
    s->add_option("--S", pc->S, "inner iterations")->capture_default_str();
    s->add_option("--T-frac", pc->T_frac, "saturation offset as a fraction of S")->capture_default_str();
    s->add_option("--tau", pc->tau, "row pruning threshold")->capture_default_str();
    s->add_option("--R", pc->R, "backfitting passes")->capture_default_str();
    s->add_option("--lambda", pc->lambda, "lasso weight per layer and response")->capture_default_str();
    s->callback([&cli, in, common, pc, variant] {
        cli.action = [&cli, in, common, pc, variant] {
            in->check();
            pc->seed = common->seed;
            prepare_output_dir(common->out);
            const Dataset data = in->load(cli.out);
            const PlaidFit fit = *variant == "joint" ? plaid_fit_joint(data, *pc) : plaid_fit_sequential(data, *pc);
            write_file((fs::path(common->out) / "plaid.json").string(), plaid_json(fit).dump(1) + "\n");
            MatrixXd P(data.n(), static_cast<Eigen::Index>(fit.layers.size()));
            std::vector<std::string> names;
            for (std::size_t k = 0; k < fit.layers.size(); ++k) {
                P.col(static_cast<Eigen::Index>(k)) = fit.layers[k].P;
                names.push_back("layer" + std::to_string(k + 1));
            }
            write_matrix_csv((fs::path(common->out) / "memberships.csv").string(), P, names);
            cli.out << "layers: " << fit.layers.size() << "\nQ: " << fmt(fit.Q_value) << "\nresidual SSE: "
                    << fmt(fit.residual_sse) << "\n";
            return 0;
        };
    });
}

ClusterSet plaid_clusters(const std::string& path) {
    json j = json::parse(read_file(path));
    ClusterSet out;
    for (const auto& l : j.at("layers")) out.push_back(l.at("members").get<std::vector<int>>());
    return out;
}

std::vector<MatrixXd> plaid_coefficients(const std::string& path) {
    json j = json::parse(read_file(path));
    std::vector<MatrixXd> out;
    for (const auto& l : j.at("layers")) {
        const auto& B = l.at("B");
        MatrixXd M(static_cast<Eigen::Index>(B.size()), B.empty() ? 0 : static_cast<Eigen::Index>(B[0].size()));
        for (std::size_t i = 0; i < B.size(); ++i)
            for (std::size_t m = 0; m < B[i].size(); ++m) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = B[i][m].get<double>();
        out.push_back(std::move(M));
    }
    return out;
}

void add_evaluate(Cli& cli) {
    auto bundle = std::make_shared<std::string>();
    auto plaid = std::make_shared<std::string>();
    auto truth = std::make_shared<std::string>();
    auto common = std::make_shared<CommonOpts>();
    CLI::App* s = cli.sub("evaluate", "cluster recovery against simulated ground truth");
    auto* ob = s->add_option("--bundle", *bundle, "result bundle of a fit");
    auto* op = s->add_option("--plaid", *plaid, "plaid.json of a plaid fit");
    ob->excludes(op);
    s->add_option("--truth", *truth, "truth.json written by simulate")->required();
    common->add(s);
    s->callback([&cli, bundle, plaid, truth, common] {
        cli.action = [&cli, bundle, plaid, truth, common] {
            if (bundle->empty() && plaid->empty()) throw UsageError("evaluate needs --bundle or --plaid");
            require_file(*truth, "truth file");
            if (!bundle->empty()) require_file(*bundle, "bundle");
            if (!plaid->empty()) require_file(*plaid, "plaid result");
            prepare_output_dir(common->out);
            const SimInstance t = load_sim_truth(*truth);
            ClusterSet retrieved;
            std::vector<MatrixXd> est;
            if (!bundle->empty()) {
                const ResultBundle b = load_bundle(*bundle);
                if (b.hard.rows() != t.true_P.rows()) throw ShapeError("bundle and truth differ in row count");
                retrieved = clusters_from_memberships(b.hard);
                est = b.params.B;
            } else {
                retrieved = plaid_clusters(*plaid);
                est = plaid_coefficients(*plaid);
            }
            MatchReport m = match_clusters(clusters_from_memberships(t.true_P), retrieved);
            m.coefficient_sse = coefficient_sse(t.true_B, est, m);
            const std::string table = metrics_table(m);
            write_file((fs::path(common->out) / "metrics.csv").string(), table);
            cli.out << table;
            return 0;
        };
    });
}

void add_pipeline(Cli& cli) {
    auto in = std::make_shared<InputOpts>();
    auto em = std::make_shared<EmOpts>();
    auto common = std::make_shared<CommonOpts>();
    auto pref1 = std::make_shared<std::string>("-0.5");
    auto pref2 = std::make_shared<std::string>("-0.5");
    auto select = std::make_shared<bool>(false);
    auto ic = std::make_shared<IcConfig>();
    auto cache = std::make_shared<std::string>();
    CLI::App* s = cli.sub("pipeline", "per-response fits, two-level grouping and group fits");
    in->add(s);
    em->add(s, "real");
    common->add(s);
    s->add_option("--level1-preference", *pref1, "APC preference on responsibilities: median or a number")->capture_default_str();
    s->add_option("--level2-preference", *pref2, "APC preference on coefficients: median or a number")->capture_default_str();
    s->add_flag("--select-k", *select, "choose K of every fit by information criterion");
    s->add_option("--candidates", ic->K_candidates, "candidate K values for --select-k")->delimiter(',');
    s->add_option("--cache-dir", *cache, "step-1 cache (default: <out>/cache)");
    s->callback([&cli, in, em, common, pref1, pref2, select, ic, cache] {
        cli.action = [&cli, in, em, common, pref1, pref2, select, ic, cache] {
            in->check();
            PipelineConfig pc;
            pc.em = em->build(common->seed, 1);
            pc.level1 = Preference::parse(*pref1);
            pc.level2 = Preference::parse(*pref2);
            if (*select) pc.select_k = *ic;
            pc.workers = common->workers;
            pc.cache_dir = cache->empty() ? (fs::path(common->out) / "cache").string() : *cache;
            pc.validate();
            prepare_output_dir(common->out);
            const Dataset data = in->load(cli.out);
            const PipelineResult r = run_pipeline(data, pc);
            write_pipeline_outputs(common->out, r, data);
            int cached = 0;
            for (bool c : r.step1_cached) cached += c ? 1 : 0;
            cli.out << "responses: " << data.q() << " (" << cached << " step-1 fits from cache)\n";
            cli.out << "groups: " << r.level2_groups.size() << "\n";
            for (std::size_t g = 0; g < r.level2_groups.size(); ++g) {
                cli.out << "  group " << g + 1 << ":";
                for (int c : r.level2_groups[g])
                    cli.out << ' ' << (data.response_names.empty() ? "y" + std::to_string(c + 1) : data.response_names[static_cast<std::size_t>(c)]);
                cli.out << "\n";
            }
            return 0;
        };
    });
}

void add_predict(Cli& cli) {
    auto x = std::make_shared<std::string>();
    auto bundle = std::make_shared<std::string>();
    auto component = std::make_shared<int>(0);
    auto pattern = std::make_shared<std::string>();
    auto coefs = std::make_shared<std::vector<std::string>>();
    auto common = std::make_shared<CommonOpts>();
    CLI::App* s = cli.sub("predict", "predict responses of one cluster with chosen coefficient matrices");
    s->add_option("--x", *x, "predictor CSV used for the bundle's fit")->required();
    s->add_option("--bundle", *bundle, "bundle whose hard memberships define the cluster")->required();
    auto* oc = s->add_option("--cluster", *component, "1-based objective cluster");
    auto* op = s->add_option("--pattern", *pattern, "overlap pattern label, e.g. 12");
    oc->excludes(op);
    s->add_option("--coef", *coefs, "coefficient choice BUNDLE:COMPONENT (1-based), repeatable")->required();
    common->add(s);
    s->callback([&cli, x, bundle, component, pattern, coefs, common] {
        cli.action = [&cli, x, bundle, component, pattern, coefs, common] {
            require_file(*x, "predictor file");
            require_file(*bundle, "bundle");
            std::vector<std::pair<std::string, int>> refs;
            for (const auto& c : *coefs) {
                const auto colon = c.rfind(':');
                if (colon == std::string::npos) throw UsageError("--coef expects BUNDLE:COMPONENT, got " + c);
                int k = 0;
                try {
                    k = std::stoi(c.substr(colon + 1));
                } catch (const std::exception&) {
                    throw UsageError("--coef component must be an integer: " + c);
                }
                require_file(c.substr(0, colon), "coefficient bundle");
                refs.emplace_back(c.substr(0, colon), k - 1);
            }
            prepare_output_dir(common->out);
            const ResultBundle b = load_bundle(*bundle);
            std::map<std::string, ResultBundle> loaded;
            std::vector<CoefficientRef> choice;
            for (const auto& [path, k] : refs) {
                if (!loaded.count(path)) loaded.emplace(path, load_bundle(path));
                choice.push_back({&loaded.at(path), k});
            }
            CsvMatrix xm = ingest_csv(*x, "predictors");
            Dataset data;
            data.X = xm.values;
            data.Y = MatrixXd::Zero(xm.values.rows(), 1);
            ClusterRef ref;
            if (!pattern->empty()) {
                const PatternSet patterns(b.params.K());
                const auto labels = patterns.labels();
                const auto it = std::find(labels.begin(), labels.end(), *pattern);
                if (it == labels.end()) throw UsageError("unknown pattern label " + *pattern);
                ref = {ClusterRef::Kind::pattern, static_cast<int>(it - labels.begin())};
            } else {
                ref = {ClusterRef::Kind::component, *component - 1};
            }
            const CrossPrediction cp = cross_predict(b, ref, choice, data);
            const auto& names = choice.front().bundle->response_names;
            write_matrix_csv((fs::path(common->out) / "predictions.csv").string(), cp.predicted, names);
            std::ostringstream q;
            q << "response,n,min,q1,median,q3,max\n";
            for (std::size_t m = 0; m < cp.quartiles.size(); ++m) {
                const auto& r = cp.quartiles[m];
                q << (m < names.size() ? names[m] : "y" + std::to_string(m + 1)) << ',' << cp.rows.size() << ','
                  << fmt(r.min) << ',' << fmt(r.q1) << ',' << fmt(r.median) << ',' << fmt(r.q3) << ',' << fmt(r.max)
                  << '\n';
            }
            write_file((fs::path(common->out) / "quartiles.csv").string(), q.str());
            cli.out << q.str();
            return 0;
        };
    });
}

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front())
        out = out.substr(1, out.size() - 2);
    return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
    for (const auto& a : args)
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
}

// Expands `--config FILE` into command-line arguments. Keys are the long
// option names of the subcommand; unknown keys are rejected and flags given
// on the command line win over the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
    if (args.size() < 2) return args;
    CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(args[1]);
    } catch (const CLI::OptionNotFound&) {
        return args;
    }
    std::string path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (path.empty()) return rest;
    if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
    std::istringstream in(read_file(path));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = strip(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = strip(t.substr(0, eq));
        const std::string value = strip(t.substr(eq + 1));
        const std::string flag = "--" + key;
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (opt == nullptr || key == "config" || key == "help")
            throw UsageError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "' for " + args[1]);
        if (given_on_command_line(rest, flag)) continue;
        if (opt->get_items_expected_max() == 0) {
            if (value == "true" || value == "1" || value == "yes") rest.push_back(flag);
            else if (!(value == "false" || value == "0" || value == "no"))
                throw UsageError(path + ":" + std::to_string(line_no) + ": '" + key + "' expects true or false");
        } else {
            rest.push_back(flag);
            rest.push_back(value);
        }
    }
    return rest;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Cli cli(out);
    add_simulate(cli);
    add_fit(cli, "fit", false);
    add_fit(cli, "tune", true);
    add_select_k(cli);
    add_plaid(cli);
    add_evaluate(cli);
    add_pipeline(cli);
    add_predict(cli);

    std::string command = args.size() > 1 ? args[1] : "";
    try {
        const std::vector<std::string> expanded = expand_config(args, cli.app);
        std::vector<std::string> rev(expanded.rbegin(), expanded.rend() - 1);
        cli.app.parse(std::move(rev));
    } catch (const Error& e) {
        report_error(err, command, e.kind(), e.what());
        return e.exit_code();
    } catch (const CLI::CallForHelp&) {
        out << cli.app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << cli.app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kLibraryVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, command, ErrorKind::usage, e.what());
        return static_cast<int>(ErrorKind::usage);
    }
    if (!cli.action) {
        report_error(err, command, ErrorKind::usage, "no command given");
        return static_cast<int>(ErrorKind::usage);
    }
    try {
        return cli.action();
    } catch (const Error& e) {
        report_error(err, command, e.kind(), e.what());
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        report_error(err, command, ErrorKind::data, e.what());
        return static_cast<int>(ErrorKind::data);
    } catch (const std::filesystem::filesystem_error& e) {
        report_error(err, command, ErrorKind::usage, e.what());
        return static_cast<int>(ErrorKind::usage);
    }
}

}  // namespace gfmmr::cli
