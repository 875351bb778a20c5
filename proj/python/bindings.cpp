#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gfmmr/affinity.hpp"
#include "gfmmr/em.hpp"
#include "gfmmr/errors.hpp"
#include "gfmmr/evaluation.hpp"
#include "gfmmr/io.hpp"
#include "gfmmr/model_selection.hpp"
#include "gfmmr/pipeline.hpp"
#include "gfmmr/plaid.hpp"
#include "gfmmr/simulation.hpp"

namespace py = pybind11;
using namespace gfmmr;

namespace {

Dataset make_dataset(const MatrixXd& X, const MatrixXd& Y) { return Dataset(X, Y); }

PenaltyConfig make_penalty(int K, const std::string& kind, const std::vector<double>& lambda,
                           const std::vector<double>& lambda2) {
    auto expand = [K](const std::vector<double>& v) {
        if (v.size() == 1) return std::vector<double>(static_cast<std::size_t>(K), v.front());
        return v;
    };
    const PenaltyKind k = penalty_kind_from_string(kind);
    if (k == PenaltyKind::none) return PenaltyConfig::none(K);
    if (k == PenaltyKind::lasso) return PenaltyConfig::lasso(expand(lambda));
    return PenaltyConfig::elastic_net(expand(lambda), expand(lambda2));
}

EmConfig make_config(int K, const std::string& penalty, const std::vector<double>& lambda,
                     const std::vector<double>& lambda2, double rel_tol, int max_iter, int restarts, bool coupled,
                     std::uint64_t seed, bool singletons, bool cv, int workers, const std::string& init) {
    EmConfig c;
    c.init = init_method_from_string(init);
    c.K = K;
    c.penalty = make_penalty(K, cv && penalty == "none" ? "lasso" : penalty, lambda, lambda2);
    c.rel_tol = rel_tol;
    c.max_iter = max_iter;
    c.n_restarts = restarts;
    c.coupled = coupled;
    c.seed = seed;
    c.scope = singletons ? PatternScope::singletons : PatternScope::all;
    if (cv) {
        LambdaGrid g;
        g.seed = seed;
        c.cv_grid = g;
    }
    c.workers = workers;
    return c;
}

py::dict fit_to_dict(const FitResult& f) {
    py::dict d;
    d["B"] = f.params.B;
    d["sigma"] = f.params.sigma;
    d["pi"] = f.params.pi;
    d["Z"] = f.resp.Z;
    d["hard"] = MatrixXd(f.hard.cast<double>());
    d["hard_pattern"] = f.hard_pattern;
    d["loglik_trace"] = f.loglik_trace;
    d["loglik"] = f.loglik;
    d["penalized_loglik"] = f.penalized_loglik;
    d["n_effective_params"] = f.n_effective_params;
    d["pruned_patterns"] = f.pruned_patterns;
    d["lambda"] = f.penalty.lambda1;
    d["converged"] = f.converged;
    d["iterations"] = f.iterations;
    d["warnings"] = f.warnings;
    return d;
}

}  // namespace

PYBIND11_MODULE(_gfmmr, m) {
    m.doc() = "Generalized finite mixtures of multivariate regressions";
    m.attr("__version__") = kLibraryVersion;

    static py::exception<Error> base(m, "GfmmrError");
    static py::exception<UsageError> usage(m, "UsageError", base.ptr());
    static py::exception<DataError> data(m, "DataError", base.ptr());
    static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
    static py::exception<ConvergenceError> convergence(m, "ConvergenceError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            switch (e.kind()) {
                case ErrorKind::usage: PyErr_SetString(usage.ptr(), e.what()); break;
                case ErrorKind::data: PyErr_SetString(data.ptr(), e.what()); break;
                case ErrorKind::numerical: PyErr_SetString(numerical.ptr(), e.what()); break;
                case ErrorKind::convergence: PyErr_SetString(convergence.ptr(), e.what()); break;
            }
        }
    });

    m.def("pattern_labels", [](int K) { return enumerate_patterns(K).labels(); }, py::arg("K"),
          "Labels of all 2^K - 1 overlap patterns in canonical order.");

    m.def(
        "simulate",
        [](int n, int p, int q, int K, const std::string& scenario, std::uint64_t seed) {
            SimSpec s;
            s.n = n;
            s.p = p;
            s.q = q;
            s.K = K;
            s.scenario = scenario_from_string(scenario);
            s.seed = seed;
            const SimInstance inst = simulate(s);
            py::dict d;
            d["X"] = inst.data.X;
            d["Y"] = inst.data.Y;
            d["B"] = inst.true_B;
            d["P"] = MatrixXd(inst.true_P.cast<double>());
            d["pattern"] = inst.true_pattern;
            d["noise"] = inst.noise;
            return d;
        },
        py::arg("n") = 150, py::arg("p") = 15, py::arg("q") = 3, py::arg("K") = 3, py::arg("scenario") = "partition",
        py::arg("seed") = 0);

    m.def(
        "fit",
        [](const MatrixXd& X, const MatrixXd& Y, int K, const std::string& penalty, std::vector<double> lambda,
           std::vector<double> lambda2, double rel_tol, int max_iter, int restarts, bool coupled, std::uint64_t seed,
           bool singletons, bool cv, int workers, const std::string& init) {
            const Dataset d = make_dataset(X, Y);
            const EmConfig c = make_config(K, penalty, lambda, lambda2, rel_tol, max_iter, restarts, coupled, seed,
                                           singletons, cv, workers, init);
            FitResult f;
            {
                py::gil_scoped_release release;
                f = fit_em(d, c);
            }
            return fit_to_dict(f);
        },
        py::arg("X"), py::arg("Y"), py::arg("K") = 3, py::arg("penalty") = "none",
        py::arg("lambda_") = std::vector<double>{0.0}, py::arg("lambda2") = std::vector<double>{0.0},
        py::arg("rel_tol") = 1e-5, py::arg("max_iter") = 500, py::arg("restarts") = 5, py::arg("coupled") = false,
        py::arg("seed") = 0, py::arg("singletons") = false, py::arg("cv") = false, py::arg("workers") = 1,
        py::arg("init") = "kmeans", "Penalized EM fit of the generalized mixture; returns a dict of estimates.");

    m.def(
        "e_step",
        [](const std::vector<MatrixXd>& B, const MatrixXd& sigma, const VectorXd& pi, const MatrixXd& X,
           const MatrixXd& Y) {
            ModelParams p{B, sigma, pi};
            return e_step(p, make_dataset(X, Y)).Z;
        },
        py::arg("B"), py::arg("sigma"), py::arg("pi"), py::arg("X"), py::arg("Y"));

    m.def(
        "log_likelihood",
        [](const std::vector<MatrixXd>& B, const MatrixXd& sigma, const VectorXd& pi, const MatrixXd& X,
           const MatrixXd& Y) {
            ModelParams p{B, sigma, pi};
            return log_likelihood(p, make_dataset(X, Y));
        },
        py::arg("B"), py::arg("sigma"), py::arg("pi"), py::arg("X"), py::arg("Y"));

    m.def(
        "select_k",
        [](const MatrixXd& X, const MatrixXd& Y, const std::vector<int>& candidates, const std::string& ic,
           std::uint64_t seed, int restarts) {
            EmConfig c;
            c.seed = seed;
            c.n_restarts = restarts;
            IcConfig icc;
            icc.K_candidates = candidates;
            icc.kind = ic_kind_from_string(ic);
            const Dataset d = make_dataset(X, Y);
            SelectKResult r;
            {
                py::gil_scoped_release release;
                r = select_K(d, c, icc);
            }
            py::list table;
            for (const auto& row : r.table) {
                py::dict e;
                e["K"] = row.K;
                e["ok"] = row.ok;
                e["loglik"] = row.loglik;
                e["n_params"] = row.n_params;
                e["ic"] = row.ic;
                table.append(e);
            }
            py::dict out;
            out["K"] = r.K;
            out["table"] = table;
            return out;
        },
        py::arg("X"), py::arg("Y"), py::arg("candidates") = std::vector<int>{1, 2, 3}, py::arg("ic") = "bic",
        py::arg("seed") = 0, py::arg("restarts") = 5);

    m.def(
        "plaid",
        [](const MatrixXd& X, const MatrixXd& Y, int K, bool joint, double lambda, double tau, std::uint64_t seed) {
            PlaidConfig c;
            c.K = K;
            c.lambda = lambda;
            c.tau = tau;
            c.seed = seed;
            const Dataset d = make_dataset(X, Y);
            const PlaidFit f = joint ? plaid_fit_joint(d, c) : plaid_fit_sequential(d, c);
            py::dict out;
            std::vector<MatrixXd> B;
            for (const auto& l : f.layers) B.push_back(l.B);
            out["B"] = B;
            out["clusters"] = f.clusters();
            out["Q"] = f.Q_value;
            out["residual_sse"] = f.residual_sse;
            return out;
        },
        py::arg("X"), py::arg("Y"), py::arg("K") = 3, py::arg("joint") = false, py::arg("lambda_") = 1.0,
        py::arg("tau") = 0.6, py::arg("seed") = 0);

    m.def(
        "match_clusters",
        [](const ClusterSet& target, const ClusterSet& retrieved) {
            const MatchReport r = match_clusters(target, retrieved);
            py::dict out;
            out["pairing"] = r.pairing;
            out["mean_specificity"] = r.mean_specificity;
            out["mean_sensitivity"] = r.mean_sensitivity;
            out["mean_f1"] = r.mean_f1;
            return out;
        },
        py::arg("target"), py::arg("retrieved"));

    m.def(
        "quality",
        [](const std::vector<int>& a, const std::vector<int>& b) {
            const Quality q = quality(a, b);
            return py::make_tuple(q.specificity, q.sensitivity, q.f1);
        },
        py::arg("target"), py::arg("retrieved"));

    m.def(
        "affinity_propagation",
        [](const MatrixXd& S, py::object preference, double damping, int max_iter, int stable_iters) {
            SimilarityMatrix sim;
            sim.S = S;
            sim.set_preference(preference.is_none() ? median_off_diagonal(S) : preference.cast<double>());
            ApOptions o{damping, max_iter, stable_iters};
            const ApResult r = affinity_propagation(sim, o);
            return py::make_tuple(r.exemplar, r.converged);
        },
        py::arg("S"), py::arg("preference") = py::none(), py::arg("damping") = 0.9, py::arg("max_iter") = 1000,
        py::arg("stable_iters") = 50);

    m.def(
        "pipeline",
        [](const MatrixXd& X, const MatrixXd& Y, int K, std::uint64_t seed) {
            PipelineConfig c;
            c.em.K = K;
            c.em.penalty = PenaltyConfig::none(K);
            c.em.seed = seed;
            const Dataset d = make_dataset(X, Y);
            PipelineResult r;
            {
                py::gil_scoped_release release;
                r = run_pipeline(d, c);
            }
            return r.level2_groups;
        },
        py::arg("X"), py::arg("Y"), py::arg("K") = 3, py::arg("seed") = 0,
        "Response groups found by the three-step pipeline.");
}
