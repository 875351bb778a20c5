#include "gfmmr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "gfmmr/errors.hpp"
#include "gfmmr/parallel.hpp"

namespace gfmmr {

namespace fs = std::filesystem;

namespace {

std::string join_names(const Dataset& data, const std::vector<int>& cols) {
    std::string out;
    for (int c : cols) {
        if (!out.empty()) out += ", ";
        out += data.response_names.empty() ? "y" + std::to_string(c + 1)
                                           : data.response_names[static_cast<std::size_t>(c)];
    }
    return out;
}

[[noreturn]] void rethrow_step(const Error& e, int step, const std::string& names) {
    throw Error(e.kind(), "pipeline step " + std::to_string(step) + " (" + names + "): " + e.what());
}

std::string matrix_bytes(const MatrixXd& M) {
    std::string s(reinterpret_cast<const char*>(M.data()), static_cast<std::size_t>(M.size()) * sizeof(double));
    s += std::to_string(M.rows()) + "x" + std::to_string(M.cols());
    return s;
}

// Z of a K_small fit expressed over the patterns of K_big components.
MatrixXd embed_patterns(const MatrixXd& Z, int K_small, int K_big) {
    if (K_small == K_big) return Z;
    const PatternSet small(K_small), big(K_big);
    MatrixXd out = MatrixXd::Zero(Z.rows(), static_cast<Eigen::Index>(big.size()));
    for (std::size_t t = 0; t < small.size(); ++t)
        out.col(big.index_of(small[t])) = Z.col(static_cast<Eigen::Index>(t));
    return out;
}

int K_of(const MatrixXd& Z) {
    int K = 1;
    while ((1 << K) - 1 < Z.cols()) ++K;
    if ((1 << K) - 1 != Z.cols()) throw ShapeError("responsibility width is not 2^K - 1");
    return K;
}

template <typename Score>
std::vector<int> best_permutation(int K, Score&& score) {
    std::vector<int> perm(static_cast<std::size_t>(K));
    std::iota(perm.begin(), perm.end(), 0);
    if (K > 6) return perm;
    std::vector<int> best = perm;
    double best_v = std::numeric_limits<double>::infinity();
    do {
        const double v = score(perm);
        if (v < best_v) {
            best_v = v;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

FitResult fit_one(const Dataset& data, const PipelineConfig& config) {
    if (config.select_k) {
        SelectKResult sel = select_K(data, config.em, *config.select_k);
        return std::move(*sel.best_fit);
    }
    return fit_em(data, config.em);
}

std::map<std::string, std::string> echo(const PipelineConfig& config) {
    return {{"pipeline.step1_key", config.step1_key()},
            {"pipeline.level1_preference", config.level1.str()},
            {"pipeline.level2_preference", config.level2.str()}};
}

std::vector<int> apc_labels(const MatrixXd& S, const Preference& pref, const ApOptions& ap) {
    SimilarityMatrix sim;
    sim.S = S;
    sim.set_preference(pref.median ? median_off_diagonal(S) : pref.value);
    return affinity_propagation(sim, ap).labels();
}

}  // namespace

Preference Preference::parse(const std::string& s) {
    if (s == "median") return {true, 0.0};
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw UsageError("");
        return {false, v};
    } catch (const std::exception&) {
        throw UsageError("preference must be 'median' or a number: " + s);
    }
}

std::string Preference::str() const {
    if (median) return "median";
    std::ostringstream os;
    os.precision(17);
    os << value;
    return os.str();
}

void PipelineConfig::validate() const {
    em.validate();
    if (select_k) select_k->validate();
    if (workers < 1) throw UsageError("workers must be >= 1");
}

std::string PipelineConfig::step1_key() const {
    std::ostringstream os;
    os.precision(17);
    os << "K=" << em.K << ";penalty=" << to_string(em.penalty.kind);
    for (double v : em.penalty.lambda1) os << ',' << v;
    os << ';';
    for (double v : em.penalty.lambda2) os << ',' << v;
    os << ";unpen=";
    for (int v : em.penalty.unpenalized) os << v << ',';
    os << ";rel_tol=" << em.rel_tol << ";max_iter=" << em.max_iter << ";prune=" << em.prune_threshold
       << ";restarts=" << em.n_restarts << ";coupled=" << em.coupled << ";seed=" << em.seed
       << ";jitter=" << em.sigma_jitter << ";scope=" << static_cast<int>(em.scope)
       << ";diag=" << em.diagonal_sigma << ";init=" << to_string(em.init) << ";cv_every=" << em.cv_every;
    if (em.cv_grid) {
        os << ";cv=" << em.cv_grid->n_points << ',' << em.cv_grid->min_ratio << ',' << em.cv_grid->n_folds << ','
           << em.cv_grid->seed;
        for (double v : em.cv_grid->values) os << ',' << v;
    }
    if (select_k) {
        os << ";select_k=" << to_string(select_k->kind) << ',' << select_k->custom_an;
        for (int K : select_k->K_candidates) os << ',' << K;
    }
    return os.str();
}

MatrixXd permute_patterns(const MatrixXd& Z, const std::vector<int>& perm, int K) {
    const PatternSet patterns(K);
    MatrixXd out(Z.rows(), Z.cols());
    for (std::size_t t = 0; t < patterns.size(); ++t) {
        std::vector<int> old_members;
        for (int j : patterns[t].members()) old_members.push_back(perm[static_cast<std::size_t>(j)]);
        out.col(static_cast<Eigen::Index>(t)) = Z.col(patterns.index_of(OverlapPattern::from_members(old_members)));
    }
    return out;
}

std::vector<int> align_components(const MatrixXd& Za, const MatrixXd& Zb, int K) {
    return best_permutation(K, [&](const std::vector<int>& perm) {
        return (Za - permute_patterns(Zb, perm, K)).squaredNorm();
    });
}

double responsibility_distance(const MatrixXd& Za_in, const MatrixXd& Zb_in, int) {
    if (Za_in.rows() != Zb_in.rows()) throw ShapeError("responsibility matrices differ in row count");
    const int Ka = K_of(Za_in), Kb = K_of(Zb_in);
    const int K = std::max(Ka, Kb);
    const MatrixXd Za = embed_patterns(Za_in, Ka, K);
    const MatrixXd Zb = embed_patterns(Zb_in, Kb, K);
    const auto perm = align_components(Za, Zb, K);
    return (Za - permute_patterns(Zb, perm, K)).squaredNorm() / static_cast<double>(Za.rows());
}

double coefficient_distance(const std::vector<MatrixXd>& Ba_in, const std::vector<MatrixXd>& Bb_in) {
    if (Ba_in.empty() || Bb_in.empty()) throw ShapeError("empty coefficient list");
    const std::size_t K = std::max(Ba_in.size(), Bb_in.size());
    const Eigen::Index p = Ba_in.front().rows(), q = Ba_in.front().cols();
    std::vector<MatrixXd> Ba = Ba_in, Bb = Bb_in;
    Ba.resize(K, MatrixXd::Zero(p, q));
    Bb.resize(K, MatrixXd::Zero(p, q));
    double norm = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (Bb[k].rows() != p || Bb[k].cols() != q) throw ShapeError("coefficient matrices differ in shape");
        norm += Ba[k].squaredNorm() + Bb[k].squaredNorm();
    }
    norm *= 0.5;
    if (!(norm > 0.0)) return 0.0;
    const auto perm = best_permutation(static_cast<int>(K), [&](const std::vector<int>& pm) {
        double d = 0.0;
        for (std::size_t k = 0; k < K; ++k) d += (Ba[k] - Bb[static_cast<std::size_t>(pm[k])]).squaredNorm();
        return d;
    });
    double d = 0.0;
    for (std::size_t k = 0; k < K; ++k) d += (Ba[k] - Bb[static_cast<std::size_t>(perm[k])]).squaredNorm();
    return d / norm;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config) {
    data.validate();
    config.validate();
    const auto q = static_cast<std::size_t>(data.q());
    PipelineResult out;
    out.step1.resize(q);
    out.step1_cached.assign(q, false);

    // Step 1: one fit per response.
    const std::string key = config.step1_key();
    std::vector<std::string> cache_paths(q);
    if (!config.cache_dir.empty()) {
        fs::create_directories(config.cache_dir);
        const std::string x_bytes = matrix_bytes(data.X);
        for (std::size_t c = 0; c < q; ++c) {
            const std::string h = fnv1a_hex(key + "|" + x_bytes + "|" + matrix_bytes(data.Y.col(static_cast<Eigen::Index>(c))));
            cache_paths[c] = (fs::path(config.cache_dir) / ("step1_" + h + ".json")).string();
        }
    }
    parallel_for(q, config.workers, [&](std::size_t c) {
        const std::vector<int> cols{static_cast<int>(c)};
        try {
            if (!cache_paths[c].empty() && fs::exists(cache_paths[c])) {
                out.step1[c] = load_bundle(cache_paths[c]);
                out.step1_cached[c] = true;
                return;
            }
            const Dataset sub = data.select_responses(cols);
            out.step1[c] = bundle_from_fit(fit_one(sub, config), sub, config.em.seed, echo(config));
        } catch (const Error& e) {
            rethrow_step(e, 1, join_names(data, cols));
        }
    });
    // Cache writes happen serially after the parallel section.
    for (std::size_t c = 0; c < q; ++c)
        if (!cache_paths[c].empty() && !out.step1_cached[c]) save_bundle(cache_paths[c], out.step1[c]);

    // Step 2: level 1 on responsibilities, level 2 on coefficients.
    std::vector<int> all(q);
    std::iota(all.begin(), all.end(), 0);
    try {
        out.level1_similarity = MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
        for (std::size_t a = 0; a < q; ++a)
            for (std::size_t b = a + 1; b < q; ++b) {
                const double d = responsibility_distance(out.step1[a].resp.Z, out.step1[b].resp.Z, 0);
                out.level1_similarity(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = -d;
                out.level1_similarity(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = -d;
            }
        out.level1_labels = q > 1 ? apc_labels(out.level1_similarity, config.level1, config.ap) : std::vector<int>(q, 0);
        const int n_level1 = *std::max_element(out.level1_labels.begin(), out.level1_labels.end()) + 1;
        for (int g = 0; g < n_level1; ++g) {
            std::vector<int> members;
            for (std::size_t c = 0; c < q; ++c)
                if (out.level1_labels[c] == g) members.push_back(static_cast<int>(c));
            if (members.size() < 2) {
                out.level2_groups.push_back(members);
                continue;
            }
            const auto m = static_cast<Eigen::Index>(members.size());
            MatrixXd S = MatrixXd::Zero(m, m);
            for (Eigen::Index a = 0; a < m; ++a)
                for (Eigen::Index b = a + 1; b < m; ++b)
                    S(a, b) = S(b, a) = -coefficient_distance(out.step1[static_cast<std::size_t>(members[static_cast<std::size_t>(a)])].params.B,
                                                              out.step1[static_cast<std::size_t>(members[static_cast<std::size_t>(b)])].params.B);
            const std::vector<int> sub = apc_labels(S, config.level2, config.ap);
            const int n_sub = *std::max_element(sub.begin(), sub.end()) + 1;
            for (int h = 0; h < n_sub; ++h) {
                std::vector<int> grp;
                for (std::size_t i = 0; i < members.size(); ++i)
                    if (sub[i] == h) grp.push_back(members[i]);
                out.level2_groups.push_back(grp);
            }
        }
    } catch (const Error& e) {
        rethrow_step(e, 2, join_names(data, all));
    }
    std::sort(out.level2_groups.begin(), out.level2_groups.end());

    // Step 3: joint fit of every group.
    out.group_fits.resize(out.level2_groups.size());
    parallel_for(out.level2_groups.size(), config.workers, [&](std::size_t g) {
        const auto& grp = out.level2_groups[g];
        if (grp.size() == 1) {
            out.group_fits[g] = out.step1[static_cast<std::size_t>(grp.front())];
            return;
        }
        try {
            const Dataset sub = data.select_responses(grp);
            out.group_fits[g] = bundle_from_fit(fit_one(sub, config), sub, config.em.seed, echo(config));
        } catch (const Error& e) {
            rethrow_step(e, 3, join_names(data, grp));
        }
    });
    return out;
}

std::string cluster_summary_csv(const ResultBundle& bundle, const Dataset& data) {
    std::vector<int> cols;
    for (const auto& name : bundle.response_names) {
        const auto it = std::find(data.response_names.begin(), data.response_names.end(), name);
        if (it == data.response_names.end()) throw DataError("response " + name + " not found in the data");
        cols.push_back(static_cast<int>(it - data.response_names.begin()));
    }
    std::ostringstream os;
    os.precision(17);
    os << "kind,cluster,n_rows,response,mean,median\n";
    const PatternSet patterns(bundle.params.K());
    auto emit = [&](const std::string& kind, const std::string& label, const std::vector<Eigen::Index>& rows) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            std::vector<double> v;
            for (Eigen::Index i : rows) v.push_back(data.Y(i, cols[j]));
            os << kind << ',' << label << ',' << rows.size() << ',' << bundle.response_names[j] << ',';
            if (!v.empty()) os << std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()) << ','
                               << quartiles(v).median;
            else os << ',';
            os << '\n';
        }
    };
    for (int k = 0; k < bundle.params.K(); ++k) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < bundle.hard.rows(); ++i)
            if (bundle.hard(i, k) != 0) rows.push_back(i);
        emit("component", std::to_string(k + 1), rows);
    }
    for (std::size_t t = 0; t < patterns.size(); ++t) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < bundle.hard_pattern.size(); ++i)
            if (bundle.hard_pattern[i] == static_cast<int>(t)) rows.push_back(static_cast<Eigen::Index>(i));
        emit("pattern", patterns[t].label(), rows);
    }
    return os.str();
}

void write_pipeline_outputs(const std::string& dir, const PipelineResult& result, const Dataset& data) {
    const fs::path root(dir);
    fs::create_directories(root / "step1");
    for (std::size_t c = 0; c < result.step1.size(); ++c) {
        const std::string name = data.response_names.empty() ? "y" + std::to_string(c + 1) : data.response_names[c];
        save_bundle((root / "step1" / (name + ".json")).string(), result.step1[c]);
    }
    std::ostringstream groups;
    groups << "response,level1,group\n";
    for (std::size_t c = 0; c < result.level1_labels.size(); ++c) {
        int g = -1;
        for (std::size_t h = 0; h < result.level2_groups.size(); ++h)
            if (std::find(result.level2_groups[h].begin(), result.level2_groups[h].end(), static_cast<int>(c)) !=
                result.level2_groups[h].end())
                g = static_cast<int>(h);
        groups << (data.response_names.empty() ? "y" + std::to_string(c + 1) : data.response_names[c]) << ','
               << result.level1_labels[c] + 1 << ',' << g + 1 << '\n';
    }
    write_file((root / "groups.csv").string(), groups.str());
    std::vector<std::string> names;
    for (int i = 0; i < static_cast<int>(result.level1_labels.size()); ++i)
        names.push_back(data.response_names.empty() ? "y" + std::to_string(i + 1) : data.response_names[static_cast<std::size_t>(i)]);
    write_matrix_csv((root / "level1_similarity.csv").string(), result.level1_similarity, names);

    for (std::size_t g = 0; g < result.group_fits.size(); ++g) {
        const fs::path gdir = root / ("group_" + std::to_string(g + 1));
        const ResultBundle& b = result.group_fits[g];
        save_bundle((gdir / "bundle.json").string(), b);
        write_matrix_csv((gdir / "responsibilities.csv").string(), b.resp.Z, b.pattern_labels);
        for (int k = 0; k < b.params.K(); ++k)
            write_matrix_csv((gdir / ("B_" + std::to_string(k + 1) + ".csv")).string(), b.params.B[static_cast<std::size_t>(k)],
                             b.response_names);
        write_file((gdir / "cluster_summary.csv").string(), cluster_summary_csv(b, data));
    }
}

ResponseQuartiles quartiles(std::vector<double> v) {
    if (v.empty()) throw DataError("quartiles of an empty sample");
    std::sort(v.begin(), v.end());
    auto at = [&](double prob) {
        const double h = (static_cast<double>(v.size()) - 1.0) * prob;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

CrossPrediction cross_predict(const ResultBundle& bundle, const ClusterRef& cluster,
                              const std::vector<CoefficientRef>& choice, const Dataset& data) {
    if (choice.empty()) throw UsageError("cross_predict needs at least one coefficient matrix");
    if (bundle.hard.rows() != data.n()) throw ShapeError("bundle rows differ from the data rows");
    const Eigen::Index p = data.p();
    const ResultBundle* first = choice.front().bundle;
    if (first == nullptr || first->params.B.empty()) throw UsageError("coefficient reference without a bundle");
    const Eigen::Index q = first->params.q();
    MatrixXd Bsum = MatrixXd::Zero(p, q);
    for (const auto& ref : choice) {
        if (ref.bundle == nullptr) throw UsageError("coefficient reference without a bundle");
        if (ref.component < 0 || ref.component >= ref.bundle->params.K())
            throw UsageError("component " + std::to_string(ref.component + 1) + " out of range");
        const MatrixXd& B = ref.bundle->params.B[static_cast<std::size_t>(ref.component)];
        if (B.rows() != p || B.cols() != q) throw ShapeError("coefficient matrices differ in shape");
        Bsum += B;
    }

    CrossPrediction out;
    if (cluster.kind == ClusterRef::Kind::component) {
        if (cluster.index < 0 || cluster.index >= bundle.hard.cols()) throw UsageError("cluster index out of range");
        for (Eigen::Index i = 0; i < bundle.hard.rows(); ++i)
            if (bundle.hard(i, cluster.index) != 0) out.rows.push_back(static_cast<int>(i));
    } else {
        for (std::size_t i = 0; i < bundle.hard_pattern.size(); ++i)
            if (bundle.hard_pattern[i] == cluster.index) out.rows.push_back(static_cast<int>(i));
    }
    if (out.rows.empty()) throw DataError("cluster has no hard-assigned rows");

    MatrixXd Xs(static_cast<Eigen::Index>(out.rows.size()), p);
    for (std::size_t r = 0; r < out.rows.size(); ++r) Xs.row(static_cast<Eigen::Index>(r)) = data.X.row(out.rows[r]);
    out.predicted = Xs * Bsum;
    for (Eigen::Index m = 0; m < q; ++m) {
        std::vector<double> v(out.predicted.col(m).data(), out.predicted.col(m).data() + out.predicted.rows());
        out.quartiles.push_back(quartiles(std::move(v)));
    }
    return out;
}

}  // namespace gfmmr
