#include "gfmmr/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "gfmmr/errors.hpp"

namespace gfmmr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "N/A";
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

json matrix_json(const MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
    const auto n = static_cast<Eigen::Index>(j.size());
    const Eigen::Index m = n > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
    MatrixXd M(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const json& r = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(r.size()) != m) throw DataError("ragged matrix in bundle");
        for (Eigen::Index c = 0; c < m; ++c) M(i, c) = r.at(static_cast<std::size_t>(c)).get<double>();
    }
    return M;
}

json int_matrix_json(const MembershipMatrix& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

MembershipMatrix int_matrix_from_json(const json& j) {
    const auto n = static_cast<Eigen::Index>(j.size());
    const Eigen::Index m = n > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    MembershipMatrix M(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < m; ++c)
            M(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<int>();
    return M;
}

VectorXd vector_from_json(const json& j) {
    VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

json vector_json(const VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

}  // namespace

// ------------------------------------------------------------------- CSV

CsvMatrix parse_csv(const std::string& text, const std::string& role, const CsvReadOptions& opts) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool have_header = false;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (!have_header) {
            header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != header.size())
            throw DataError(role + ": ragged row at line " + std::to_string(line_no) + " (" +
                            std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()) + ")");
        rows.push_back(std::move(cells));
    }
    if (!have_header) throw DataError(role + ": empty file");
    if (rows.empty()) throw DataError(role + ": no data rows");
    const std::size_t offset = opts.row_ids ? 1 : 0;
    if (header.size() <= offset) throw DataError(role + ": no value columns");

    CsvMatrix out;
    out.names.assign(header.begin() + static_cast<std::ptrdiff_t>(offset), header.end());
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(out.names.size());
    out.values.resize(n, m);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> missing;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        if (opts.row_ids) out.row_ids.push_back(r[0]);
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::string& cell = r[static_cast<std::size_t>(j) + offset];
            if (is_missing(cell)) {
                missing.emplace_back(i, j);
                out.values(i, j) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            double v = 0.0;
            const char* first = cell.data();
            const char* last = first + cell.size();
            if (*first == '+') ++first;
            const auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
                throw DataError(role + ": non-numeric cell '" + cell + "' at row " + std::to_string(i + 1) +
                                ", column " + out.names[static_cast<std::size_t>(j)]);
            out.values(i, j) = v;
        }
    }
    if (!missing.empty()) {
        if (!opts.mean_impute) {
            const auto [i, j] = missing.front();
            throw DataError(role + ": missing value at row " + std::to_string(i + 1) + ", column " +
                            out.names[static_cast<std::size_t>(j)] + " (" + std::to_string(missing.size()) +
                            " missing cells; use mean imputation to fill them)");
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            double sum = 0.0;
            int count = 0;
            for (Eigen::Index i = 0; i < n; ++i)
                if (!std::isnan(out.values(i, j))) {
                    sum += out.values(i, j);
                    ++count;
                }
            if (count == 0)
                throw DataError(role + ": column " + out.names[static_cast<std::size_t>(j)] + " has no observed values");
            const double mean = sum / count;
            for (Eigen::Index i = 0; i < n; ++i)
                if (std::isnan(out.values(i, j))) {
                    out.values(i, j) = mean;
                    out.imputed.push_back({i, j, mean});
                }
        }
    }
    return out;
}

CsvMatrix ingest_csv(const std::string& path, const std::string& role, const CsvReadOptions& opts) {
    return parse_csv(read_file(path), role + " (" + path + ")", opts);
}

std::string LoadReport::summary() const {
    std::ostringstream os;
    os << "dropped rows: " << dropped_rows.size() << "\n";
    os << "imputed predictor cells: " << imputed_x.size() << "\n";
    os << "imputed response cells: " << imputed_y.size() << "\n";
    for (const auto& c : imputed_x) os << "  X row " << c.row + 1 << " col " << c.col + 1 << " <- " << c.value << "\n";
    for (const auto& c : imputed_y) os << "  Y row " << c.row + 1 << " col " << c.col + 1 << " <- " << c.value << "\n";
    return os.str();
}

Dataset load_dataset(const std::string& x_path, const std::string& y_path, const LoadOptions& opts,
                     LoadReport* report) {
    if (!(opts.min_observed_fraction >= 0.0 && opts.min_observed_fraction <= 1.0))
        throw UsageError("min observed fraction must be in [0, 1]");
    CsvReadOptions keep = opts.csv;
    keep.mean_impute = true;  // parse with NaN placeholders; policy applied below
    CsvReadOptions strict = opts.csv;

    // Row filtering looks at the raw response missingness first.
    CsvMatrix y_raw;
    {
        const std::string text = read_file(y_path);
        CsvReadOptions probe = opts.csv;
        probe.mean_impute = false;
        try {
            y_raw = parse_csv(text, "responses (" + y_path + ")", probe);
        } catch (const DataError&) {
            if (opts.min_observed_fraction <= 0.0 && !opts.csv.mean_impute) throw;
            y_raw = parse_csv(text, "responses (" + y_path + ")", keep);
            for (const auto& c : y_raw.imputed) y_raw.values(c.row, c.col) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    CsvMatrix x = ingest_csv(x_path, "predictors", strict);
    if (x.values.rows() != y_raw.values.rows())
        throw ShapeError("predictors have " + std::to_string(x.values.rows()) + " rows, responses have " +
                         std::to_string(y_raw.values.rows()));

    std::vector<Eigen::Index> kept;
    LoadReport rep;
    const auto q = static_cast<double>(y_raw.values.cols());
    for (Eigen::Index i = 0; i < y_raw.values.rows(); ++i) {
        const double observed = static_cast<double>((y_raw.values.row(i).array() == y_raw.values.row(i).array()).count());
        if (observed / q < opts.min_observed_fraction)
            rep.dropped_rows.push_back(i);
        else
            kept.push_back(i);
    }
    if (kept.empty()) throw DataError("every row was removed by the observed-fraction filter");

    MatrixXd Y(static_cast<Eigen::Index>(kept.size()), y_raw.values.cols());
    MatrixXd X(static_cast<Eigen::Index>(kept.size()), x.values.cols());
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < kept.size(); ++r) {
        Y.row(static_cast<Eigen::Index>(r)) = y_raw.values.row(kept[r]);
        X.row(static_cast<Eigen::Index>(r)) = x.values.row(kept[r]);
        if (!x.row_ids.empty()) ids.push_back(x.row_ids[static_cast<std::size_t>(kept[r])]);
    }
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index i = 0; i < Y.rows(); ++i)
            if (!std::isnan(Y(i, j))) {
                sum += Y(i, j);
                ++count;
            }
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
            if (!std::isnan(Y(i, j))) continue;
            if (!opts.csv.mean_impute)
                throw DataError("responses (" + y_path + "): missing value at row " + std::to_string(kept[static_cast<std::size_t>(i)] + 1) +
                                ", column " + y_raw.names[static_cast<std::size_t>(j)]);
            if (count == 0) throw DataError("response column " + y_raw.names[static_cast<std::size_t>(j)] + " has no observed values");
            Y(i, j) = sum / count;
            rep.imputed_y.push_back({i, j, Y(i, j)});
        }
    }
    rep.imputed_x = x.imputed;

    Dataset data(std::move(X), std::move(Y));
    data.predictor_names = x.names;
    data.response_names = y_raw.names;
    data.row_ids = std::move(ids);
    if (report) *report = std::move(rep);
    return data;
}

std::string matrix_csv(const MatrixXd& M, const std::vector<std::string>& header) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
    if (!header.empty()) os << "\n";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? "," : "") << M(i, j);
        os << "\n";
    }
    return os.str();
}

void write_matrix_csv(const std::string& path, const MatrixXd& M, const std::vector<std::string>& header) {
    write_file(path, matrix_csv(M, header));
}

// ---------------------------------------------------------------- bundle

ResultBundle bundle_from_fit(const FitResult& fit, const Dataset& data, std::uint64_t seed,
                             std::map<std::string, std::string> config) {
    ResultBundle b;
    b.seed = seed;
    b.params = fit.params;
    b.resp = fit.resp;
    b.hard = fit.hard;
    b.hard_pattern = fit.hard_pattern;
    b.loglik_trace = fit.loglik_trace;
    b.loglik = fit.loglik;
    b.penalized_loglik = fit.penalized_loglik;
    b.n_effective_params = fit.n_effective_params;
    b.pattern_labels = PatternSet(fit.params.K()).labels();
    b.pruned_patterns = fit.pruned_patterns;
    b.predictor_names = data.predictor_names;
    b.response_names = data.response_names;
    b.converged = fit.converged;
    b.iterations = fit.iterations;
    b.warnings = fit.warnings;
    b.config = std::move(config);
    return b;
}

std::string bundle_to_string(const ResultBundle& b) {
    json j;
    j["schema"] = b.schema;
    j["version"] = b.version;
    j["seed"] = b.seed;
    j["K"] = b.params.K();
    j["pattern_labels"] = b.pattern_labels;
    json Bs = json::array();
    for (const auto& B : b.params.B) Bs.push_back(matrix_json(B));
    j["B"] = std::move(Bs);
    j["sigma"] = matrix_json(b.params.sigma);
    j["pi"] = vector_json(b.params.pi);
    j["responsibilities"] = matrix_json(b.resp.Z);
    j["hard_memberships"] = int_matrix_json(b.hard);
    j["hard_pattern"] = b.hard_pattern;
    j["loglik_trace"] = b.loglik_trace;
    j["loglik"] = b.loglik;
    j["penalized_loglik"] = b.penalized_loglik;
    j["n_effective_params"] = b.n_effective_params;
    j["pruned_patterns"] = b.pruned_patterns;
    j["predictor_names"] = b.predictor_names;
    j["response_names"] = b.response_names;
    j["converged"] = b.converged;
    j["iterations"] = b.iterations;
    j["warnings"] = b.warnings;
    j["config"] = b.config;
    return j.dump(1) + "\n";
}

ResultBundle bundle_from_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("result bundle is not valid JSON: ") + e.what());
    }
    try {
        ResultBundle b;
        b.schema = j.at("schema").get<std::string>();
        if (b.schema != kBundleSchema) throw DataError("unsupported bundle schema: " + b.schema);
        b.version = j.at("version").get<std::string>();
        b.seed = j.at("seed").get<std::uint64_t>();
        b.pattern_labels = j.at("pattern_labels").get<std::vector<std::string>>();
        for (const auto& B : j.at("B")) b.params.B.push_back(matrix_from_json(B));
        b.params.sigma = matrix_from_json(j.at("sigma"));
        b.params.pi = vector_from_json(j.at("pi"));
        b.resp.Z = matrix_from_json(j.at("responsibilities"), static_cast<Eigen::Index>(b.pattern_labels.size()));
        b.hard = int_matrix_from_json(j.at("hard_memberships"));
        b.hard_pattern = j.at("hard_pattern").get<std::vector<int>>();
        b.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
        b.loglik = j.at("loglik").get<double>();
        b.penalized_loglik = j.at("penalized_loglik").get<double>();
        b.n_effective_params = j.at("n_effective_params").get<int>();
        b.pruned_patterns = j.at("pruned_patterns").get<std::vector<std::string>>();
        b.predictor_names = j.at("predictor_names").get<std::vector<std::string>>();
        b.response_names = j.at("response_names").get<std::vector<std::string>>();
        b.converged = j.at("converged").get<bool>();
        b.iterations = j.at("iterations").get<int>();
        b.warnings = j.at("warnings").get<std::vector<std::string>>();
        b.config = j.at("config").get<std::map<std::string, std::string>>();
        if (j.at("K").get<int>() != b.params.K()) throw DataError("bundle K does not match its coefficient list");
        b.params.validate();
        return b;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed result bundle: ") + e.what());
    }
}

void save_bundle(const std::string& path, const ResultBundle& bundle) { write_file(path, bundle_to_string(bundle)); }

ResultBundle load_bundle(const std::string& path) { return bundle_from_string(read_file(path)); }

// ------------------------------------------------------------ simulation

void save_sim_instance(const std::string& dir, const SimInstance& inst, const SimSpec& spec) {
    fs::create_directories(dir);
    write_matrix_csv((fs::path(dir) / "X.csv").string(), inst.data.X, inst.data.predictor_names);
    write_matrix_csv((fs::path(dir) / "Y.csv").string(), inst.data.Y, inst.data.response_names);
    json j;
    j["schema"] = "gfmmr.truth/1";
    json Bs = json::array();
    for (const auto& B : inst.true_B) Bs.push_back(matrix_json(B));
    j["true_B"] = std::move(Bs);
    j["true_P"] = int_matrix_json(inst.true_P);
    j["true_pattern"] = inst.true_pattern;
    const PatternSet patterns(static_cast<int>(inst.true_B.size()));
    std::vector<std::string> labels;
    for (int t : inst.true_pattern) labels.push_back(patterns[t].label());
    j["true_pattern_labels"] = labels;
    j["noise"] = matrix_json(inst.noise);
    json s;
    s["n"] = spec.n;
    s["p"] = spec.p;
    s["q"] = spec.q;
    s["K"] = spec.K;
    s["rho_x"] = spec.rho_x;
    s["rho_e"] = spec.rho_e;
    s["p1"] = spec.p1;
    s["p2"] = spec.p2;
    s["scenario"] = to_string(spec.scenario);
    s["fractions"] = spec.fractions;
    s["seed"] = spec.seed;
    j["spec"] = std::move(s);
    write_file((fs::path(dir) / "truth.json").string(), j.dump(1) + "\n");
}

SimInstance load_sim_truth(const std::string& truth_path) {
    json j;
    try {
        j = json::parse(read_file(truth_path));
        SimInstance inst;
        for (const auto& B : j.at("true_B")) inst.true_B.push_back(matrix_from_json(B));
        inst.true_P = int_matrix_from_json(j.at("true_P"));
        inst.true_pattern = j.at("true_pattern").get<std::vector<int>>();
        inst.noise = matrix_from_json(j.at("noise"));
        return inst;
    } catch (const json::exception& e) {
        throw DataError("malformed truth file " + truth_path + ": " + e.what());
    }
}

SimInstance load_sim_instance(const std::string& dir) {
    SimInstance inst = load_sim_truth((fs::path(dir) / "truth.json").string());
    inst.data = load_dataset((fs::path(dir) / "X.csv").string(), (fs::path(dir) / "Y.csv").string());
    return inst;
}

// ----------------------------------------------------------------- files

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path);
        out << contents;
        if (!out) throw DataError("write failed for " + path);
    }
    fs::rename(tmp, target);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace gfmmr
