#include "gfmmr/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "gfmmr/errors.hpp"

namespace gfmmr {

namespace {

std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

constexpr std::size_t kExhaustiveLimit = 8;

}  // namespace

Quality quality(const std::vector<int>& target, const std::vector<int>& retrieved) {
    const std::vector<int> a = sorted_unique(target);
    const std::vector<int> b = sorted_unique(retrieved);
    if (a.empty() && b.empty()) return {1.0, 1.0, 1.0};
    if (a.empty() || b.empty()) return {};
    std::vector<int> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    const auto nab = static_cast<double>(common.size());
    return {nab / na, nab / nb, 2.0 * nab / (na + nb)};
}

std::vector<int> MatchReport::target_to_retrieved() const {
    std::vector<int> out(n_target, -1);
    for (std::size_t r = 0; r < pairing.size() && r < n_retrieved; ++r)
        if (pairing[r] >= 0) out[static_cast<std::size_t>(pairing[r])] = static_cast<int>(r);
    return out;
}

MatchReport match_clusters(const ClusterSet& target, const ClusterSet& retrieved) {
    if (target.empty()) throw UsageError("match_clusters needs at least one target cluster");
    const std::size_t m = std::max(target.size(), retrieved.size());
    // score[r][t] over the padded square; padding is the empty cluster.
    std::vector<std::vector<Quality>> score(m, std::vector<Quality>(m));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t t = 0; t < m; ++t) {
            const bool null_r = r >= retrieved.size();
            const bool null_t = t >= target.size();
            if (null_r || null_t) continue;  // a null pairing scores (0, 0, 0)
            score[r][t] = quality(target[t], retrieved[r]);
        }

    std::vector<int> best(m);
    std::iota(best.begin(), best.end(), 0);
    if (m <= kExhaustiveLimit) {
        std::vector<int> perm = best;
        double best_total = -1.0;
        do {
            double total = 0.0;
            for (std::size_t r = 0; r < m; ++r) total += score[r][static_cast<std::size_t>(perm[r])].f1;
            if (total > best_total + 1e-15) {
                best_total = total;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        struct Cell {
            double f1;
            std::size_t r, t;
        };
        std::vector<Cell> cells;
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t t = 0; t < m; ++t) cells.push_back({score[r][t].f1, r, t});
        std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.f1 > b.f1; });
        std::vector<bool> used_r(m, false), used_t(m, false);
        for (const Cell& c : cells) {
            if (used_r[c.r] || used_t[c.t]) continue;
            used_r[c.r] = used_t[c.t] = true;
            best[c.r] = static_cast<int>(c.t);
        }
    }

    MatchReport out;
    out.n_target = target.size();
    out.n_retrieved = retrieved.size();
    out.pairing.assign(m, -1);
    out.pairs.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
        const auto t = static_cast<std::size_t>(best[r]);
        out.pairs[r] = score[r][t];
        if (t < target.size()) out.pairing[r] = static_cast<int>(t);
        out.mean_specificity += out.pairs[r].specificity;
        out.mean_sensitivity += out.pairs[r].sensitivity;
        out.mean_f1 += out.pairs[r].f1;
    }
    const auto denom = static_cast<double>(m);
    out.mean_specificity /= denom;
    out.mean_sensitivity /= denom;
    out.mean_f1 /= denom;
    return out;
}

double coefficient_sse(const std::vector<Eigen::MatrixXd>& true_B, const std::vector<Eigen::MatrixXd>& est_B,
                       const MatchReport& match) {
    double sse = 0.0;
    std::vector<bool> paired(true_B.size(), false);
    for (std::size_t r = 0; r < match.pairing.size() && r < est_B.size(); ++r) {
        const int t = match.pairing[r];
        if (t < 0) continue;
        const auto& Bt = true_B.at(static_cast<std::size_t>(t));
        const auto& Be = est_B[r];
        if (Bt.rows() != Be.rows() || Bt.cols() != Be.cols())
            throw ShapeError("coefficient matrices differ in shape");
        sse += (Be - Bt).squaredNorm();
        paired[static_cast<std::size_t>(t)] = true;
    }
    for (std::size_t t = 0; t < true_B.size(); ++t)
        if (!paired[t]) sse += true_B[t].squaredNorm();
    return sse;
}

std::string metrics_table(const MatchReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "retrieved,target,specificity,sensitivity,f1\n";
    for (std::size_t r = 0; r < report.pairing.size(); ++r) {
        os << r << ',';
        if (report.pairing[r] >= 0) os << report.pairing[r];
        os << ',' << report.pairs[r].specificity << ',' << report.pairs[r].sensitivity << ',' << report.pairs[r].f1
           << '\n';
    }
    os << "mean,," << report.mean_specificity << ',' << report.mean_sensitivity << ',' << report.mean_f1 << '\n';
    os << "coefficient_sse,,,," << report.coefficient_sse << '\n';
    return os.str();
}

}  // namespace gfmmr
