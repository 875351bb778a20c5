#include "gfmmr/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gfmmr/errors.hpp"
#include "gfmmr/rng.hpp"

namespace gfmmr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void SimilarityMatrix::set_preference(double value) { preference = VectorXd::Constant(S.rows(), value); }

void SimilarityMatrix::validate() const {
    if (S.rows() != S.cols()) throw ShapeError("similarity matrix must be square");
    if (preference.size() != S.rows()) throw ShapeError("preference length differs from the similarity matrix");
    for (Index i = 0; i < S.rows(); ++i)
        for (Index j = 0; j < S.cols(); ++j)
            if (i != j && !std::isfinite(S(i, j))) throw DataError("non-finite similarity");
    if (!preference.allFinite()) throw DataError("non-finite preference");
}

double median_off_diagonal(const MatrixXd& S) {
    std::vector<double> v;
    for (Index i = 0; i < S.rows(); ++i)
        for (Index j = 0; j < S.cols(); ++j)
            if (i != j) v.push_back(S(i, j));
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

SimilarityMatrix similarity_from_rows(const MatrixXd& rows) {
    if (rows.rows() < 2) throw UsageError("similarity needs at least 2 rows");
    const Index n = rows.rows();
    SimilarityMatrix out;
    out.S = MatrixXd::Zero(n, n);
    for (Index a = 0; a < n; ++a)
        for (Index b = a + 1; b < n; ++b) out.S(a, b) = out.S(b, a) = -(rows.row(a) - rows.row(b)).squaredNorm();
    out.set_preference(median_off_diagonal(out.S));
    return out;
}

std::vector<int> ApResult::labels() const {
    std::vector<int> out(exemplar.size());
    for (std::size_t i = 0; i < exemplar.size(); ++i)
        out[i] = static_cast<int>(std::lower_bound(exemplars.begin(), exemplars.end(), exemplar[i]) - exemplars.begin());
    return out;
}

ApResult affinity_propagation(const SimilarityMatrix& sim, const ApOptions& opts) {
    sim.validate();
    if (!(opts.damping >= 0.5 && opts.damping < 1.0)) throw UsageError("damping must be in [0.5, 1)");
    if (opts.max_iter < 1) throw UsageError("max_iter must be >= 1");
    if (opts.stable_iters < 1) throw UsageError("stable_iters must be >= 1");
    const Index n = sim.S.rows();
    ApResult out;
    if (n == 0) return out;
    if (n == 1) {
        out.exemplar = {0};
        out.exemplars = {0};
        out.converged = true;
        return out;
    }

    MatrixXd S = sim.S;
    S.diagonal() = sim.preference;
    // Deterministic tie-breaking jitter proportional to the similarity scale.
    double scale = S.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) scale = 1.0;
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < n; ++k) {
            const std::uint64_t h = mix64(static_cast<std::uint64_t>(i * n + k));
            S(i, k) += 1e-12 * scale * static_cast<double>(h >> 11) * 0x1.0p-53;
        }

    MatrixXd R = MatrixXd::Zero(n, n);
    MatrixXd A = MatrixXd::Zero(n, n);
    const double d = opts.damping;
    std::vector<bool> prev(static_cast<std::size_t>(n), false);
    int stable = 0;
    int it = 0;
    for (it = 1; it <= opts.max_iter; ++it) {
        double change = 0.0;
        for (Index i = 0; i < n; ++i) {
            double first = -std::numeric_limits<double>::infinity();
            double second = first;
            Index arg = 0;
            for (Index k = 0; k < n; ++k) {
                const double v = A(i, k) + S(i, k);
                if (v > first) {
                    second = first;
                    first = v;
                    arg = k;
                } else if (v > second) {
                    second = v;
                }
            }
            for (Index k = 0; k < n; ++k) {
                const double r = S(i, k) - (k == arg ? second : first);
                const double next = d * R(i, k) + (1.0 - d) * r;
                change = std::max(change, std::abs(next - R(i, k)));
                R(i, k) = next;
            }
        }
        for (Index k = 0; k < n; ++k) {
            double pos = 0.0;
            for (Index i = 0; i < n; ++i)
                if (i != k) pos += std::max(0.0, R(i, k));
            for (Index i = 0; i < n; ++i) {
                const double a = i == k ? pos : std::min(0.0, R(k, k) + pos - std::max(0.0, R(i, k)));
                const double next = d * A(i, k) + (1.0 - d) * a;
                change = std::max(change, std::abs(next - A(i, k)));
                A(i, k) = next;
            }
        }
        std::vector<bool> cur(static_cast<std::size_t>(n));
        bool any = false;
        for (Index k = 0; k < n; ++k) {
            cur[static_cast<std::size_t>(k)] = A(k, k) + R(k, k) > 0.0;
            any = any || cur[static_cast<std::size_t>(k)];
        }
        // The exemplar set can sit still while messages are still drifting
        // (heavy damping), so stability only counts once they have settled.
        const bool settled = change <= 1e-6 * scale;
        stable = (cur == prev && any && settled) ? stable + 1 : 0;
        prev = std::move(cur);
        if (stable >= opts.stable_iters) {
            out.converged = true;
            break;
        }
    }
    out.iterations = std::min(it, opts.max_iter);

    for (Index k = 0; k < n; ++k)
        if (prev[static_cast<std::size_t>(k)]) out.exemplars.push_back(static_cast<int>(k));
    if (out.exemplars.empty()) {
        // Best effort: the single most self-responsible point.
        Index best = 0;
        for (Index k = 1; k < n; ++k)
            if (A(k, k) + R(k, k) > A(best, best) + R(best, best)) best = k;
        out.exemplars.push_back(static_cast<int>(best));
        out.converged = false;
    }
    out.exemplar.assign(static_cast<std::size_t>(n), -1);
    for (Index i = 0; i < n; ++i) {
        if (std::binary_search(out.exemplars.begin(), out.exemplars.end(), static_cast<int>(i))) {
            out.exemplar[static_cast<std::size_t>(i)] = static_cast<int>(i);
            continue;
        }
        int best = out.exemplars.front();
        for (int k : out.exemplars)
            if (S(i, k) > S(i, best)) best = k;
        out.exemplar[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

}  // namespace gfmmr
