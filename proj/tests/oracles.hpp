#pragma once

// Independent reference computations. Nothing here calls into the library's
// numerical code: densities use an LU inverse and determinant, patterns are
// enumerated by recursion and sorted afresh, sums are plain loops.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

inline void subsets_rec(int K, int next, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    for (int k = next; k < K; ++k) {
        cur.push_back(k);
        out.push_back(cur);
        subsets_rec(K, k + 1, cur, out);
        cur.pop_back();
    }
}

// Nonempty subsets of {0..K-1} ordered by size, then lexicographically.
inline std::vector<std::vector<int>> subsets(int K) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    subsets_rec(K, 0, cur, out);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    });
    return out;
}

inline double density(const VectorXd& y, const VectorXd& mean, const MatrixXd& sigma) {
    Eigen::FullPivLU<MatrixXd> lu(sigma);
    const VectorXd r = y - mean;
    const double quad = r.dot(lu.inverse() * r);
    const double q = static_cast<double>(y.size());
    return std::exp(-0.5 * quad) / std::sqrt(std::pow(2.0 * kPi, q) * lu.determinant());
}

inline VectorXd subset_mean(const VectorXd& x, const std::vector<int>& members, const std::vector<MatrixXd>& B) {
    VectorXd m = VectorXd::Zero(B.front().cols());
    for (int k : members)
        for (Eigen::Index c = 0; c < m.size(); ++c)
            for (Eigen::Index j = 0; j < x.size(); ++j) m(c) += B[static_cast<std::size_t>(k)](j, c) * x(j);
    return m;
}

// z_it = pi_t f_t(y_i) / sum_s pi_s f_s(y_i)
inline MatrixXd e_step(const MatrixXd& X, const MatrixXd& Y, const std::vector<MatrixXd>& B, const MatrixXd& sigma,
                       const VectorXd& pi) {
    const auto sets = subsets(static_cast<int>(B.size()));
    MatrixXd Z(X.rows(), static_cast<Eigen::Index>(sets.size()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double total = 0.0;
        for (std::size_t t = 0; t < sets.size(); ++t) {
            const double f = pi(static_cast<Eigen::Index>(t)) *
                             density(Y.row(i).transpose(), subset_mean(X.row(i).transpose(), sets[t], B), sigma);
            Z(i, static_cast<Eigen::Index>(t)) = f;
            total += f;
        }
        Z.row(i) /= total;
    }
    return Z;
}

inline double log_likelihood(const MatrixXd& X, const MatrixXd& Y, const std::vector<MatrixXd>& B,
                             const MatrixXd& sigma, const VectorXd& pi) {
    const auto sets = subsets(static_cast<int>(B.size()));
    double ll = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double total = 0.0;
        for (std::size_t t = 0; t < sets.size(); ++t)
            total += pi(static_cast<Eigen::Index>(t)) *
                     density(Y.row(i).transpose(), subset_mean(X.row(i).transpose(), sets[t], B), sigma);
        ll += std::log(total);
    }
    return ll;
}

// Sigma = sum_i sum_t z_it r_it r_it^T / sum z
inline MatrixXd sigma_closed_form(const MatrixXd& X, const MatrixXd& Y, const std::vector<MatrixXd>& B,
                                  const MatrixXd& Z) {
    const auto sets = subsets(static_cast<int>(B.size()));
    const Eigen::Index q = Y.cols();
    MatrixXd S = MatrixXd::Zero(q, q);
    double mass = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (std::size_t t = 0; t < sets.size(); ++t) {
            const double z = Z(i, static_cast<Eigen::Index>(t));
            const VectorXd r = Y.row(i).transpose() - subset_mean(X.row(i).transpose(), sets[t], B);
            for (Eigen::Index a = 0; a < q; ++a)
                for (Eigen::Index b = 0; b < q; ++b) S(a, b) += z * r(a) * r(b);
            mass += z;
        }
    return S / mass;
}

inline double sigma_objective(const MatrixXd& X, const MatrixXd& Y, const std::vector<MatrixXd>& B,
                              const MatrixXd& Z, const MatrixXd& sigma) {
    const auto sets = subsets(static_cast<int>(B.size()));
    double obj = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (std::size_t t = 0; t < sets.size(); ++t) {
            const double z = Z(i, static_cast<Eigen::Index>(t));
            if (z == 0.0) continue;
            obj += z * std::log(density(Y.row(i).transpose(), subset_mean(X.row(i).transpose(), sets[t], B), sigma));
        }
    return obj;
}

// Subgradient check of 1/2 sum_i w_i ||y_i - B^T x_i||^2 + l1 |B|_1 + l2 ||B||^2.
inline double separate_kkt(const MatrixXd& X, const MatrixXd& Y, const VectorXd& w, const MatrixXd& B, double l1,
                           double l2) {
    double worst = 0.0;
    for (Eigen::Index m = 0; m < Y.cols(); ++m)
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            double g = 0.0;
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                double fit = 0.0;
                for (Eigen::Index l = 0; l < X.cols(); ++l) fit += X(i, l) * B(l, m);
                g -= w(i) * X(i, j) * (Y(i, m) - fit);
            }
            g += 2.0 * l2 * B(j, m);
            const double b = B(j, m);
            const double v = b != 0.0 ? std::abs(g + l1 * (b > 0 ? 1.0 : -1.0)) : std::max(0.0, std::abs(g) - l1);
            worst = std::max(worst, v);
        }
    return worst;
}

// Halved coupled objective 1/2 tr(R^T W R Omega) + l1 |B|_1.
inline double coupled_kkt(const MatrixXd& X, const MatrixXd& Y, const VectorXd& w, const MatrixXd& B,
                          const MatrixXd& omega, double l1) {
    const MatrixXd R = Y - X * B;
    MatrixXd G = MatrixXd::Zero(X.cols(), Y.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index m = 0; m < Y.cols(); ++m)
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                for (Eigen::Index c = 0; c < Y.cols(); ++c) G(j, m) -= w(i) * X(i, j) * R(i, c) * omega(c, m);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index m = 0; m < Y.cols(); ++m) {
            const double b = B(j, m);
            const double g = G(j, m);
            worst = std::max(worst, b != 0.0 ? std::abs(g + l1 * (b > 0 ? 1.0 : -1.0))
                                             : std::max(0.0, std::abs(g) - l1));
        }
    return worst;
}

inline MatrixXd weighted_ls(const MatrixXd& X, const MatrixXd& Y, const VectorXd& w) {
    const MatrixXd G = X.transpose() * w.asDiagonal() * X;
    return G.fullPivLu().solve(X.transpose() * w.asDiagonal() * Y);
}

inline MatrixXd random_spd(int q, std::mt19937_64& rng, double floor = 0.3) {
    std::normal_distribution<double> N(0.0, 1.0);
    MatrixXd A(q, q);
    for (int a = 0; a < q; ++a)
        for (int b = 0; b < q; ++b) A(a, b) = N(rng);
    return A * A.transpose() / q + floor * MatrixXd::Identity(q, q);
}

inline MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> N(0.0, sd);
    MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = N(rng);
    return M;
}

inline VectorXd random_simplex(Eigen::Index n, std::mt19937_64& rng) {
    std::exponential_distribution<double> E(1.0);
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = E(rng);
    return v / v.sum();
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
