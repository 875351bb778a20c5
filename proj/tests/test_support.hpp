#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "gfmmr/simulation.hpp"

namespace test_support {

using Eigen::MatrixXd;

// Fresh directory under the system temp dir, unique per process.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() /
                   ("gfmmr_test_" + std::to_string(::getpid())) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Partition-scenario instance with the noise rescaled.
inline gfmmr::SimInstance small_instance(int n, std::uint64_t seed, double noise_scale = 1.0) {
    gfmmr::SimSpec s;
    s.n = n;
    s.seed = seed;
    auto inst = gfmmr::simulate(s);
    inst.data.Y = inst.signal() + noise_scale * inst.noise;
    inst.noise = inst.data.Y - inst.signal();
    return inst;
}

// Four responses on shared predictors. Columns 0-2 follow one block-partition
// model, column 3 another coefficient set on interleaved memberships. The
// coefficient vectors are spikes on distinct predictors, so every overlap
// pattern has its own mean.
inline gfmmr::Dataset pipeline_data(int n, double sd, std::uint64_t seed) {
    gfmmr::SimSpec a;
    a.n = n;
    a.q = 1;
    a.seed = seed;
    const auto base = gfmmr::simulate(a);
    const MatrixXd& X = base.data.X;

    std::mt19937_64 rng(seed * 7919 + 1);
    std::normal_distribution<double> N(0.0, sd);
    MatrixXd Y(n, 4);
    for (int i = 0; i < n; ++i) {
        const int ka = i * 3 / n;
        const int kb = i % 3;
        for (int c = 0; c < 3; ++c) Y(i, c) = 2.5 * X(i, ka) + N(rng);
        Y(i, 3) = -2.5 * X(i, 6 + 2 * kb) + N(rng);
    }
    gfmmr::Dataset d(X, Y);
    d.predictor_names = base.data.predictor_names;
    d.response_names = {"a1", "a2", "a3", "b"};
    return d;
}

}  // namespace test_support
