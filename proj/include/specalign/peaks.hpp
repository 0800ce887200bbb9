#pragma once

// Peaks functions P_{X,Y,Z} = IF X > 0.5 THEN Y ELSE Z over six latent
// variables A..F, with each variable encoded by ten Gaussian bumps.

#include <array>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "specalign/data_gen.hpp"
#include "specalign/spectral.hpp"

namespace specalign {

inline constexpr int kLatentVars = 6;
inline constexpr int kCentersPerVar = 10;
inline constexpr int kPeaksFeatures = kLatentVars * kCentersPerVar;
inline constexpr double kBumpHeight = 0.5;
inline constexpr double kBumpStddev = 0.1;

struct PeaksTask {
    int x_var = 0;
    int y_var = 1;
    int z_var = 2;

    bool valid() const {
        auto in = [](int v) { return v >= 0 && v < kLatentVars; };
        return in(x_var) && in(y_var) && in(z_var) && x_var != y_var && y_var != z_var && x_var != z_var;
    }

    std::array<int, 3> vars() const { return {x_var, y_var, z_var}; }

    // e.g. "P(A,B,C)"
    std::string name() const {
        std::string s = "P(";
        s += static_cast<char>('A' + x_var);
        s += ',';
        s += static_cast<char>('A' + y_var);
        s += ',';
        s += static_cast<char>('A' + z_var);
        return s + ")";
    }

    friend bool operator==(const PeaksTask&, const PeaksTask&) = default;
};

struct TaskTriple {
    PeaksTask source;
    PeaksTask related;   // same variables, different order
    PeaksTask unrelated; // the other three variables
};

inline double eval_peaks(const PeaksTask& task, std::span<const double> sample) {
    if (!task.valid()) throw InvalidInput("eval_peaks: invalid task " + task.name());
    if (sample.size() != kLatentVars) throw InvalidInput("eval_peaks: sample must have 6 values");
    for (double v : sample) {
        if (!(v >= 0.0 && v < 1.0)) throw InvalidInput("eval_peaks: sample values must lie in [0, 1)");
    }
    const auto idx = [](int v) { return static_cast<std::size_t>(v); };
    return sample[idx(task.x_var)] > 0.5 ? sample[idx(task.y_var)] : sample[idx(task.z_var)];
}

/// 60 features laid out variable-major: feature v*10 + c is a bump of height
/// 0.5 and standard deviation 0.1 centred at c/10, evaluated at sample[v].
inline Vec encode_rbf(std::span<const double> sample) {
    if (sample.size() != kLatentVars) throw InvalidInput("encode_rbf: sample must have 6 values");
    Vec f(kPeaksFeatures);
    for (int v = 0; v < kLatentVars; ++v) {
        for (int c = 0; c < kCentersPerVar; ++c) {
            const double d = sample[static_cast<std::size_t>(v)] - 0.1 * c;
            f(v * kCentersPerVar + c) = kBumpHeight * std::exp(-d * d / (2.0 * kBumpStddev * kBumpStddev));
        }
    }
    return f;
}

/// n x 6 latent samples, uniform on [0, 1). Depends only on (n, seed), so
/// every task built from the same seed sees the same inputs.
inline Mat sample_latents(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Mat latent(n, kLatentVars);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int v = 0; v < kLatentVars; ++v) latent(i, v) = u(rng);
    return latent;
}

/// Row-normalized 60-dimensional encodings of latent samples.
inline Mat encode_inputs(const Mat& latent) {
    Mat x(latent.rows(), kPeaksFeatures);
    for (Eigen::Index i = 0; i < latent.rows(); ++i) {
        const Eigen::RowVectorXd row = latent.row(i);
        x.row(i) = encode_rbf(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))).transpose();
    }
    return normalize_rows(x);
}

/// Task labels on latent samples, centered to mean zero over the rows.
inline Vec task_labels(const PeaksTask& task, const Mat& latent) {
    Vec y(latent.rows());
    for (Eigen::Index i = 0; i < latent.rows(); ++i) {
        const Eigen::RowVectorXd row = latent.row(i);
        y(i) = eval_peaks(task, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
    y.array() -= y.mean();
    return y;
}

inline Dataset make_dataset(const PeaksTask& task, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("make_dataset: n must be >= 1");
    if (!task.valid()) throw InvalidInput("make_dataset: invalid task " + task.name());
    const Mat latent = sample_latents(n, seed);
    return {encode_inputs(latent), task_labels(task, latent)};
}

/// Every ordered choice of three distinct variables: 6 * 5 * 4 = 120 tasks.
inline std::vector<PeaksTask> all_peaks_tasks() {
    std::vector<PeaksTask> tasks;
    for (int a = 0; a < kLatentVars; ++a)
        for (int b = 0; b < kLatentVars; ++b)
            for (int c = 0; c < kLatentVars; ++c)
                if (a != b && b != c && a != c) tasks.push_back({a, b, c});
    return tasks;
}

/// Random source task, a non-identity reordering of it, and a random
/// ordering of the three remaining variables.
inline TaskTriple make_task_triple(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::array<int, kLatentVars> vars{0, 1, 2, 3, 4, 5};
    std::shuffle(vars.begin(), vars.end(), rng);

    TaskTriple t;
    t.source = {vars[0], vars[1], vars[2]};

    // The five non-identity permutations of three positions.
    static constexpr std::array<std::array<int, 3>, 5> perms{{
        {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
    }};
    std::uniform_int_distribution<int> pick(0, 4);
    const auto& p = perms[static_cast<std::size_t>(pick(rng))];
    const auto src = t.source.vars();
    t.related = {src[static_cast<std::size_t>(p[0])], src[static_cast<std::size_t>(p[1])],
                 src[static_cast<std::size_t>(p[2])]};
    t.unrelated = {vars[3], vars[4], vars[5]};
    return t;
}

} // namespace specalign
