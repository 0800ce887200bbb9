#pragma once

// Small networks and kink-free datasets shared by the gradient tests.

#include <random>

#include "oracles.hpp"
#include "specalign/nn.hpp"

namespace fixtures {

using namespace specalign;

inline MlpModel small_model(Activation act, LossKind loss, std::uint64_t seed) {
    MlpSpec spec;
    spec.layer_widths = {4, 5, 3, 1};
    spec.activation = act;
    spec.loss = loss;
    spec.init_seed = seed;
    spec.rbf_bandwidth = 1.5;
    return init_model(spec);
}

/// Rows whose piecewise-linear pre-activations all stay at least `margin`
/// away from zero; labels are +-1 for the logistic loss and Gaussian
/// otherwise.
inline Dataset kink_free_data(MlpModel& model, int rows, std::uint64_t seed, double margin = 1e-4) {
    std::mt19937_64 rng(seed);
    Dataset d;
    d.x.resize(rows, model.layers.front().in);
    d.y.resize(rows);
    if (model.layers.front().act == Activation::rbf_layer) {
        attach_rbf_centers(model, oracle::random_matrix(rows, d.x.cols(), rng), seed);
    }
    int kept = 0;
    while (kept < rows) {
        const Mat cand = oracle::random_matrix(1, d.x.cols(), rng);
        if (min_kink_distance(model, cand) < margin) continue;
        d.x.row(kept) = cand;
        const double g = oracle::random_vector(1, rng)(0);
        d.y(kept) = model.spec.loss == LossKind::logistic ? (g > 0 ? 1.0 : -1.0) : g;
        ++kept;
    }
    return d;
}

inline constexpr Activation kAllActivations[] = {Activation::relu,   Activation::tanh,   Activation::prelu,
                                                 Activation::leaky_relu, Activation::linear, Activation::rbf_layer};
inline constexpr LossKind kAllLosses[] = {LossKind::mse, LossKind::logistic};

} // namespace fixtures
