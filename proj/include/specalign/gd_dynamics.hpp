#pragma once

// Batch gradient descent on linear least squares over a fixed
// representation: exact per-direction trajectories from the SVD, the plain
// iterative update they describe, iteration bounds driven by alignment, and
// the fast/slow decomposition of the loss.

#include <cmath>
#include <optional>
#include <vector>

#include "specalign/alignment.hpp"
#include "specalign/spectral.hpp"

namespace specalign {

struct GdConfig {
    double eta = 0.0;
    long max_iters = 1000;
    long record_every = 1;
};

struct TrajectoryReport {
    std::vector<long> iters;
    std::vector<double> pred_dist;   // ||Phi w_t - Phi w*||
    std::vector<double> train_loss;  // ||Phi w_t - y||^2
    std::vector<double> weight_norm; // ||w_t||

    std::size_t size() const { return iters.size(); }
};

struct TrajectoryPoint {
    double pred_dist = 0.0;
    double train_loss = 0.0;
};

struct PhaseDirection {
    double sigma = 0.0;
    double loss_share = 0.0;      // (u_i^T y)^2
    double required_weight = 0.0; // (u_i^T y) / sigma_i
    bool is_fast = false;
};

struct PhaseBreakdown {
    std::vector<PhaseDirection> directions;
    double irreducible = 0.0; // ||Phi w* - y||^2

    double fast_share() const {
        double s = 0.0;
        for (const auto& d : directions) if (d.is_fast) s += d.loss_share;
        return s;
    }
    double slow_share() const {
        double s = 0.0;
        for (const auto& d : directions) if (!d.is_fast) s += d.loss_share;
        return s;
    }
};

/// Half the largest stable step, 0.5 / sigma_max^2.
inline double default_step_size(const SvdResult& svd) {
    if (svd.rank == 0) throw InvalidInput("default_step_size: representation has rank 0");
    return 0.5 / (svd.sigma_max() * svd.sigma_max());
}

inline void validate_step_size(const SvdResult& svd, double eta) {
    if (!(eta > 0.0)) throw InvalidConfig("step size must be positive");
    const double smax = svd.sigma_max();
    if (smax > 0.0 && !(eta * smax * smax < 1.0)) {
        throw InvalidConfig("step size " + std::to_string(eta) + " is not below 1/sigma_max^2 = " +
                            std::to_string(1.0 / (smax * smax)));
    }
}

/// ||y - U U^T y||^2, the loss no linear model on Phi can remove.
inline double irreducible_loss(const SvdResult& svd, const Vec& y) {
    require_length(y, svd.rows(), "irreducible_loss");
    return (y - svd.u * (svd.u.transpose() * y)).squaredNorm();
}

/// Prediction distance and training loss after t steps from w_0 = 0,
/// evaluated from the spectrum without iterating.
inline TrajectoryPoint closed_form_trajectory(const SvdResult& svd, const Vec& y, double eta, long t) {
    validate_step_size(svd, eta);
    if (t < 0) throw InvalidInput("closed_form_trajectory: t must be >= 0");
    const Vec proj = project_labels(svd, y);
    double dist2 = 0.0;
    for (Eigen::Index i = 0; i < svd.rank; ++i) {
        const double contraction = 1.0 - eta * svd.sigma(i) * svd.sigma(i);
        dist2 += std::pow(contraction, 2.0 * static_cast<double>(t)) * proj(i) * proj(i);
    }
    return {std::sqrt(dist2), dist2 + irreducible_loss(svd, y)};
}

/// Plain batch gradient descent w <- w - eta Phi^T (Phi w - y) from w = 0.
///
/// The prediction distance is tracked through e_t = w_t - w*, which obeys
/// the same update with y = 0. Differencing w_t against w* instead would
/// stall at rounding level long before the true distance does.
///
/// Throws Diverged when the loss is non-finite or rises for 10 consecutive
/// records.
inline TrajectoryReport iterative_gd(const Mat& phi, const Vec& y, const GdConfig& cfg) {
    require_finite(phi, "iterative_gd representation");
    require_length(y, phi.rows(), "iterative_gd labels");
    if (!(cfg.eta > 0.0)) throw InvalidConfig("step size must be positive");
    if (cfg.max_iters < 0 || cfg.record_every < 1) throw InvalidConfig("invalid iteration settings");

    const Vec w_star = least_squares_solution(thin_svd(phi), y);
    Vec w = Vec::Zero(phi.cols());
    Vec err = -w_star;

    TrajectoryReport rep;
    int rising = 0;
    auto record = [&](long t) {
        const double loss = (phi * w - y).squaredNorm();
        if (!std::isfinite(loss)) throw Diverged("gradient descent loss is not finite", t);
        if (!rep.train_loss.empty() && loss > rep.train_loss.back()) {
            if (++rising >= 10) throw Diverged("gradient descent loss rose for 10 consecutive records", t);
        } else {
            rising = 0;
        }
        rep.iters.push_back(t);
        rep.pred_dist.push_back((phi * err).norm());
        rep.train_loss.push_back(loss);
        rep.weight_norm.push_back(w.norm());
    };

    record(0);
    for (long t = 1; t <= cfg.max_iters; ++t) {
        w -= cfg.eta * (phi.transpose() * (phi * w - y));
        err -= cfg.eta * (phi.transpose() * (phi * err));
        if (t % cfg.record_every == 0 || t == cfg.max_iters) record(t);
    }
    return rep;
}

/// Upper bound on the iterations needed to remove `omega` of loss when
/// Alignment(Phi, y, tau) = delta: ceil(-ln(1 - omega/delta) / (2 eta tau^2)).
inline long iteration_bound(double delta, double omega, double eta, double tau) {
    if (!(omega >= 0.0) || !(omega < delta)) {
        throw InvalidInput("iteration_bound: requires 0 <= omega < delta");
    }
    if (!(eta > 0.0) || !(tau > 0.0)) throw InvalidInput("iteration_bound: eta and tau must be positive");
    if (omega == 0.0) return 0;
    return static_cast<long>(std::ceil(-std::log1p(-omega / delta) / (2.0 * eta * tau * tau)));
}

/// First t at which plain GD from w = 0 has removed at least `omega` of the
/// loss, or nullopt when `max_iters` is not enough.
inline std::optional<long> iterations_to_reduce(const Mat& phi, const Vec& y, double eta, double omega,
                                                long max_iters) {
    require_length(y, phi.rows(), "iterations_to_reduce");
    const double initial = y.squaredNorm();
    Vec w = Vec::Zero(phi.cols());
    for (long t = 0; t <= max_iters; ++t) {
        if (t > 0) w -= eta * (phi.transpose() * (phi * w - y));
        if (initial - (phi * w - y).squaredNorm() >= omega) return t;
    }
    return std::nullopt;
}

inline PhaseBreakdown phase_breakdown(const SvdResult& svd, const Vec& y, double tau) {
    const Vec proj = project_labels(svd, y);
    PhaseBreakdown out;
    out.directions.reserve(static_cast<std::size_t>(svd.rank));
    for (Eigen::Index i = 0; i < svd.rank; ++i) {
        out.directions.push_back({svd.sigma(i), proj(i) * proj(i), proj(i) / svd.sigma(i), svd.sigma(i) >= tau});
    }
    out.irreducible = irreducible_loss(svd, y);
    return out;
}

/// For each fraction f, ||w|| at the point where the reducible loss has
/// dropped by f of its starting value, interpolated linearly in removed loss
/// between the two records that bracket it.
inline std::vector<std::optional<double>> weight_norm_at_loss(const TrajectoryReport& traj,
                                                              double irreducible,
                                                              const std::vector<double>& fractions) {
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0) || (i > 0 && fractions[i] < fractions[i - 1])) {
            throw InvalidInput("weight_norm_at_loss: fractions must be ascending in (0, 1]");
        }
    }
    std::vector<std::optional<double>> out(fractions.size());
    if (traj.size() == 0) return out;
    const double reducible0 = traj.train_loss.front() - irreducible;
    std::size_t k = 0;
    for (std::size_t t = 0; t < traj.size() && k < fractions.size(); ++t) {
        const double removed = traj.train_loss.front() - traj.train_loss[t];
        while (k < fractions.size() && removed >= fractions[k] * reducible0) {
            const double target = fractions[k] * reducible0;
            if (t == 0) {
                out[k++] = traj.weight_norm[0];
                continue;
            }
            const double prev = traj.train_loss.front() - traj.train_loss[t - 1];
            const double frac = removed > prev ? (target - prev) / (removed - prev) : 1.0;
            out[k++] = traj.weight_norm[t - 1] + frac * (traj.weight_norm[t] - traj.weight_norm[t - 1]);
        }
    }
    return out;
}

inline std::vector<std::optional<double>> weight_norm_at_loss(const Mat& phi, const Vec& y, const GdConfig& cfg,
                                                              const std::vector<double>& fractions) {
    const TrajectoryReport traj = iterative_gd(phi, y, cfg);
    return weight_norm_at_loss(traj, irreducible_loss(thin_svd(phi), y), fractions);
}

/// ||Phi w - y||^2 assembled from the rotated coordinates:
/// sum_i (sigma_i w^V_i - y^U_i)^2 + ||Phi w* - y||^2.
inline double loss_decomposition(const SvdResult& svd, const Vec& y, const Vec& w) {
    require_length(w, svd.cols(), "loss_decomposition weights");
    const Vec wv = svd.v.transpose() * w;
    const Vec yu = project_labels(svd, y);
    return (svd.sigma.cwiseProduct(wv) - yu).squaredNorm() + irreducible_loss(svd, y);
}

} // namespace specalign
