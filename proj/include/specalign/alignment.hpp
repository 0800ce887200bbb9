#pragma once

// Alignment between a representation and a label vector: the label energy
// that falls on left singular directions whose singular value is at least a
// threshold, and the step-function curve it traces as the threshold moves.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <optional>
#include <random>
#include <vector>

#include "specalign/spectral.hpp"

namespace specalign {

struct AlignmentCurve {
    std::vector<double> thresholds; // ascending, first entry 0
    std::vector<double> values;
    // Sum over retained directions at tau = 0. values[0] holds ||y||^2
    // instead; the gap is the label energy outside span(Phi).
    double retained_total = 0.0;

    std::size_t size() const { return thresholds.size(); }

    /// Value of the step function at an arbitrary tau. Alignment is
    /// left-continuous in tau (sigma_i >= tau), so between two grid points
    /// the curve takes the value of the next grid point at or above tau.
    /// Past the last grid point the last value is held.
    double at(double tau) const {
        auto it = std::lower_bound(thresholds.begin(), thresholds.end(), tau);
        if (it == thresholds.end()) return values.empty() ? 0.0 : values.back();
        return values[static_cast<std::size_t>(it - thresholds.begin())];
    }
};

/// Sum of (u_i^T y)^2 over retained directions with sigma_i >= tau.
inline double alignment_at(const SvdResult& svd, const Vec& y, double tau) {
    require_length(y, svd.rows(), "alignment_at");
    if (!(tau >= 0.0)) throw InvalidInput("alignment_at: threshold must be >= 0");
    double total = 0.0;
    for (Eigen::Index i = 0; i < svd.rank && svd.sigma(i) >= tau; ++i) {
        const double p = svd.u.col(i).dot(y);
        total += p * p;
    }
    return total;
}

/// {0} plus every distinct singular value, the midpoints between
/// consecutive ones, and one point past sigma_1 where the curve is zero.
inline std::vector<double> auto_grid(const SvdResult& svd) {
    std::vector<double> s;
    for (Eigen::Index i = svd.rank; i-- > 0;) {
        const double v = svd.sigma(i);
        if (s.empty() || v > s.back()) s.push_back(v);
    }
    std::vector<double> grid{0.0};
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0) grid.push_back(0.5 * (s[i - 1] + s[i]));
        if (s[i] > 0.0) grid.push_back(s[i]);
    }
    if (!s.empty()) {
        const double gap = s.size() > 1 ? s.back() - s[s.size() - 2] : s.back();
        grid.push_back(s.back() + 0.5 * gap);
    }
    return grid;
}

inline void validate_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidInput("alignment grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] >= 0.0)) throw InvalidInput("alignment grid has a negative threshold");
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw InvalidInput("alignment grid must be strictly ascending");
        }
    }
}

/// Evaluates alignment over `grid` (auto grid when absent). A zero
/// threshold reports ||y||^2, counting the directions outside span(Phi).
inline AlignmentCurve alignment_curve(const SvdResult& svd, const Vec& y,
                                      const std::optional<std::vector<double>>& grid = std::nullopt) {
    require_length(y, svd.rows(), "alignment_curve");
    AlignmentCurve curve;
    curve.thresholds = grid ? *grid : auto_grid(svd);
    validate_grid(curve.thresholds);

    const Vec proj = project_labels(svd, y);
    const Vec energy = proj.cwiseAbs2();
    curve.retained_total = energy.sum();
    const double full = y.squaredNorm();

    // prefix[k] = energy of the k largest directions.
    std::vector<double> prefix(static_cast<std::size_t>(svd.rank) + 1, 0.0);
    for (Eigen::Index i = 0; i < svd.rank; ++i) {
        prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + energy(i);
    }

    Eigen::Index last = svd.rank; // directions [0, last) have sigma >= tau
    curve.values.reserve(curve.thresholds.size());
    for (double tau : curve.thresholds) {
        while (last > 0 && svd.sigma(last - 1) < tau) --last;
        curve.values.push_back(tau == 0.0 ? full : prefix[static_cast<std::size_t>(last)]);
    }
    return curve;
}

/// Pointwise a - b on the union of both grids.
inline AlignmentCurve curve_diff(const AlignmentCurve& a, const AlignmentCurve& b) {
    std::vector<double> grid;
    grid.reserve(a.size() + b.size());
    std::merge(a.thresholds.begin(), a.thresholds.end(), b.thresholds.begin(), b.thresholds.end(),
               std::back_inserter(grid));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    AlignmentCurve out;
    out.thresholds = grid;
    out.values.reserve(grid.size());
    for (double tau : grid) out.values.push_back(a.at(tau) - b.at(tau));
    out.retained_total = a.retained_total - b.retained_total;
    return out;
}

/// Uniform random permutation of y under `seed`.
inline Vec shuffle_labels(const Vec& y, std::uint64_t seed) {
    std::vector<double> v(y.data(), y.data() + y.size());
    std::mt19937_64 rng(seed);
    std::shuffle(v.begin(), v.end(), rng);
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Gini coefficient of a nonnegative vector; 0 for perfectly uniform mass.
inline double gini(const Vec& p) {
    const Eigen::Index n = p.size();
    const double total = p.sum();
    if (n == 0 || total <= 0.0) return 0.0;
    std::vector<double> s(p.data(), p.data() + n);
    std::sort(s.begin(), s.end());
    // sum_{i,j} |p_i - p_j| = 2 * sum_k (2k - n + 1) s_k for sorted s.
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) acc += (2.0 * static_cast<double>(k) - static_cast<double>(n) + 1.0) * s[static_cast<std::size_t>(k)];
    return acc / (static_cast<double>(n) * total);
}

} // namespace specalign
