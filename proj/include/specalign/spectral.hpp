#pragma once

// Dense linear-algebra foundation: thin SVD with a numerical-rank cutoff,
// label projections onto the left singular basis, and row normalization.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "specalign/errors.hpp"

namespace specalign {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) {
        throw InvalidInput(std::string(what) + " contains non-finite values");
    }
}

inline void require_length(const Vec& y, Eigen::Index n, const char* what) {
    if (y.size() != n) {
        throw InvalidInput(std::string(what) + ": expected length " + std::to_string(n) +
                           ", got " + std::to_string(y.size()));
    }
}

/// Thin SVD restricted to the numerically nonzero directions.
///
/// `u` is n x rank, `sigma` has `rank` strictly positive entries in
/// descending order and `v` is d x rank. Each pair (u_i, v_i) is signed so
/// that the largest-magnitude entry of v_i is positive.
struct SvdResult {
    Mat u;
    Vec sigma;
    Mat v;
    Eigen::Index rank = 0;

    Eigen::Index rows() const { return u.rows(); }
    Eigen::Index cols() const { return v.rows(); }
    double sigma_max() const { return rank > 0 ? sigma(0) : 0.0; }
};

/// Relative cutoff below which singular values are treated as zero.
inline double rank_tolerance(Eigen::Index n, Eigen::Index d) {
    return 1e-12 * static_cast<double>(std::max(n, d));
}

inline SvdResult thin_svd(const Mat& phi) {
    if (phi.rows() < 1 || phi.cols() < 1) {
        throw InvalidInput("thin_svd: matrix must have at least one row and one column");
    }
    require_finite(phi, "thin_svd input");

    Eigen::BDCSVD<Mat> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();

    Eigen::Index rank = 0;
    const double smax = s.size() > 0 ? s(0) : 0.0;
    if (smax > 0.0) {
        const double cutoff = rank_tolerance(phi.rows(), phi.cols()) * smax;
        while (rank < s.size() && s(rank) > cutoff) ++rank;
    }

    SvdResult out;
    out.rank = rank;
    out.sigma = s.head(rank);
    out.u = svd.matrixU().leftCols(rank);
    out.v = svd.matrixV().leftCols(rank);

    for (Eigen::Index i = 0; i < rank; ++i) {
        Eigen::Index arg = 0;
        out.v.col(i).cwiseAbs().maxCoeff(&arg);
        if (out.v(arg, i) < 0.0) {
            out.v.col(i) *= -1.0;
            out.u.col(i) *= -1.0;
        }
    }
    return out;
}

/// Coordinates of y in the retained left singular basis: entries u_i^T y.
inline Vec project_labels(const SvdResult& svd, const Vec& y) {
    require_length(y, svd.rows(), "project_labels");
    return svd.u.transpose() * y;
}

/// Scales every nonzero row to unit Euclidean norm. Zero rows stay zero.
inline Mat normalize_rows(const Mat& m) {
    Mat out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).norm();
        if (norm > 0.0) out.row(i) /= norm;
    }
    return out;
}

/// Minimum-norm least-squares solution V diag(1/sigma) U^T y.
inline Vec least_squares_solution(const SvdResult& svd, const Vec& y) {
    const Vec proj = project_labels(svd, y);
    return svd.v * proj.cwiseQuotient(svd.sigma);
}

/// Appends a constant column of ones (stands in for a bias unit).
inline Mat with_bias_column(const Mat& m) {
    Mat out(m.rows(), m.cols() + 1);
    out.leftCols(m.cols()) = m;
    out.col(m.cols()).setOnes();
    return out;
}

} // namespace specalign
