#pragma once

// Reference computations for the tests, built from different primitives than
// the library (JacobiSVD, eigen-decomposition, plain loops).

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat random_matrix(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat m(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < n; ++i) m(i, j) = g(rng);
    return m;
}

inline Vec random_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

inline Mat random_orthogonal(Eigen::Index d, std::mt19937_64& rng) {
    Eigen::HouseholderQR<Mat> qr(random_matrix(d, d, rng));
    return qr.householderQ() * Mat::Identity(d, d);
}

/// Alignment from the eigen-decomposition of Phi^T Phi: projecting y on
/// Phi v_i / sigma_i for every eigenpair with sigma_i >= tau. The comparison
/// allows `slack` relative error, since sqrt of an eigenvalue of Phi^T Phi
/// lands a few ulps away from the singular value it stands for.
inline double alignment(const Mat& phi, const Vec& y, double tau, double slack = 1e-10) {
    Eigen::SelfAdjointEigenSolver<Mat> es(phi.transpose() * phi);
    const double top = std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
    double total = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double s = std::sqrt(std::max(es.eigenvalues()(i), 0.0));
        if (s <= 1e-9 * top || s < tau * (1.0 - slack)) continue;
        const Vec u = phi * es.eigenvectors().col(i) / s;
        total += std::pow(u.dot(y), 2);
    }
    return total;
}

struct GdState {
    Vec w;
    double loss = 0.0;
    double pred_dist = 0.0;
};

/// t plain steps w <- w - eta Phi^T (Phi w - y) from w = 0; pred_dist is
/// measured against the minimum-norm least-squares fit from JacobiSVD.
inline GdState plain_gd(const Mat& phi, const Vec& y, double eta, long t) {
    Vec w = Vec::Zero(phi.cols());
    for (long k = 0; k < t; ++k) w -= eta * phi.transpose() * (phi * w - y);
    Eigen::JacobiSVD<Mat> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec w_star = svd.solve(y);
    return {w, (phi * w - y).squaredNorm(), (phi * (w - w_star)).norm()};
}

inline double rel(double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

} // namespace oracle
