#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "specalign/spectral.hpp"

using namespace specalign;

TEST(ThinSvd, IdentityHasUnitSpectrum) {
    const SvdResult s = thin_svd(Mat::Identity(2, 2));
    EXPECT_EQ(s.rank, 2);
    EXPECT_NEAR(s.sigma(0), 1.0, 1e-15);
    EXPECT_NEAR(s.sigma(1), 1.0, 1e-15);
}

TEST(ThinSvd, AxisAlignedColumns) {
    Mat phi(3, 2);
    phi << 0, 2, 0, 0, 1, 0;
    const SvdResult s = thin_svd(phi);
    ASSERT_EQ(s.rank, 2);
    EXPECT_NEAR(s.sigma(0), 2.0, 1e-14);
    EXPECT_NEAR(s.sigma(1), 1.0, 1e-14);
}

TEST(ThinSvd, ReconstructsRandomMatrix) {
    std::mt19937_64 rng(7);
    const Mat phi = oracle::random_matrix(100, 20, rng);
    const SvdResult s = thin_svd(phi);
    const Mat back = s.u * s.sigma.asDiagonal() * s.v.transpose();
    EXPECT_LT((back - phi).norm() / phi.norm(), 1e-10);
}

TEST(ThinSvd, FactorsAreOrthonormalAndSorted) {
    std::mt19937_64 rng(8);
    for (auto [n, d] : {std::pair{30, 5}, std::pair{5, 30}, std::pair{12, 12}}) {
        const SvdResult s = thin_svd(oracle::random_matrix(n, d, rng));
        const auto r = s.rank;
        EXPECT_LT((s.u.transpose() * s.u - Mat::Identity(r, r)).norm(), 1e-12);
        EXPECT_LT((s.v.transpose() * s.v - Mat::Identity(r, r)).norm(), 1e-12);
        for (Eigen::Index i = 1; i < r; ++i) EXPECT_GE(s.sigma(i - 1), s.sigma(i));
    }
}

TEST(ThinSvd, DropsNumericallyZeroDirections) {
    std::mt19937_64 rng(9);
    const Mat a = oracle::random_matrix(40, 3, rng);
    const Mat phi = a * oracle::random_matrix(3, 10, rng); // rank 3
    EXPECT_EQ(thin_svd(phi).rank, 3);
    EXPECT_EQ(thin_svd(Mat::Zero(4, 3)).rank, 0);
}

TEST(ThinSvd, SignConventionIsDeterministic) {
    std::mt19937_64 rng(10);
    const Mat phi = oracle::random_matrix(20, 6, rng);
    const SvdResult a = thin_svd(phi);
    const SvdResult b = thin_svd(phi);
    EXPECT_EQ(a.u, b.u);
    for (Eigen::Index i = 0; i < a.rank; ++i) {
        Eigen::Index k = 0;
        a.v.col(i).cwiseAbs().maxCoeff(&k);
        EXPECT_GT(a.v(k, i), 0.0);
    }
}

TEST(ThinSvd, RejectsNonFinite) {
    Mat phi = Mat::Ones(3, 3);
    phi(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(thin_svd(phi), InvalidInput);
}

TEST(ProjectLabels, SingularVectorProjectsToUnitAxis) {
    std::mt19937_64 rng(11);
    const SvdResult s = thin_svd(oracle::random_matrix(15, 4, rng));
    const Vec p = project_labels(s, s.u.col(0));
    EXPECT_NEAR(p(0), 1.0, 1e-12);
    EXPECT_LT(p.tail(p.size() - 1).norm(), 1e-12);
}

TEST(ProjectLabels, OrthogonalLabelsProjectToZero) {
    Mat phi = Mat::Zero(4, 2);
    phi(0, 0) = 1;
    phi(1, 1) = 3;
    Vec y = Vec::Zero(4);
    y(2) = 5;
    EXPECT_LT(project_labels(thin_svd(phi), y).norm(), 1e-15);
}

TEST(ProjectLabels, BesselInequality) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const SvdResult s = thin_svd(oracle::random_matrix(30, 8, rng));
        const Vec y = oracle::random_vector(30, rng);
        EXPECT_LE(project_labels(s, y).squaredNorm(), y.squaredNorm() + 1e-10);
    }
}

TEST(ProjectLabels, RejectsLengthMismatch) {
    const SvdResult s = thin_svd(Mat::Identity(3, 3));
    EXPECT_THROW(project_labels(s, Vec::Ones(4)), InvalidInput);
}

TEST(NormalizeRows, Examples) {
    Mat m(3, 2);
    m << 3, 4, 0, 0, 0.6, 0.8;
    const Mat n = normalize_rows(m);
    EXPECT_NEAR(n(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(n(0, 1), 0.8, 1e-15);
    EXPECT_EQ(n(1, 0), 0.0);
    EXPECT_EQ(n(1, 1), 0.0);
    EXPECT_NEAR((n.row(2) - m.row(2)).norm(), 0.0, 1e-12);
}

TEST(LeastSquares, OrthonormalSquareGivesTranspose) {
    std::mt19937_64 rng(13);
    const Mat q = oracle::random_orthogonal(6, rng);
    const Vec y = oracle::random_vector(6, rng);
    EXPECT_LT((least_squares_solution(thin_svd(q), y) - q.transpose() * y).norm(), 1e-12);
}

TEST(LeastSquares, NullSpaceLabelsGiveZero) {
    Mat phi = Mat::Zero(3, 2);
    phi(0, 0) = 2;
    phi(1, 1) = 1;
    Vec y = Vec::Zero(3);
    y(2) = 4;
    EXPECT_LT(least_squares_solution(thin_svd(phi), y).norm(), 1e-15);
}

TEST(LeastSquares, NormalEquationsResidual) {
    std::mt19937_64 rng(14);
    const Mat phi = oracle::random_matrix(200, 50, rng);
    const Vec y = oracle::random_vector(200, rng);
    const Vec w = least_squares_solution(thin_svd(phi), y);
    EXPECT_LT((phi.transpose() * (phi * w - y)).norm(), 1e-8);
}

TEST(WithBiasColumn, AppendsOnes) {
    const Mat m = with_bias_column(Mat::Zero(2, 3));
    EXPECT_EQ(m.cols(), 4);
    EXPECT_EQ(m(0, 3), 1.0);
    EXPECT_EQ(m(1, 3), 1.0);
}
