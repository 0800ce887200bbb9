#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "specalign/alignment.hpp"
#include "specalign/data_gen.hpp"

using namespace specalign;

namespace {

SvdResult random_svd(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return thin_svd(oracle::random_matrix(n, d, rng));
}

} // namespace

TEST(AlignmentAt, ZeroThresholdFullRankSquareIsLabelEnergy) {
    std::mt19937_64 rng(1);
    const Mat phi = oracle::random_matrix(8, 8, rng);
    const Vec y = oracle::random_vector(8, rng);
    EXPECT_NEAR(alignment_at(thin_svd(phi), y, 0.0), y.squaredNorm(), 1e-10);
}

TEST(AlignmentAt, SingularVectorIsInclusiveStep) {
    const SvdResult s = random_svd(20, 6, 2);
    for (Eigen::Index k = 0; k < s.rank; ++k) {
        const Vec y = s.u.col(k);
        EXPECT_NEAR(alignment_at(s, y, s.sigma(k)), 1.0, 1e-12);
        EXPECT_NEAR(alignment_at(s, y, 0.5 * s.sigma(k)), 1.0, 1e-12);
        EXPECT_NEAR(alignment_at(s, y, std::nextafter(s.sigma(k), 1e9)), 0.0, 1e-12);
    }
}

TEST(AlignmentAt, MatchesEigenOracle) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const Mat phi = oracle::random_matrix(25, 7, rng);
        const Vec y = oracle::random_vector(25, rng);
        const SvdResult s = thin_svd(phi);
        for (double tau : {0.0, 2.0, 4.0, 6.0}) {
            EXPECT_NEAR(alignment_at(s, y, tau), oracle::alignment(phi, y, tau), 1e-9);
        }
    }
}

TEST(AlignmentAt, RejectsBadInput) {
    const SvdResult s = random_svd(5, 2, 4);
    EXPECT_THROW(alignment_at(s, Vec::Ones(6), 0.0), InvalidInput);
    EXPECT_THROW(alignment_at(s, Vec::Ones(5), -1.0), InvalidInput);
}

TEST(AlignmentAt, CircleMajorAxisBeatsMinorAxis) {
    CircleSpec major, minor;
    minor.labeling = CircleLabeling::minor_axis;
    const Dataset a = circle_dataset(major);
    const Dataset b = circle_dataset(minor);
    const SvdResult s = thin_svd(a.x);
    const double mid = 0.5 * (s.sigma(0) + s.sigma(1));
    EXPECT_GT(alignment_at(s, a.y, mid), alignment_at(s, b.y, mid));
}

TEST(AlignmentCurve, SingularVectorCurveIsOneThenZero) {
    const SvdResult s = random_svd(30, 5, 5);
    const AlignmentCurve c = alignment_curve(s, s.u.col(2));
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_NEAR(c.values[i], c.thresholds[i] <= s.sigma(2) ? 1.0 : 0.0, 1e-12);
    }
    EXPECT_EQ(c.thresholds.front(), 0.0);
    EXPECT_GT(c.thresholds.back(), s.sigma(0));
    EXPECT_NEAR(c.values.back(), 0.0, 1e-15);
}

TEST(AlignmentCurve, UniformProjectionsDecreaseLinearly) {
    const SvdResult s = random_svd(40, 8, 6);
    Vec y = Vec::Zero(40);
    for (Eigen::Index i = 0; i < s.rank; ++i) y += s.u.col(i);
    for (Eigen::Index k = 0; k < s.rank; ++k) {
        EXPECT_NEAR(alignment_at(s, y, s.sigma(k)), static_cast<double>(k + 1), 1e-10);
    }
}

TEST(AlignmentCurve, MixStepHeightsFollowWeights) {
    const SvdResult s = random_svd(200, 60, 7);
    const Vec y = synthetic_singular_targets(s, {{4, 0.9}, {49, 0.435}});
    const double norm2 = 0.9 * 0.9 + 0.435 * 0.435;
    EXPECT_NEAR(alignment_at(s, y, s.sigma(49)), 1.0, 1e-12);
    EXPECT_NEAR(alignment_at(s, y, 0.5 * (s.sigma(49) + s.sigma(48))), 0.9 * 0.9 / norm2, 1e-12);
    EXPECT_NEAR(alignment_at(s, y, s.sigma(4)), 0.9 * 0.9 / norm2, 1e-12);
    EXPECT_NEAR(alignment_at(s, y, 0.5 * (s.sigma(4) + s.sigma(3))), 0.0, 1e-12);
}

TEST(AlignmentCurve, ExplicitGridAndValidation) {
    const SvdResult s = random_svd(10, 3, 8);
    const Vec y = Vec::Ones(10);
    const AlignmentCurve c = alignment_curve(s, y, std::vector<double>{0.0, 1.0, 2.0});
    ASSERT_EQ(c.size(), 3u);
    EXPECT_NEAR(c.values[0], y.squaredNorm(), 1e-12);
    EXPECT_NEAR(c.values[2], alignment_at(s, y, 2.0), 1e-12);
    EXPECT_THROW(alignment_curve(s, y, std::vector<double>{1.0, 0.5}), InvalidInput);
    EXPECT_THROW(alignment_curve(s, y, std::vector<double>{-1.0, 0.5}), InvalidInput);
    EXPECT_THROW(alignment_curve(s, y, std::vector<double>{}), InvalidInput);
}

TEST(AlignmentCurve, AtUsesNextGridPoint) {
    AlignmentCurve c;
    c.thresholds = {0.0, 1.0, 2.0};
    c.values = {3.0, 2.0, 1.0};
    EXPECT_EQ(c.at(0.0), 3.0);
    EXPECT_EQ(c.at(0.5), 2.0);
    EXPECT_EQ(c.at(1.0), 2.0);
    EXPECT_EQ(c.at(5.0), 1.0);
}

TEST(CurveDiff, IdenticalCurvesGiveZero) {
    const SvdResult s = random_svd(12, 4, 9);
    const AlignmentCurve a = alignment_curve(s, Vec::Ones(12));
    const AlignmentCurve d = curve_diff(a, a);
    for (double v : d.values) EXPECT_EQ(v, 0.0);
}

TEST(CurveDiff, FirstMinusSecondSingularVector) {
    const SvdResult s = random_svd(12, 4, 10);
    const AlignmentCurve d = curve_diff(alignment_curve(s, s.u.col(0)), alignment_curve(s, s.u.col(1)));
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double t = d.thresholds[i];
        const double expect = (t > s.sigma(1) && t <= s.sigma(0)) ? 1.0 : 0.0;
        EXPECT_NEAR(d.values[i], expect, 1e-12) << "tau=" << t;
    }
}

TEST(ShuffleLabels, Contract) {
    EXPECT_EQ(shuffle_labels(Vec::Constant(9, 2.5), 3), Vec::Constant(9, 2.5));
    std::mt19937_64 rng(11);
    const Vec y = oracle::random_vector(50, rng);
    const Vec a = shuffle_labels(y, 42);
    EXPECT_EQ(a, shuffle_labels(y, 42));
    EXPECT_NEAR(a.squaredNorm(), y.squaredNorm(), 1e-12);
    std::vector<double> sa(a.data(), a.data() + a.size()), sy(y.data(), y.data() + y.size());
    std::sort(sa.begin(), sa.end());
    std::sort(sy.begin(), sy.end());
    EXPECT_EQ(sa, sy);
}

TEST(Gini, ExtremesAndShuffledLabelsAreFlatter) {
    EXPECT_NEAR(gini(Vec::Ones(10)), 0.0, 1e-15);
    Vec spike = Vec::Zero(10);
    spike(3) = 1.0;
    EXPECT_NEAR(gini(spike), 0.9, 1e-15);

    const Dataset d = circle_dataset({});
    const SvdResult s = thin_svd(d.x);
    const double g = gini(project_labels(s, d.y).cwiseAbs2());
    const double gs = gini(project_labels(s, shuffle_labels(d.y, 0)).cwiseAbs2());
    EXPECT_LT(gs, g);
}

// Randomized properties of the metric, checked against the library itself.
class AlignmentProperties : public ::testing::Test {
protected:
    std::mt19937_64 rng{2024};
    std::uniform_int_distribution<int> dim{2, 12};
    std::uniform_real_distribution<double> unit{0.0, 1.0};
};

TEST_F(AlignmentProperties, MonotoneInThreshold) {
    for (int trial = 0; trial < 200; ++trial) {
        const int n = dim(rng), d = dim(rng);
        const SvdResult s = thin_svd(oracle::random_matrix(n, d, rng));
        const Vec y = oracle::random_vector(n, rng);
        double prev = alignment_at(s, y, 0.0);
        for (double t = 0.1; t < 8.0; t += 0.1) {
            const double cur = alignment_at(s, y, t);
            ASSERT_LE(cur, prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_F(AlignmentProperties, ScaleRotationPermutation) {
    for (int trial = 0; trial < 200; ++trial) {
        const int n = dim(rng), d = dim(rng);
        const Mat phi = oracle::random_matrix(n, d, rng);
        const Vec y = oracle::random_vector(n, rng);
        const SvdResult s = thin_svd(phi);
        const double tau = 3.0 * unit(rng) * s.sigma_max();
        const double base = alignment_at(s, y, tau);
        const double c = 0.1 + 5.0 * unit(rng);
        EXPECT_NEAR(alignment_at(thin_svd(c * phi), y, c * tau), base, 1e-8 * std::max(1.0, base));
        const Mat q = oracle::random_orthogonal(d, rng);
        EXPECT_NEAR(alignment_at(thin_svd(phi * q), y, tau), base, 1e-8 * std::max(1.0, base));
        Eigen::PermutationMatrix<Eigen::Dynamic> p(n);
        p.setIdentity();
        std::shuffle(p.indices().data(), p.indices().data() + n, rng);
        EXPECT_NEAR(alignment_at(thin_svd(p * phi), p * y, tau), base, 1e-8 * std::max(1.0, base));
    }
}
