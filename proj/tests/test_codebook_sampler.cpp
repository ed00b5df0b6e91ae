#include <cmath>

#include <gtest/gtest.h>

#include "uraflb/codebook_sampler.hpp"

using namespace uraflb;

TEST(CodebookSampler, SphericalNorms) {
    const CMat c = sample_columns(Ensemble::spherical, 0.3, 40, 25, {5, streams::codebook, 0});
    for (int j = 0; j < c.cols(); ++j) EXPECT_NEAR(c.col(j).squaredNorm(), 40 * 0.3, 1e-10);
}

TEST(CodebookSampler, GaussianMoments) {
    const int n = 200, cols = 500;
    const CMat c = sample_columns(Ensemble::gaussian, 2.0, n, cols, {9, streams::codebook, 0});
    const cplx mean = c.mean();
    EXPECT_LT(std::abs(mean), 4.0 * std::sqrt(2.0 / (n * cols)));
    const double pw = c.squaredNorm() / (n * cols);
    EXPECT_NEAR(pw, 2.0, 4.0 * 2.0 / std::sqrt(static_cast<double>(n * cols)));
}

TEST(CodebookSampler, ColumnsAreAddressable) {
    const RngCoords c{3, streams::codebook, 4};
    const CMat all = sample_columns(Ensemble::gaussian, 1.0, 8, 6, c);
    const CMat tail = sample_columns(Ensemble::gaussian, 1.0, 8, 2, c, 4);
    EXPECT_EQ((all.rightCols(2) - tail).norm(), 0.0);
    const CMat other = sample_columns(Ensemble::gaussian, 1.0, 8, 6, {3, streams::codebook, 5});
    EXPECT_GT((all - other).norm(), 0.0);
}

TEST(CodebookSampler, NoCollisionProbability) {
    // two users, two messages
    EXPECT_NEAR(std::exp(log_no_collision(2, 1)), 0.5, 1e-15);
    EXPECT_EQ(log_no_collision(3, 1), -kInf);
    EXPECT_EQ(log_no_collision(1, 5), 0.0);
}

TEST(CodebookSampler, CollisionFrequency) {
    const int trials = 20000;
    int coll = 0;
    for (int i = 0; i < trials; ++i) {
        const auto m = sample_multiplicities(2, 1, {11, streams::multiplicity, static_cast<std::uint64_t>(i)});
        int tot = 0;
        for (int x : m) tot += x;
        ASSERT_EQ(tot, 2);
        coll += m.size() == 1;
    }
    const double f = static_cast<double>(coll) / trials;
    EXPECT_NEAR(f, 0.5, 4.0 * std::sqrt(0.25 / trials));
}

TEST(CodebookSampler, LargeCodebookShortcut) {
    const auto m = sample_multiplicities(300, 100, {1, streams::multiplicity, 0});
    EXPECT_EQ(m, std::vector<int>(300, 1));
    EXPECT_TRUE(sample_multiplicities(0, 10, {}).empty());
}
