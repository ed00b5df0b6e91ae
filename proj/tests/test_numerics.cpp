#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "uraflb/numerics.hpp"

using namespace uraflb;

TEST(Numerics, LogGamma) {
    EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-15);
    EXPECT_NEAR(log_gamma(0.5), 0.5 * std::log(std::numbers::pi), 1e-14);
    EXPECT_NEAR(log_gamma(10.0), std::log(362880.0), 1e-12);
    EXPECT_THROW(log_gamma(0.0), std::domain_error);
}

TEST(Numerics, RegularizedGamma) {
    for (double x : {0.1, 1.0, 3.0, 20.0}) EXPECT_NEAR(reg_gamma_lower(1.0, x), 1.0 - std::exp(-x), 1e-15);
    EXPECT_EQ(reg_gamma_lower(3.0, 0.0), 0.0);
    EXPECT_EQ(reg_gamma_upper(3.0, 0.0), 1.0);
    // P(5,5) = 1 - e^{-5} sum_{k<5} 5^k / k!
    double s = 0.0, term = 1.0;
    for (int k = 0; k < 5; ++k) {
        s += term;
        term *= 5.0 / (k + 1);
    }
    EXPECT_NEAR(reg_gamma_lower(5.0, 5.0), 1.0 - std::exp(-5.0) * s, 1e-14);
    EXPECT_NEAR(reg_gamma_lower(7.5, 4.0) + reg_gamma_upper(7.5, 4.0), 1.0, 1e-14);
}

TEST(Numerics, ChiSquare) {
    EXPECT_NEAR(chi2_cdf(2, 2.0 * std::log(2.0)), 0.5, 1e-15);
    EXPECT_EQ(chi2_quantile(32, 0.0), 0.0);
    EXPECT_TRUE(std::isinf(chi2_quantile(32, 1.0)));
    const double x = chi2_quantile(16, 1e-3);
    EXPECT_NEAR(chi2_cdf(16, x), 1e-3, 1e-13);
    const double y = chi2_isf(128, 1e-40);
    EXPECT_NEAR(std::log(chi2_sf(128, y)), std::log(1e-40), 1e-9);
    EXPECT_THROW(chi2_quantile(4, 1.5), std::domain_error);
}

TEST(Numerics, Binomials) {
    EXPECT_EQ(log_binomial(10, 0), 0.0);
    EXPECT_NEAR(log_binomial(4, 2), std::log(6.0), 1e-14);
    EXPECT_EQ(log_binomial(4, 5), -kInf);
    EXPECT_NEAR(log_binomial_pow2(3, 2), std::log(28.0), 1e-13);
    EXPECT_NEAR(log_binomial_pow2(20, 7), log_binomial(std::ldexp(1.0, 20), 7), 1e-9);
    // 2^100 choose 1 = 2^100
    EXPECT_NEAR(log_binomial_pow2(100, 1), 100 * kLn2, 1e-12);
}

TEST(Numerics, BinaryEntropy) {
    EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
    EXPECT_EQ(binary_entropy(0.0), 0.0);
    EXPECT_EQ(binary_entropy(1.0), 0.0);
    EXPECT_NEAR(binary_entropy(0.11), -0.11 * std::log2(0.11) - 0.89 * std::log2(0.89), 1e-15);
}

TEST(Numerics, LogMeanExp) {
    EXPECT_NEAR(log_mean_exp({0.0, 0.0, 0.0}), 0.0, 1e-15);
    EXPECT_NEAR(log_mean_exp({-kInf, 0.0}), std::log(0.5), 1e-15);
    EXPECT_EQ(log_mean_exp({-kInf, -kInf}), -kInf);
    EXPECT_NEAR(log_mean_exp({1000.0, 1000.0}), 1000.0, 1e-12);
    EXPECT_THROW(log_mean_exp({}), std::invalid_argument);
    EXPECT_NEAR(log_add(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
}

TEST(Numerics, MinimizeScalar) {
    auto q = minimize_scalar([](double x) { return (x - 2.0) * (x - 2.0); }, {0.0, 5.0, Scale::linear, 20, 80});
    EXPECT_TRUE(q.feasible);
    EXPECT_NEAR(q.argmin, 2.0, 1e-6);

    auto m = minimize_scalar([](double x) { return x; }, {1.0, 3.0, Scale::linear, 10, 40});
    EXPECT_NEAR(m.argmin, 1.0, 1e-9);

    const double a = 0.5, b = 3.0;
    auto l = minimize_scalar([&](double x) { return a * x - b * std::log1p(x); },
                             {0.0, 100.0, Scale::logarithmic, 30, 80});
    EXPECT_NEAR(l.argmin, b / a - 1.0, 1e-5);

    auto none = minimize_scalar([](double) { return kInf; }, {0.0, 1.0, Scale::linear, 5, 5});
    EXPECT_FALSE(none.feasible);

    auto g = golden_section([](double x) { return std::cos(x); }, 2.0, 4.5, 80);
    EXPECT_NEAR(g.argmin, std::numbers::pi, 1e-6);
}
