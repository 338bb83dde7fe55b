#include "notrade/diffusion.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace notrade;

namespace {

const MarketConfig kMarket{2.0, 0.05, 0.0, 0.0};

OuModel standard_ou() { return OuModel(OuParams{0.0, 0.5, 1.0}); }

}  // namespace

TEST(UtilityRate, ZeroPositionEarnsNothing) {
    EXPECT_DOUBLE_EQ(utility_rate(standard_ou(), kMarket, 1.0, 0.0), 0.0);
}

TEST(UtilityRate, HandEvaluation) {
    EXPECT_NEAR(utility_rate(standard_ou(), kMarket, 1.0, -1.0), 0.25, 1e-15);
}

TEST(UtilityRate, SlopeVanishesAtCostfreePosition) {
    const OuModel ou = standard_ou();
    const ExtOuModel ext(ExtOuParams{0.5, 1.0, 1.0, 0.125});
    for (double x = -5.0; x <= 5.0; x += 0.25) {
        EXPECT_NEAR(utility_rate_slope(ou, kMarket, x, costfree_position(ou, kMarket, x)), 0.0, 1e-10);
        EXPECT_NEAR(utility_rate_slope(ext, kMarket, x, costfree_position(ext, kMarket, x)), 0.0, 1e-10);
    }
}

TEST(CostfreePosition, OuExamples) {
    EXPECT_DOUBLE_EQ(costfree_position(standard_ou(), kMarket, 1.0), -1.0);
    EXPECT_DOUBLE_EQ(costfree_position(standard_ou(), kMarket, 0.0), 0.0);
    const OuModel shifted(OuParams{0.3, 0.5, 1.0});
    EXPECT_NEAR(costfree_position(shifted, kMarket, 0.6), 0.0, 1e-15);
}

TEST(CostfreePosition, ExtendedOu) {
    const ExtOuModel ext(ExtOuParams{0.5, 1.0, 1.0, 0.125});
    EXPECT_NEAR(costfree_position(ext, kMarket, 1.0), -1.0 / std::pow(2.0, 0.25), 1e-14);
    EXPECT_NEAR(costfree_position(ext, kMarket, 1.0), -0.8409, 1e-4);
}

TEST(RebalancingGamma, OuIsConstant) {
    for (double x : {-4.0, -1.0, 0.0, 2.5}) EXPECT_DOUBLE_EQ(rebalancing_gamma(standard_ou(), kMarket, x), -1.0);
}

TEST(RebalancingGamma, ConstantDriftNeedsNoRebalancing) {
    const GenericModel flat([](double) { return 0.3; }, [](double) { return 1.2; }, Interval{-1.0, 1.0},
                            [](double) { return 0.0; }, [](double) { return 0.0; });
    EXPECT_DOUBLE_EQ(rebalancing_gamma(flat, kMarket, 0.2), 0.0);
}

TEST(RebalancingGamma, ExtendedOuAtOrigin) {
    const ExtOuModel ext(ExtOuParams{0.5, 1.0, 1.0, 0.125});
    EXPECT_NEAR(rebalancing_gamma(ext, kMarket, 0.0), -1.0, 1e-14);
    const double h = 1e-5;
    const double fd = (costfree_position(ext, kMarket, h) - costfree_position(ext, kMarket, -h)) / (2 * h);
    EXPECT_NEAR(fd, -1.0, 1e-9);
}

TEST(RebalancingGamma, MatchesFiniteDifferences) {
    const ExtOuModel ext(ExtOuParams{0.7, 1.3, 0.8, 0.2});
    const OuModel ou(OuParams{0.2, 1.5, 0.7});
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const double h = 1e-5;
    for (int k = 0; k < 20; ++k) {
        const double x = u(rng);
        auto check = [&](const auto& m) {
            const double fd = (costfree_position(m, kMarket, x + h) - costfree_position(m, kMarket, x - h)) / (2 * h);
            const double g = rebalancing_gamma(m, kMarket, x);
            EXPECT_NEAR(fd, g, 1e-6 * std::abs(g)) << "x=" << x;
        };
        check(ext);
        check(ou);
    }
}

TEST(GenericModel, NumericDerivativeFallback) {
    const GenericModel m([](double x) { return -0.5 * x + 0.1 * x * x; }, [](double x) { return 1.0 + 0.1 * x * x; },
                         Interval{-2.0, 2.0});
    EXPECT_NEAR(m.drift_prime(1.0), -0.3, 1e-8);
    EXPECT_NEAR(m.volatility_prime(1.0), 0.2, 1e-8);
}

TEST(CostfreeInverse, OuExamples) {
    EXPECT_NEAR(costfree_inverse(standard_ou(), kMarket, -1.0), 1.0, 1e-10);
    EXPECT_NEAR(costfree_inverse(standard_ou(), kMarket, 0.0), 0.0, 1e-10);
}

TEST(CostfreeInverse, RoundTrip) {
    const ExtOuModel ext(ExtOuParams{0.5, 1.0, 1.0, 0.25});
    const OuModel ou(OuParams{0.4, 0.8, 1.1});
    for (double x = -5.5; x <= 5.5; x += 0.5) {
        EXPECT_NEAR(costfree_inverse(ext, kMarket, costfree_position(ext, kMarket, x)), x, 1e-9);
        const double xo = ou.mean() + 0.1 * x * ou.stationary_sd() * 10.0 / 6.0;
        EXPECT_NEAR(costfree_inverse(ou, kMarket, costfree_position(ou, kMarket, xo)), xo, 1e-9);
    }
}

TEST(CostfreeInverse, OutOfRange) {
    try {
        costfree_inverse(standard_ou(), kMarket, 100.0);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
    }
}

TEST(CostfreeInverse, NonMonotoneModelRejected) {
    // Extended-OU local volatility with nu = 0.3; built generically since the
    // concrete class refuses nu > 1/4.
    const double nu = 0.3;
    const GenericModel m([](double x) { return -0.5 * x; },
                         [nu](double x) { return std::pow(1.0 + x * x, nu); }, Interval{-6.0, 6.0});
    try {
        costfree_inverse(m, kMarket, 0.5);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotMonotone);
    }
}

TEST(ExtOuModel, RejectsLargeExponent) {
    try {
        ExtOuModel m(ExtOuParams{0.5, 1.0, 1.0, 0.3});
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.code(), ErrorCode::NuTooLarge);
    }
}

TEST(ExtOuModel, ZeroExponentIsOu) {
    const ExtOuModel ext(ExtOuParams{0.5, 1.3, 2.0, 0.0});
    const OuModel ou(OuParams{0.0, 0.5, 1.3});
    for (double x = -3.0; x <= 3.0; x += 0.37) {
        EXPECT_EQ(ext.drift(x), ou.drift(x));
        EXPECT_EQ(ext.volatility(x), ou.volatility(x));
        EXPECT_EQ(ext.drift_prime(x), ou.drift_prime(x));
        EXPECT_EQ(ext.volatility_prime(x), ou.volatility_prime(x));
    }
    EXPECT_EQ(ext.domain().lo, ou.domain().lo);
    EXPECT_EQ(ext.domain().hi, ou.domain().hi);
}

TEST(OuModel, DefaultDomainIsSixStationarySd) {
    const OuModel m(OuParams{1.0, 0.5, 1.0});
    EXPECT_DOUBLE_EQ(m.domain().lo, 2.0 - 6.0);
    EXPECT_DOUBLE_EQ(m.domain().hi, 2.0 + 6.0);
}

TEST(OuModel, InvalidParameters) {
    EXPECT_THROW(OuModel(OuParams{0.0, 0.0, 1.0}), NumericalError);
    EXPECT_THROW(OuModel(OuParams{0.0, 0.5, -1.0}), NumericalError);
}

TEST(MarketConfig, DerivedCostAndValidation) {
    const MarketConfig c{2.0, 0.05, 0.08, 0.02};
    EXPECT_DOUBLE_EQ(c.eps(), 0.05);
    EXPECT_NO_THROW(c.validate());
    EXPECT_THROW((MarketConfig{-1.0, 0.05, 0.0, 0.0}.validate()), NumericalError);
    EXPECT_THROW((MarketConfig{1.0, 0.0, 0.0, 0.0}.validate()), NumericalError);
    EXPECT_THROW((MarketConfig{1.0, 0.05, -0.1, 0.0}.validate()), NumericalError);
}
