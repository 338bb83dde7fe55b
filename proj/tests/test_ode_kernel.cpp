#include "notrade/ode_kernel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace notrade;

namespace {

const MarketConfig kMarket{2.0, 0.05, 0.0, 0.0};

const OuModel& standard_ou() {
    static const OuModel m(OuParams{0.0, 0.5, 1.0});
    return m;
}

const OuKernel& ou_kernel() {
    static const OuKernel k(standard_ou(), kMarket);
    return k;
}

// (-r + L) f at x from a five-point stencil of f.
template <class M, class F>
double generator_residual(const M& model, double r, F f, double x, double h = 1e-3) {
    const double fm2 = f(x - 2 * h), fm1 = f(x - h), f0 = f(x), fp1 = f(x + h), fp2 = f(x + 2 * h);
    const double d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h);
    const double d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h);
    const double s = model.volatility(x);
    return -r * f0 + model.drift(x) * d1 + 0.5 * s * s * d2;
}

}  // namespace

TEST(OuKernel, ComplementaryAtOrigin) {
    const auto c = ou_kernel().complementary(0.0);
    const double d = std::pow(2.0, 0.05 - 1.0) * std::tgamma(0.05);
    EXPECT_NEAR(c.plus[0], d, 1e-9 * d);
    EXPECT_NEAR(c.minus[0], d, 1e-9 * d);
    EXPECT_NEAR(c.plus[0], 10.078, 1e-3);
    EXPECT_EQ(ou_kernel().flavor(), KernelFlavor::closed_form_ou);
}

TEST(OuKernel, MonotoneAndPositiveWronskian) {
    const Interval d = standard_ou().domain();
    for (int i = 0; i < 100; ++i) {
        const double x = d.lo + d.width() * (i + 0.5) / 100;
        const auto c = ou_kernel().complementary(x);
        EXPECT_GT(c.plus[0], 0.0);
        EXPECT_GT(c.minus[0], 0.0);
        EXPECT_GT(c.plus[1], 0.0);
        EXPECT_LT(c.minus[1], 0.0);
        EXPECT_GT(c.wronskian(), 0.0);
    }
}

TEST(OuKernel, WronskianClosedForm) {
    // d/dx = (1/s) d/dz, so W_x = W_z / s with s the stationary sd.
    const double s = standard_ou().stationary_sd();
    for (double x : {-4.0, -1.0, 0.0, 2.0, 4.5}) {
        const double w = ou_kernel().complementary(x).wronskian();
        const double ref = ou_wronskian(0.1, standard_ou().z_score(x)) / s;
        EXPECT_NEAR(w, ref, 1e-8 * ref) << x;
    }
}

TEST(OuKernel, ComplementaryResiduals) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int k = 0; k < 50; ++k) {
        const double x = u(rng);
        for (int sgn : {+1, -1}) {
            auto f = [&](double y) {
                const auto c = ou_kernel().complementary(y);
                return sgn > 0 ? c.plus[0] : c.minus[0];
            };
            EXPECT_LT(std::abs(generator_residual(standard_ou(), 0.05, f, x)), 1e-6 * 0.05 * f(x)) << x;
        }
    }
}

TEST(OuKernel, IFunctionClosedForm) {
    EXPECT_NEAR(i_function(ou_kernel(), 1.0, 0.0).value, -1.0 / 1.1, 1e-12);
    EXPECT_NEAR(i_function(ou_kernel(), 0.0, 1.0).value, -10.0, 1e-12);
    EXPECT_NEAR(i_function(ou_kernel(), 0.3, 0.7).d1, -1.0 / 1.1, 1e-12);
}

TEST(OuKernel, IFunctionResidual) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(-4.0, 4.0), ut(-4.0, 4.0);
    for (int k = 0; k < 50; ++k) {
        const double x = ux(rng), th = ut(rng);
        auto f = [&](double y) { return i_function(ou_kernel(), y, th).value; };
        const double src = utility_rate_slope(standard_ou(), kMarket, x, th);
        const double res = generator_residual(standard_ou(), 0.05, f, x) + src;
        EXPECT_LT(std::abs(res), 1e-6 * std::max(1.0, std::abs(src))) << x << " " << th;
    }
}

TEST(OuKernel, CostfreeValueClosedForm) {
    EXPECT_NEAR(ou_kernel().costfree_value(0.0), 0.5 / 1.05 * 10.0, 1e-12);
    EXPECT_NEAR(ou_kernel().costfree_value(0.0), 4.7619, 1e-4);
    auto f = [&](double y) { return ou_kernel().costfree_value(y); };
    for (double x : {-2.0, 0.0, 1.5}) {
        const double src = utility_rate(standard_ou(), kMarket, x, costfree_position(standard_ou(), kMarket, x));
        EXPECT_NEAR(generator_residual(standard_ou(), 0.05, f, x) + src, 0.0, 1e-7);
    }
}

TEST(GreensFunction, ContinuousPositiveAndJump) {
    const double xi = 0.0, h = 1e-6;
    EXPECT_NEAR(greens_function(ou_kernel(), xi - 1e-12, xi), greens_function(ou_kernel(), xi + 1e-12, xi), 1e-10);
    const double left = (greens_function(ou_kernel(), xi, xi) - greens_function(ou_kernel(), xi - h, xi)) / h;
    const double right = (greens_function(ou_kernel(), xi + h, xi) - greens_function(ou_kernel(), xi, xi)) / h;
    EXPECT_NEAR(right - left, -2.0, 1e-5);
    for (double x = -5.0; x <= 5.0; x += 0.5)
        for (double y = -5.0; y <= 5.0; y += 0.5) EXPECT_GT(greens_function(ou_kernel(), x, y), 0.0);
}

TEST(GreensFunction, JumpScalesWithLocalVolatility) {
    const ExtOuModel ext(ExtOuParams{0.5, 1.0, 1.0, 0.125});
    const auto k = build_kernel(ext, kMarket);
    const double xi = 1.0, h = 1e-5;
    const double g0 = greens_function(k, xi, xi);
    const double jump = (greens_function(k, xi + h, xi) - g0) / h - (g0 - greens_function(k, xi - h, xi)) / h;
    const double s = ext.volatility(xi);
    EXPECT_NEAR(jump, -2.0 / (s * s), 1e-4);
}

TEST(GreensFunction, IntegratesConstantSource) {
    const double v = greens_integral(ou_kernel(), [](double) { return 0.05; }, 0.0);
    EXPECT_NEAR(v, 1.0, 1e-6);
}

TEST(GreensFunction, ReproducesCostfreeValue) {
    const auto& m = standard_ou();
    auto src = [&](double xi) { return utility_rate(m, kMarket, xi, costfree_position(m, kMarket, xi)); };
    for (double x = -3.0; x <= 3.0; x += 0.75) {
        const double ref = ou_kernel().costfree_value(x);
        EXPECT_NEAR(greens_integral(ou_kernel(), src, x), ref, 1e-6 * ref) << x;
    }
}

TEST(GreensFunction, ReproducesIFunction) {
    const auto& m = standard_ou();
    for (double th : {-1.0, 0.5}) {
        auto src = [&](double xi) { return utility_rate_slope(m, kMarket, xi, th); };
        for (double x : {-2.0, 0.0, 1.0}) {
            const double ref = i_function(ou_kernel(), x, th).value;
            EXPECT_NEAR(greens_integral(ou_kernel(), src, x), ref, 1e-6 * std::abs(ref));
        }
    }
}

TEST(GammaInvariants, OuHandValues) {
    EXPECT_NEAR(gamma_invariants(ou_kernel(), 0.0).g21, -0.1, 1e-8);
    EXPECT_NEAR(gamma_invariants(ou_kernel(), 1.0).g20, 1.0, 1e-8);
}

TEST(GammaInvariants, MatchClosedForms) {
    for (double x : {-3.0, -1.0, 0.0, 0.7, 2.5}) {
        const auto a = gamma_invariants(ou_kernel(), x);
        const auto b = gamma_closed_forms(standard_ou(), kMarket, x);
        EXPECT_NEAR(a.g20, b.g20, 1e-6 * std::max(1.0, std::abs(b.g20)));
        EXPECT_NEAR(a.g21, b.g21, 1e-6 * std::max(1.0, std::abs(b.g21)));
        EXPECT_NEAR(a.g30, b.g30, 1e-6 * std::max(1.0, std::abs(b.g30)));
        EXPECT_NEAR(a.g31, b.g31, 1e-6 * std::max(1.0, std::abs(b.g31)));
    }
}

TEST(GammaInvariants, ThirdOrderAgainstFiniteDifferences) {
    // Gamma_{3,1} / Gamma_{1,0} from C'' differenced once more.
    const double x = 0.0, h = 1e-4;
    auto c = [&](double y) { return ou_kernel().complementary(y, 3); };
    const auto c0 = c(x), cl = c(x - h), cr = c(x + h);
    const double p3 = (cr.plus[2] - cl.plus[2]) / (2 * h), m3 = (cr.minus[2] - cl.minus[2]) / (2 * h);
    const double g31 = p3 * c0.minus[1] - m3 * c0.plus[1];
    const double g10 = c0.plus[1] * c0.minus[0] - c0.minus[1] * c0.plus[0];
    EXPECT_NEAR(gamma_invariants(ou_kernel(), x).g31, g31 / g10, 1e-6);
}

TEST(NumericKernel, ProportionalToClosedForm) {
    const GenericModel g([](double x) { return -0.5 * x; }, [](double) { return 1.0; }, standard_ou().domain(),
                         [](double) { return -0.5; }, [](double) { return 0.0; });
    const auto nk = build_kernel(g, kMarket);
    EXPECT_EQ(nk.flavor(), KernelFlavor::numeric_general);
    const auto n0 = nk.complementary(0.0), c0 = ou_kernel().complementary(0.0);
    const double rp = n0.plus[0] / c0.plus[0], rm = n0.minus[0] / c0.minus[0];
    for (double x = -3.0; x <= 3.0; x += 0.25) {
        const auto n = nk.complementary(x), c = ou_kernel().complementary(x);
        EXPECT_NEAR(n.plus[0] / c.plus[0], rp, 1e-6 * rp) << x;
        EXPECT_NEAR(n.minus[0] / c.minus[0], rm, 1e-6 * rm) << x;
        EXPECT_NEAR(n.plus[1] / n.plus[0], c.plus[1] / c.plus[0], 1e-6 * std::abs(c.plus[1] / c.plus[0]));
    }
}

TEST(NumericKernel, ParticularAndCostfreeMatchOu) {
    const GenericModel g([](double x) { return -0.5 * x; }, [](double) { return 1.0; }, standard_ou().domain());
    const auto nk = build_kernel(g, kMarket);
    for (double x : {-3.0, -1.0, 0.0, 2.0}) {
        const double f0 = ou_kernel().costfree_value(x);
        EXPECT_NEAR(nk.costfree_value(x), f0, 1e-6 * f0) << x;
        for (double th : {-1.0, 0.0, 2.0}) {
            const auto a = i_function(nk, x, th), b = i_function(ou_kernel(), x, th);
            EXPECT_NEAR(a.value, b.value, 1e-6 * std::max(1.0, std::abs(b.value)));
            EXPECT_NEAR(a.d1, b.d1, 1e-6 * std::max(1.0, std::abs(b.d1)));
        }
    }
}

TEST(NumericKernel, ExtendedOuResidualsAndInvariants) {
    const ExtOuModel ext(ExtOuParams{0.5, 1.0, 1.0, 0.125});
    const auto k = build_kernel(ext, kMarket);
    for (double x : {-3.0, -1.2, 0.0, 0.8, 2.9}) {
        for (int sgn : {+1, -1}) {
            auto f = [&](double y) {
                const auto c = k.complementary(y);
                return sgn > 0 ? c.plus[0] : c.minus[0];
            };
            EXPECT_LT(std::abs(generator_residual(ext, 0.05, f, x)), 1e-6 * 0.05 * f(x)) << x;
        }
        auto fi = [&](double y) { return i_function(k, y, 0.4).value; };
        const double src = utility_rate_slope(ext, kMarket, x, 0.4);
        EXPECT_NEAR(generator_residual(ext, 0.05, fi, x) + src, 0.0, 1e-6 * std::max(1.0, std::abs(src)));
        const auto a = gamma_invariants(k, x), b = gamma_closed_forms(ext, kMarket, x);
        EXPECT_NEAR(a.g20, b.g20, 1e-6 * std::max(1.0, std::abs(b.g20)));
        EXPECT_NEAR(a.g21, b.g21, 1e-6 * std::max(1.0, std::abs(b.g21)));
    }
}

TEST(NumericKernel, RiccatiBlowupOnBrokenCoefficients) {
    const GenericModel g([](double x) { return x > 2.0 ? std::nan("") : -0.5 * x; }, [](double) { return 1.0; },
                         Interval{-6.0, 6.0});
    try {
        build_kernel(g, kMarket);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.code(), ErrorCode::RiccatiBlowup);
    }
}

TEST(ScaledKernel, GreensFunctionInvariant) {
    const ScaledKernel scaled(ou_kernel(), 2.0, 3.0);
    for (double x : {-1.0, 0.5})
        for (double xi : {-0.3, 1.2})
            EXPECT_NEAR(greens_function(scaled, x, xi), greens_function(ou_kernel(), x, xi),
                        1e-12 * greens_function(ou_kernel(), x, xi));
}
