#pragma once

// D^{+-}_nu(x) = int_0^inf exp(+-z x) z^(nu-1) exp(-z^2/2) dz, a (nonstandard)
// parabolic-cylinder-type integral that gives the OU complementary functions.

#include "notrade/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace notrade {

enum class Sign { plus = 1, minus = -1 };

struct DnuSpec {
    double nu = 1.0;
    Sign sign = Sign::plus;
};

namespace detail {

inline constexpr int kGaussPoints = 20;

struct GaussRule {
    std::array<double, kGaussPoints> x{};
    std::array<double, kGaussPoints> w{};
};

/// Full Gauss-Legendre rule on [-1, 1].
inline const GaussRule& gauss_rule() {
    static const GaussRule rule = [] {
        using G = boost::math::quadrature::gauss<double, kGaussPoints>;
        GaussRule r;
        const auto& a = G::abscissa();
        const auto& w = G::weights();
        const int half = kGaussPoints / 2;
        for (int i = 0; i < half; ++i) {
            r.x[i] = -a[half - 1 - i];
            r.w[i] = w[half - 1 - i];
            r.x[half + i] = a[i];
            r.w[half + i] = w[i];
        }
        return r;
    }();
    return rule;
}

/// Log-scaled family D_{nu+k}(y), k = 0..N-1, all sharing one scale factor:
/// D_{nu+k}(y) = exp(log_scale) * scaled[k].
template <int N>
struct ScaledDnu {
    double log_scale = 0.0;
    std::array<double, N> scaled{};
};

/// One quadrature pass for D^+_{nu+k}(y). The integrand shares its
/// exponential across k, so derivatives come almost for free.
///
/// The integral is split at z = 1. On [0, 1] the substitution z = e^{-t}
/// turns z^(nu-1) dz into e^{-nu t} dt, which removes the endpoint
/// singularity. On [1, z*] composite Gauss-Legendre
/// panels of unit width follow the shifted Gaussian peak.
template <int N>
ScaledDnu<N> dnu_family(double nu, double y) {
    if (!(nu > 0.0)) fail(ErrorCode::DivergentOrder, "D_nu requires nu > 0");
    const auto& rule = gauss_rule();

    // Peak of (nu-1) ln z + y z - z^2/2 on z >= 1.
    const double z_peak = std::max(1.0, 0.5 * (y + std::sqrt(y * y + 4.0 * std::max(nu - 1.0, 0.0))));
    const double shift = (nu - 1.0) * std::log(z_peak) + y * z_peak - 0.5 * z_peak * z_peak;
    const double log_scale = std::max(shift, 0.0);

    // [0, 1]: unscaled, then rescaled at the end. Orders below one keep the
    // slowly decaying constant part analytic; at or above one the direct
    // integrand decays fast enough and avoids cancellation for y << 0.
    std::array<double, N> head{};
    {
        static constexpr std::array<double, 16> edges = {0.0,  0.125, 0.25, 0.5,  1.0,  1.5,  2.0,  3.0,
                                                         4.0,  6.0,   8.0,  12.0, 16.0, 24.0, 32.0, 48.0};
        std::array<bool, N> subtract{};
        for (int k = 0; k < N; ++k) {
            subtract[k] = nu + k < 1.0;
            head[k] = subtract[k] ? 1.0 / (nu + k) : 0.0;
        }
        for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
            const double a = edges[p], b = edges[p + 1];
            const double half = 0.5 * (b - a), centre = 0.5 * (a + b);
            for (int i = 0; i < kGaussPoints; ++i) {
                const double t = centre + half * rule.x[i];
                const double z = std::exp(-t);
                const double e = y * z - 0.5 * z * z;
                const double base = rule.w[i] * half * std::exp(-nu * t);
                double with_one = base * std::exp(e);
                double without_one = base * std::expm1(e);
                for (int k = 0; k < N; ++k) {
                    head[k] += subtract[k] ? without_one : with_one;
                    with_one *= z;
                    without_one *= z;
                }
            }
        }
    }

    // [1, z*]: scaled by exp(-log_scale).
    std::array<double, N> tail{};
    {
        const double z_end = std::max(10.0, z_peak + 12.0);
        const int panels = static_cast<int>(std::ceil(z_end - 1.0));
        const double width = (z_end - 1.0) / panels;
        for (int p = 0; p < panels; ++p) {
            const double a = 1.0 + p * width;
            const double half = 0.5 * width, centre = a + half;
            for (int i = 0; i < kGaussPoints; ++i) {
                const double z = centre + half * rule.x[i];
                const double e = (nu - 1.0) * std::log(z) + y * z - 0.5 * z * z - log_scale;
                double term = rule.w[i] * half * std::exp(e);
                for (int k = 0; k < N; ++k) {
                    tail[k] += term;
                    term *= z;
                }
            }
        }
    }

    ScaledDnu<N> out;
    out.log_scale = log_scale;
    const double head_scale = std::exp(-log_scale);
    for (int k = 0; k < N; ++k) out.scaled[k] = head[k] * head_scale + tail[k];
    return out;
}

}  // namespace detail

/// log D^{+-}_nu(x); usable where the value itself would overflow.
inline double log_d_nu(const DnuSpec& spec, double x) {
    const double y = spec.sign == Sign::plus ? x : -x;
    const auto f = detail::dnu_family<1>(spec.nu, y);
    return f.log_scale + std::log(f.scaled[0]);
}

inline double d_nu(const DnuSpec& spec, double x) { return std::exp(log_d_nu(spec, x)); }

/// d/dx D^{+-}_nu(x) = +-D^{+-}_{nu+1}(x).
inline double d_nu_prime(const DnuSpec& spec, double x) {
    const double s = spec.sign == Sign::plus ? 1.0 : -1.0;
    return s * d_nu(DnuSpec{spec.nu + 1.0, spec.sign}, x);
}

/// D^{+-}_nu and its first N-1 derivatives at x, in linear scale.
template <int N>
std::array<double, N> d_nu_derivatives(const DnuSpec& spec, double x) {
    const double s = spec.sign == Sign::plus ? 1.0 : -1.0;
    const auto f = detail::dnu_family<N>(spec.nu, s * x);
    const double scale = std::exp(f.log_scale);
    std::array<double, N> out{};
    double sk = 1.0;
    for (int k = 0; k < N; ++k) {
        out[k] = sk * f.scaled[k] * scale;
        sk *= s;
    }
    return out;
}

/// W{C-, C+} in z-units for C+- = D^{+-}_{r/b}(z): Gamma(r/b) / phi(z).
inline double ou_wronskian(double r_over_b, double z) {
    return std::tgamma(r_over_b) * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * z * z);
}

}  // namespace notrade
