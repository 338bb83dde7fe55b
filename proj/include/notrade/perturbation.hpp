#pragma once

// Leading-order small-cost band: half-widths scale as eps^(1/3), midpoint
// displacements as eps^(2/3). Also used to seed the exact solver.

#include "notrade/diffusion.hpp"
#include "notrade/errors.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace notrade {

namespace detail {
template <DiffusionModel M>
double nonzero_gamma(const M& model, const MarketConfig& cfg, double x) {
    const double g = rebalancing_gamma(model, cfg, x);
    if (g == 0.0) fail(ErrorCode::ZeroGamma, "rebalancing gamma vanishes at x=" + std::to_string(x));
    return g;
}
}  // namespace detail

/// Horizontal half-width (3 eps G / (2 |g0'|))^(1/3).
template <DiffusionModel M>
double half_width_x(const M& model, const MarketConfig& cfg, double x) {
    const double g = detail::nonzero_gamma(model, cfg, x);
    return std::cbrt(3.0 * cfg.eps() * cfg.risk_appetite / (2.0 * std::abs(g)));
}

/// Vertical half-width (3 eps G g0'^2 / 2)^(1/3). Vanishes with g0'; the
/// next order, O(eps), is then the relevant one and is not modelled.
template <DiffusionModel M>
double half_width_theta(const M& model, const MarketConfig& cfg, double x) {
    const double g = rebalancing_gamma(model, cfg, x);
    return std::cbrt(1.5 * cfg.eps() * cfg.risk_appetite * g * g);
}

struct Displacement {
    double dx = 0.0;
    double dtheta = 0.0;
};

/// Midpoint shift relative to the costfree line, evaluated at theta = g0(x).
template <DiffusionModel M>
Displacement displacement(const M& model, const MarketConfig& cfg, double x) {
    const double g = std::abs(detail::nonzero_gamma(model, cfg, x));
    const double theta = costfree_position(model, cfg, x);
    const double eps = cfg.eps(), big_g = cfg.risk_appetite;
    return {-theta * std::cbrt(2.0 * eps * eps / (3.0 * g * g * big_g)),
            -theta * std::cbrt(2.0 * eps * eps * g / (3.0 * big_g))};
}

/// (theta_minus, theta_plus) of the vertical band at x.
using ThetaBand = std::pair<double, double>;

/// Explicit OU approximation
/// theta+-/G = (a - bX)/sigma^2 (1 - (2b eps^2/3 sigma^2)^(1/3)) +- (3 b^2 eps / 2 sigma^4)^(1/3).
inline ThetaBand ou_approx_boundary(const OuParams& p, const MarketConfig& cfg, double x) {
    const double eps = cfg.eps();
    const double s2 = p.sigma * p.sigma;
    const double centre = (p.a - p.b * x) / s2 * (1.0 - std::cbrt(2.0 * p.b * eps * eps / (3.0 * s2)));
    const double half = std::cbrt(3.0 * p.b * p.b * eps / (2.0 * s2 * s2));
    return {cfg.risk_appetite * (centre - half), cfg.risk_appetite * (centre + half)};
}

/// Explicit extended-OU approximation; requires nu <= 1/4.
inline ThetaBand extou_approx_boundary(const ExtOuParams& p, const MarketConfig& cfg, double x) {
    if (p.nu > 0.25) fail(ErrorCode::NuTooLarge, "extended OU approximation requires nu <= 1/4");
    const double eps = cfg.eps();
    const double s2 = p.sigma * p.sigma;
    const double u = 1.0 + p.c * p.c * x * x;
    const double shape = 1.0 - 4.0 * p.nu * p.c * p.c * x * x / u;
    const double costfree = -p.b * x / (s2 * std::pow(u, 2.0 * p.nu));
    const double shift = p.b * x / s2 * std::cbrt(2.0 * p.b * eps * eps / (3.0 * s2)) * std::cbrt(shape) /
                         std::pow(u, 8.0 * p.nu / 3.0);
    const double half = std::cbrt(3.0 * p.b * p.b * eps / (2.0 * s2 * s2)) * std::pow(shape, 2.0 / 3.0) /
                        std::pow(u, 4.0 * p.nu / 3.0);
    const double centre = costfree + shift;
    return {cfg.risk_appetite * (centre - half), cfg.risk_appetite * (centre + half)};
}

/// Generic leading-order band assembled from the rebalancing gamma.
template <DiffusionModel M>
class PerturbativeBand {
public:
    PerturbativeBand(M model, const MarketConfig& cfg) : model_(std::move(model)), cfg_(cfg) {}

    /// Vertical band at market value x.
    ThetaBand vertical(double x) const {
        const double centre = costfree_position(model_, cfg_, x) + displacement(model_, cfg_, x).dtheta;
        const double half = half_width_theta(model_, cfg_, x);
        return {centre - half, centre + half};
    }

    /// Horizontal band (h-, h+) at position theta.
    std::pair<double, double> horizontal(double theta) const {
        const double x0 = costfree_inverse(model_, cfg_, theta);
        const double centre = x0 + displacement(model_, cfg_, x0).dx;
        const double half = half_width_x(model_, cfg_, x0);
        return {centre - half, centre + half};
    }

    const M& model() const { return model_; }
    const MarketConfig& market() const { return cfg_; }

private:
    M model_;
    MarketConfig cfg_;
};

}  // namespace notrade
