#pragma once

// Exact no-trade band from the two stationarity conditions on the boundary
// weights, the weights alpha+-(theta) themselves, and the assembled value
// function with costs.
//
// Orientation: the costfree position is decreasing in x, so at fixed theta
// the right edge h+ is where theta is the upper (sell) edge of the vertical
// band and h- is where it is the lower (buy) edge.

#include "notrade/diffusion.hpp"
#include "notrade/errors.hpp"
#include "notrade/ode_kernel.hpp"
#include "notrade/perturbation.hpp"

#include <boost/math/interpolators/makima.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace notrade {

enum class Provenance { exact, perturbative, dp };

constexpr std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::exact: return "exact";
        case Provenance::perturbative: return "perturbative";
        case Provenance::dp: return "dp";
    }
    return "unknown";
}

/// Horizontal band (h-, h+) at one position.
struct BandEdges {
    double lower = 0.0;
    double upper = 0.0;

    double width() const { return upper - lower; }
    double mid() const { return 0.5 * (lower + upper); }
};

/// Sampled theta -> (h-, h+) with a C1 interpolant between samples.
class BoundaryCurve {
public:
    BoundaryCurve(std::vector<double> thetas, std::vector<double> h_minus, std::vector<double> h_plus,
                  Provenance provenance)
        : thetas_(std::move(thetas)), lower_(std::move(h_minus)), upper_(std::move(h_plus)), provenance_(provenance) {
        const std::size_t n = thetas_.size();
        if (n < 2 || lower_.size() != n || upper_.size() != n)
            fail(ErrorCode::InvalidArgument, "boundary curve needs matching arrays of at least two points");
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0 && !(thetas_[i] > thetas_[i - 1]))
                fail(ErrorCode::InvalidArgument, "boundary curve thetas must be strictly increasing");
            if (!(lower_[i] <= upper_[i]))
                fail(ErrorCode::InvalidArgument, "boundary curve requires h_minus <= h_plus");
        }
        if (n >= 4) {
            using boost::math::interpolators::makima;
            lower_fit_ = std::make_shared<makima<std::vector<double>>>(std::vector<double>(thetas_),
                                                                      std::vector<double>(lower_));
            upper_fit_ = std::make_shared<makima<std::vector<double>>>(std::vector<double>(thetas_),
                                                                      std::vector<double>(upper_));
        }
    }

    std::size_t size() const { return thetas_.size(); }
    const std::vector<double>& thetas() const { return thetas_; }
    const std::vector<double>& h_minus() const { return lower_; }
    const std::vector<double>& h_plus() const { return upper_; }
    Provenance provenance() const { return provenance_; }
    double theta_min() const { return thetas_.front(); }
    double theta_max() const { return thetas_.back(); }

    BandEdges at(double theta) const {
        if (!(theta >= theta_min() && theta <= theta_max()))
            fail(ErrorCode::OutOfRange, "theta " + std::to_string(theta) + " outside boundary curve");
        if (lower_fit_) return {(*lower_fit_)(theta), (*upper_fit_)(theta)};
        const auto it = std::upper_bound(thetas_.begin(), thetas_.end(), theta);
        const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - thetas_.begin(), 1), size() - 1) - 1;
        const double s = (theta - thetas_[i]) / (thetas_[i + 1] - thetas_[i]);
        return {lower_[i] + s * (lower_[i + 1] - lower_[i]), upper_[i] + s * (upper_[i + 1] - upper_[i])};
    }

    /// Vertical band (g-(x), g+(x)) by inverting h+ and h-. Throws
    /// OutOfRange when x is not covered by one of the edges.
    ThetaBand theta_band(double x) const {
        const auto lo = invert(x, false);
        const auto hi = invert(x, true);
        if (!lo || !hi) fail(ErrorCode::OutOfRange, "x " + std::to_string(x) + " outside boundary curve");
        return ordered(*lo, *hi);
    }

    /// As theta_band, but an uncovered edge is replaced by the nearest curve
    /// end. `clamped` reports whether that happened.
    ThetaBand theta_band_clamped(double x, bool* clamped = nullptr) const {
        auto lo = invert(x, false);
        auto hi = invert(x, true);
        if (clamped) *clamped = !lo || !hi;
        if (!lo) lo = nearest_end(x, false);
        if (!hi) hi = nearest_end(x, true);
        return ordered(*lo, *hi);
    }

private:
    /// theta at which the chosen edge passes through x.
    std::optional<double> invert(double x, bool upper) const {
        const auto& h = upper ? upper_ : lower_;
        for (std::size_t i = 0; i + 1 < size(); ++i) {
            const double fa = h[i] - x, fb = h[i + 1] - x;
            if (fa == 0.0) return thetas_[i];
            if ((fa < 0.0) == (fb < 0.0) && fb != 0.0) continue;
            if (fb == 0.0) return thetas_[i + 1];
            auto f = [&](double t) {
                const auto e = at(t);
                return (upper ? e.upper : e.lower) - x;
            };
            boost::math::tools::eps_tolerance<double> tol(50);
            std::uintmax_t iters = 100;
            const auto [a, b] = boost::math::tools::toms748_solve(f, thetas_[i], thetas_[i + 1], fa, fb, tol, iters);
            return 0.5 * (a + b);
        }
        return std::nullopt;
    }

    double nearest_end(double x, bool upper) const {
        const auto& h = upper ? upper_ : lower_;
        return std::abs(h.front() - x) < std::abs(h.back() - x) ? thetas_.front() : thetas_.back();
    }

    static ThetaBand ordered(double a, double b) { return a <= b ? ThetaBand{a, b} : ThetaBand{b, a}; }

    std::vector<double> thetas_, lower_, upper_;
    Provenance provenance_;
    std::shared_ptr<boost::math::interpolators::makima<std::vector<double>>> lower_fit_, upper_fit_;
};

/// Sample the leading-order band on a theta grid.
template <DiffusionModel M>
BoundaryCurve perturbative_curve(const M& model, const MarketConfig& cfg, const std::vector<double>& thetas) {
    PerturbativeBand<M> band(model, cfg);
    std::vector<double> lo, hi;
    for (double t : thetas) {
        const auto [a, b] = band.horizontal(t);
        lo.push_back(a);
        hi.push_back(b);
    }
    return BoundaryCurve(thetas, std::move(lo), std::move(hi), Provenance::perturbative);
}

/// Zero-width curve h- = h+ = inverse costfree position.
template <DiffusionModel M>
BoundaryCurve costfree_curve(const M& model, const MarketConfig& cfg, const std::vector<double>& thetas,
                             Provenance provenance = Provenance::exact) {
    std::vector<double> h;
    for (double t : thetas) h.push_back(costfree_inverse(model, cfg, t));
    return BoundaryCurve(thetas, h, h, provenance);
}

/// Uniform grid of positions whose bands stay inside the model domain: the
/// domain is shrunk by three leading-order half-widths before mapping
/// through the costfree position.
template <DiffusionModel M>
std::vector<double> default_theta_grid(const M& model, const MarketConfig& cfg, int n = 201) {
    if (n < 2) fail(ErrorCode::InvalidArgument, "theta grid needs at least two points");
    const Interval d = model.domain();
    const double margin = 3.0 * half_width_x(model, cfg, d.mid());
    if (!(2.0 * margin < d.width())) fail(ErrorCode::InvalidArgument, "band wider than the model domain");
    const double t0 = costfree_position(model, cfg, d.hi - margin);
    const double t1 = costfree_position(model, cfg, d.lo + margin);
    const double lo = std::min(t0, t1), hi = std::max(t0, t1);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
    return out;
}

// ---------------------------------------------------------------------------
// Boundary equations

namespace detail {

inline void check_market(const MarketConfig& kernel_cfg, const MarketConfig& cfg) {
    cfg.validate();
    if (kernel_cfg.risk_appetite != cfg.risk_appetite || kernel_cfg.discount_rate != cfg.discount_rate)
        fail(ErrorCode::InvalidArgument, "kernel was built for a different G or r");
}

struct Residuals {
    double r1 = 0.0;
    double r2 = 0.0;
    double scale1 = 1.0;  // eps * Gamma_{1,0}(h+)
    double scale2 = 1.0;  // eps * Gamma_{1,0}(h-)

    std::array<double, 2> scaled() const { return {r1 / scale1, r2 / scale2}; }
};

template <OdeKernel K>
Residuals residuals(const K& kernel, const MarketConfig& cfg, double theta, double hm, double hp) {
    const auto cp = kernel.complementary(hp, 1);
    const auto cm = kernel.complementary(hm, 1);
    const double Cp_p = cp.plus[0], dCp_p = cp.plus[1], Cm_p = cp.minus[0], dCm_p = cp.minus[1];
    const double Cp_m = cm.plus[0], dCp_m = cm.plus[1], Cm_m = cm.minus[0], dCm_m = cm.minus[1];
    const IValue ip = i_function(kernel, hp, theta);
    const IValue im = i_function(kernel, hm, theta);
    const double eb = cfg.eps_buy, es = cfg.eps_sell;
    const double d = Cp_p * Cm_m - Cp_m * Cm_p;

    Residuals out;
    out.r1 = (dCp_p * (eb * Cm_p + es * Cm_m) - dCm_p * (eb * Cp_p + es * Cp_m)) +
             ip.value * (dCp_p * Cm_m - dCm_p * Cp_m) + im.value * (dCm_p * Cp_p - dCp_p * Cm_p) - ip.d1 * d;
    out.r2 = (dCm_m * (eb * Cp_p + es * Cp_m) - dCp_m * (eb * Cm_p + es * Cm_m)) +
             ip.value * (dCm_m * Cp_m - dCp_m * Cm_m) + im.value * (dCp_m * Cm_p - dCm_m * Cp_p) + im.d1 * d;
    const double eps = cfg.eps() > 0.0 ? cfg.eps() : 1.0;
    out.scale1 = eps * cp.wronskian();
    out.scale2 = eps * cm.wronskian();
    return out;
}

inline double max_abs(const std::array<double, 2>& v) { return std::max(std::abs(v[0]), std::abs(v[1])); }

}  // namespace detail

/// Left-hand sides of the two optimal-boundary equations at (h-, h+).
template <OdeKernel K>
std::pair<double, double> boundary_residuals(const K& kernel, const MarketConfig& cfg, double theta, double h_minus,
                                             double h_plus) {
    const auto r = detail::residuals(kernel, cfg, theta, h_minus, h_plus);
    return {r.r1, r.r2};
}

/// Residuals divided by eps * Gamma_{1,0} at the respective edge; invariant
/// under rescaling of C+ and C-.
template <OdeKernel K>
std::pair<double, double> scaled_boundary_residuals(const K& kernel, const MarketConfig& cfg, double theta,
                                                    double h_minus, double h_plus) {
    const auto r = detail::residuals(kernel, cfg, theta, h_minus, h_plus).scaled();
    return {r[0], r[1]};
}

struct NewtonOptions {
    int max_iters = 100;
    double residual_tol = 1e-10;
    double step_tol = 1e-12;
    double fd_step = 1e-7;  // relative to the band width
};

/// Damped Newton on the scaled residuals from `seed`.
template <OdeKernel K>
BandEdges solve_boundary_at(const K& kernel, const MarketConfig& cfg, double theta, BandEdges seed,
                            const NewtonOptions& opts = {}) {
    detail::check_market(kernel.market(), cfg);
    if (!(seed.lower < seed.upper)) fail(ErrorCode::DegenerateWidth, "seed band is not ordered");
    const Interval dom = kernel.domain();
    auto eval = [&](const BandEdges& b) { return detail::residuals(kernel, cfg, theta, b.lower, b.upper).scaled(); };
    auto admissible = [&](const BandEdges& b) {
        return b.lower < b.upper && dom.contains(b.lower) && dom.contains(b.upper);
    };

    BandEdges x = seed;
    auto f = eval(x);
    for (int it = 0; it < opts.max_iters; ++it) {
        if (detail::max_abs(f) < 1e-3 * opts.residual_tol) return x;

        const double h = opts.fd_step * x.width();
        const auto fl = eval({x.lower + h, x.upper});
        const auto fu = eval({x.lower, x.upper + h});
        const double j00 = (fl[0] - f[0]) / h, j01 = (fu[0] - f[0]) / h;
        const double j10 = (fl[1] - f[1]) / h, j11 = (fu[1] - f[1]) / h;
        const double det = j00 * j11 - j01 * j10;
        if (!std::isfinite(det) || det == 0.0)
            fail(ErrorCode::NoConvergence, "singular Jacobian at theta=" + std::to_string(theta));
        const double sl = -(j11 * f[0] - j01 * f[1]) / det;
        const double su = -(-j10 * f[0] + j00 * f[1]) / det;

        const double merit = detail::max_abs(f);
        double lambda = 1.0;
        bool ordered = false, accepted = false;
        for (int k = 0; k < 60 && !accepted; ++k, lambda *= 0.5) {
            const BandEdges trial{x.lower + lambda * sl, x.upper + lambda * su};
            if (!admissible(trial)) continue;
            ordered = true;
            const auto ft = eval(trial);
            const double mt = detail::max_abs(ft);
            if (!std::isfinite(mt) || (mt >= (1.0 - 1e-4 * lambda) * merit && mt >= opts.residual_tol)) continue;
            accepted = true;
            const double step = lambda * std::max(std::abs(sl), std::abs(su));
            x = trial;
            f = ft;
            const double size = std::max({1.0, std::abs(x.lower), std::abs(x.upper)});
            if (mt < opts.residual_tol && step < opts.step_tol * size) return x;
        }
        if (accepted) continue;
        if (!ordered) fail(ErrorCode::DegenerateWidth, "band collapsed at theta=" + std::to_string(theta));
        if (detail::max_abs(f) < opts.residual_tol) return x;
        fail(ErrorCode::NoConvergence, "line search stalled at theta=" + std::to_string(theta));
    }
    if (detail::max_abs(f) < opts.residual_tol) return x;
    fail(ErrorCode::NoConvergence, "Newton iteration limit at theta=" + std::to_string(theta));
}

/// Slow fallback: for each h- solve the first equation for h+, then solve
/// the second equation along that contour. Both by bracketing.
template <OdeKernel K>
BandEdges solve_boundary_nested(const K& kernel, const MarketConfig& cfg, double theta, BandEdges seed) {
    detail::check_market(kernel.market(), cfg);
    const Interval dom = kernel.domain();
    const double w0 = std::max(seed.width(), 1e-6 * dom.width());
    boost::math::tools::eps_tolerance<double> tol(48);

    // Root of g on (lo, hi) found by expanding outwards from `start`.
    auto bracket_root = [&](auto g, double start, double lo, double hi) -> std::optional<double> {
        start = std::clamp(start, lo, hi);
        const double g0 = g(start);
        if (g0 == 0.0) return start;
        double step = 0.25 * w0;
        double a = start, b = start, ga = g0, gb = g0;
        for (int k = 0; k < 80; ++k, step *= 1.6) {
            const double na = std::max(lo, start - step), nb = std::min(hi, start + step);
            if (na < a) {
                const double gna = g(na);
                if ((gna < 0.0) != (ga < 0.0)) {
                    std::uintmax_t iters = 200;
                    const auto r = boost::math::tools::toms748_solve(g, na, a, gna, ga, tol, iters);
                    return 0.5 * (r.first + r.second);
                }
                a = na;
                ga = gna;
            }
            if (nb > b) {
                const double gnb = g(nb);
                if ((gnb < 0.0) != (gb < 0.0)) {
                    std::uintmax_t iters = 200;
                    const auto r = boost::math::tools::toms748_solve(g, b, nb, gb, gnb, tol, iters);
                    return 0.5 * (r.first + r.second);
                }
                b = nb;
                gb = gnb;
            }
            if (a <= lo && b >= hi) break;
        }
        return std::nullopt;
    };

    auto upper_for = [&](double hm) -> std::optional<double> {
        auto g = [&](double hp) { return detail::residuals(kernel, cfg, theta, hm, hp).scaled()[0]; };
        const double floor = hm + 1e-9 * w0;
        return bracket_root(g, std::max(seed.upper, floor), floor, dom.hi);
    };
    auto outer = [&](double hm) {
        const auto hp = upper_for(hm);
        if (!hp) fail(ErrorCode::NoConvergence, "no h+ root on nested contour at theta=" + std::to_string(theta));
        return detail::residuals(kernel, cfg, theta, hm, *hp).scaled()[1];
    };
    const auto hm = bracket_root(outer, seed.lower, dom.lo, seed.upper - 1e-9 * w0);
    if (!hm) fail(ErrorCode::NoConvergence, "nested search found no root at theta=" + std::to_string(theta));
    const auto hp = upper_for(*hm);
    if (!hp || !(*hp > *hm)) fail(ErrorCode::DegenerateWidth, "nested search collapsed at theta=" + std::to_string(theta));
    return {*hm, *hp};
}

/// Continuation in theta. The first point is seeded from the leading-order
/// band; each later point from its predecessor shifted by the change in the
/// leading-order band. Failed Newton solves retry from the leading-order
/// seed, then fall back to the nested solve. Without costs the band is the
/// costfree line.
template <OdeKernel K>
BoundaryCurve solve_boundary_curve(const K& kernel, const MarketConfig& cfg, const std::vector<double>& thetas,
                                   const NewtonOptions& opts = {}) {
    detail::check_market(kernel.market(), cfg);
    if (thetas.size() < 2) fail(ErrorCode::InvalidArgument, "theta grid needs at least two points");
    const auto& model = kernel.model();
    require_monotone_costfree(model, cfg);
    if (rebalancing_gamma(model, cfg, kernel.domain().mid()) > 0.0)
        fail(ErrorCode::NotMonotone, "boundary solver requires a decreasing costfree position");
    if (cfg.eps_buy == 0.0 && cfg.eps_sell == 0.0) return costfree_curve(model, cfg, thetas);
    PerturbativeBand<std::decay_t<decltype(model)>> pert(model, cfg);

    auto pert_seed = [&](double t) {
        const auto [a, b] = pert.horizontal(t);
        return BandEdges{a, b};
    };

    std::vector<double> lo(thetas.size()), hi(thetas.size());
    BandEdges prev{}, prev_pert{};
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        const double t = thetas[i];
        if (i > 0 && !(t > thetas[i - 1])) fail(ErrorCode::InvalidArgument, "theta grid must be increasing");
        const BandEdges p = pert_seed(t);
        BandEdges seed = p;
        if (i > 0) {
            seed = {prev.lower + (p.lower - prev_pert.lower), prev.upper + (p.upper - prev_pert.upper)};
            if (!(seed.lower < seed.upper)) seed = prev;
        }
        BandEdges sol;
        try {
            sol = solve_boundary_at(kernel, cfg, t, seed, opts);
        } catch (const NumericalError& e) {
            if (e.code() != ErrorCode::NoConvergence && e.code() != ErrorCode::DegenerateWidth) throw;
            try {
                sol = solve_boundary_at(kernel, cfg, t, p, opts);
            } catch (const NumericalError& e2) {
                if (e2.code() != ErrorCode::NoConvergence && e2.code() != ErrorCode::DegenerateWidth) throw;
                sol = solve_boundary_nested(kernel, cfg, t, seed);
            }
        }
        lo[i] = sol.lower;
        hi[i] = sol.upper;
        prev = sol;
        prev_pert = p;
    }
    return BoundaryCurve(thetas, std::move(lo), std::move(hi), Provenance::exact);
}

// ---------------------------------------------------------------------------
// Boundary weights

struct AlphaSlopes {
    double plus = 0.0;   // alpha+'(theta)
    double minus = 0.0;  // alpha-'(theta)
};

/// d alpha+- / d theta from the smooth-pasting system at the band edges. In
/// the costless zero-width limit the 2x2 system degenerates and is replaced
/// by its limit at the common edge.
template <OdeKernel K>
AlphaSlopes alpha_slopes(const K& kernel, const MarketConfig& cfg, double theta, BandEdges band) {
    const auto cp = kernel.complementary(band.upper, 1);
    const auto cm = kernel.complementary(band.lower, 1);
    const double d = cp.plus[0] * cm.minus[0] - cm.plus[0] * cp.minus[0];
    if (!(d > 1e-14 * cp.plus[0] * cm.minus[0])) {
        if (cfg.eps_buy != 0.0 || cfg.eps_sell != 0.0)
            fail(ErrorCode::SingularIntegrand, "zero-width band with costs at theta=" + std::to_string(theta));
        const double x = band.mid();
        const auto c = kernel.complementary(x, 1);
        const IValue iv = i_function(kernel, x, theta);
        const double w = c.plus[0] * c.minus[1] - c.minus[0] * c.plus[1];
        return {(c.minus[0] * iv.d1 - iv.value * c.minus[1]) / w, (iv.value * c.plus[1] - c.plus[0] * iv.d1) / w};
    }
    const double ip = i_function(kernel, band.upper, theta).value;
    const double im = i_function(kernel, band.lower, theta).value;
    const double eb = cfg.eps_buy, es = cfg.eps_sell;
    return {(-es * cm.minus[0] - eb * cp.minus[0] - ip * cm.minus[0] + im * cp.minus[0]) / d,
            (eb * cp.plus[0] + es * cm.plus[0] - im * cp.plus[0] + ip * cm.plus[0]) / d};
}

/// alpha+(theta) = int_{-inf}^theta alpha+', alpha-(theta) = -int_theta^inf alpha-'.
/// Integrated cell by cell over `nodes`; the parts beyond the end nodes are
/// estimated from the exponential decay of 1/C+ (left) and 1/C- (right).
template <OdeKernel K>
class AlphaWeights {
public:
    using BandFn = std::function<BandEdges(double)>;

    AlphaWeights(const K& kernel, const MarketConfig& cfg, BandFn band, std::vector<double> nodes,
                 double rel_tol = 1e-10)
        : kernel_(&kernel), cfg_(cfg), band_(std::move(band)), nodes_(std::move(nodes)), tol_(rel_tol) {
        detail::check_market(kernel.market(), cfg);
        const std::size_t n = nodes_.size();
        if (n < 2) fail(ErrorCode::InvalidArgument, "alpha weights need at least two nodes");
        std::vector<AlphaSlopes> at_nodes(n);
        for (std::size_t i = 0; i < n; ++i) at_nodes[i] = slopes(nodes_[i]);

        // Tail decay rates from the band slope at each end.
        auto ends = [&](std::size_t a, std::size_t b, int sgn) {
            const BandEdges ea = band_(nodes_[a]), eb = band_(nodes_[b]);
            const double dh = std::abs((eb.mid() - ea.mid()) / (nodes_[b] - nodes_[a]));
            const auto c = kernel_->complementary(ea.mid(), 1);
            const double psi = sgn > 0 ? c.plus[1] / c.plus[0] : -c.minus[1] / c.minus[0];
            return psi * dh;
        };
        const double rate_lo = ends(0, 1, +1);
        const double rate_hi = ends(n - 1, n - 2, -1);
        const double tail_lo = rate_lo > 0.0 ? at_nodes.front().plus / rate_lo : 0.0;
        const double tail_hi = rate_hi > 0.0 ? -at_nodes.back().minus / rate_hi : 0.0;
        tail_error_ = std::abs(tail_lo) + std::abs(tail_hi);

        plus_.assign(n, 0.0);
        minus_.assign(n, 0.0);
        plus_[0] = tail_lo;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto [ip, im] = integrate(nodes_[i], nodes_[i + 1]);
            plus_[i + 1] = plus_[i] + ip;
            cell_minus_.push_back(im);
        }
        minus_[n - 1] = tail_hi;
        for (std::size_t i = n - 1; i-- > 0;) minus_[i] = minus_[i + 1] - cell_minus_[i];
    }

    AlphaSlopes slopes(double theta) const { return alpha_slopes(*kernel_, cfg_, theta, band_(theta)); }

    double plus(double theta) const { return values(theta).first; }
    double minus(double theta) const { return values(theta).second; }

    /// (alpha+, alpha-) at theta within the node range.
    std::pair<double, double> values(double theta) const {
        if (!(theta >= nodes_.front() && theta <= nodes_.back()))
            fail(ErrorCode::OutOfRange, "theta " + std::to_string(theta) + " outside alpha range");
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), theta);
        std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
        i = std::clamp<std::size_t>(i, 1, nodes_.size() - 1) - 1;
        if (theta == nodes_[i]) return {plus_[i], minus_[i]};
        const auto [ip, im] = integrate(nodes_[i], theta);
        return {plus_[i] + ip, minus_[i] + im};
    }

    /// Size of the tail corrections beyond the node range.
    double tail_error() const { return tail_error_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const K& kernel() const { return *kernel_; }
    const MarketConfig& market() const { return cfg_; }
    BandEdges band(double theta) const { return band_(theta); }

private:
    std::pair<double, double> integrate(double a, double b) const {
        using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
        double err = 0.0;
        const double ip = GK::integrate([&](double t) { return slopes(t).plus; }, a, b, 8, tol_, &err);
        const double im = GK::integrate([&](double t) { return slopes(t).minus; }, a, b, 8, tol_, &err);
        return {ip, im};
    }

    const K* kernel_;
    MarketConfig cfg_;
    BandFn band_;
    std::vector<double> nodes_;
    double tol_;
    std::vector<double> plus_, minus_, cell_minus_;
    double tail_error_ = 0.0;
};

template <OdeKernel K>
AlphaWeights<K> alpha_weights(const K& kernel, const MarketConfig& cfg, const BoundaryCurve& curve) {
    return AlphaWeights<K>(kernel, cfg, [curve](double t) { return curve.at(t); }, curve.thetas());
}

// ---------------------------------------------------------------------------
// Value function with costs

enum class Zone { nt, dt_sell, dt_buy };

constexpr std::string_view to_string(Zone z) {
    switch (z) {
        case Zone::nt: return "NT";
        case Zone::dt_sell: return "DT_sell";
        case Zone::dt_buy: return "DT_buy";
    }
    return "unknown";
}

struct Hold {};
struct TradeTo {
    double theta = 0.0;
};
using Action = std::variant<Hold, TradeTo>;

/// Hold inside [g-(x), g+(x)] (edges included), otherwise trade to the
/// violated edge.
inline Action optimal_action(const BoundaryCurve& curve, double x, double theta) {
    const auto [gm, gp] = curve.theta_band(x);
    if (theta > gp) return TradeTo{gp};
    if (theta < gm) return TradeTo{gm};
    return Hold{};
}

/// NT-zone form P(x, theta) + alpha+(theta) C+(x) + alpha-(theta) C-(x),
/// evaluated wherever the weights are defined.
template <OdeKernel K>
double nt_value(const AlphaWeights<K>& weights, double x, double theta) {
    const auto& k = weights.kernel();
    const auto [ap, am] = weights.values(theta);
    const auto c = k.complementary(x, 1);
    return nt_particular(k, x, theta) + ap * c.plus[0] + am * c.minus[0];
}

/// Full value surface: NT form inside the band, projection onto the nearer
/// edge minus the trading cost outside.
template <OdeKernel K>
class ValueSurface {
public:
    ValueSurface(const BoundaryCurve& curve, const AlphaWeights<K>& weights) : curve_(&curve), weights_(&weights) {}

    Zone zone(double x, double theta) const {
        const auto [gm, gp] = curve_->theta_band(x);
        if (theta > gp) return Zone::dt_sell;
        if (theta < gm) return Zone::dt_buy;
        return Zone::nt;
    }

    /// Position after the optimal trade.
    double target(double x, double theta) const {
        const auto [gm, gp] = curve_->theta_band(x);
        return std::clamp(theta, gm, gp);
    }

    double operator()(double x, double theta) const {
        const auto [gm, gp] = curve_->theta_band(x);
        const auto& cfg = weights_->market();
        if (theta > gp) return nt_value(*weights_, x, gp) - cfg.eps_sell * (theta - gp);
        if (theta < gm) return nt_value(*weights_, x, gm) - cfg.eps_buy * (gm - theta);
        return nt_value(*weights_, x, theta);
    }

private:
    const BoundaryCurve* curve_;
    const AlphaWeights<K>* weights_;
};

template <OdeKernel K>
double value_function(const BoundaryCurve& curve, const AlphaWeights<K>& weights, double x, double theta) {
    return ValueSurface<K>(curve, weights)(x, theta);
}

}  // namespace notrade
