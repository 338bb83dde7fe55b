#pragma once

// Monte Carlo of the discounted utility of P&L increments under a band
// policy, Euler-Maruyama in the market value.

#include "notrade/boundary_solver.hpp"
#include "notrade/diffusion.hpp"
#include "notrade/dp_oracle.hpp"
#include "notrade/errors.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace notrade {

struct SimConfig {
    int n_paths = 10000;
    double horizon = 200.0;
    double dt = 5e-3;
    std::uint64_t seed = 1;
    double x0 = 0.0;
    double theta0 = 0.0;
    bool keep_paths = false;
    // Accrue the conditional mean theta mu dt - theta^2 sigma^2 dt / 2G instead
    // of the realized quadratic form; this is the per-step reward of the DP.
    bool expected_accrual = false;

    void validate() const {
        if (n_paths < 2) fail(ErrorCode::InvalidArgument, "simulation needs at least two paths");
        if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon)
            fail(ErrorCode::InvalidArgument, "simulation needs 0 < dt <= horizon");
    }
    long steps() const { return std::lround(horizon / dt); }
};

struct PathSummary {
    double value = 0.0;
    double terminal_x = 0.0;
    double terminal_theta = 0.0;
    long clamped_steps = 0;
};

struct SimReport {
    double mean = 0.0;            // discounted utility net of costs
    double std_error = 0.0;
    double turnover = 0.0;        // lots per unit time
    double cost_rate = 0.0;       // money per unit time, undiscounted
    double clamped_fraction = 0.0;
    double qv_ratio = 0.0;        // sum (theta dX)^2 / sum theta^2 sigma^2 dt
    double truncation_bound = 0.0; // e^{-rT} times the largest |path mean rate| / r
    long steps_per_path = 0;
    int n_paths = 0;
    std::vector<PathSummary> paths;
};

/// Band of admissible positions at each x.
template <class P>
concept BandPolicy = requires(const P& p, double x, bool& clamped) {
    { p.band(x, clamped) } -> std::same_as<ThetaBand>;
};

/// Fixed band [lo, hi] independent of x.
struct ConstantBand {
    double lo = 0.0;
    double hi = 0.0;
    ThetaBand band(double, bool& clamped) const {
        clamped = false;
        return {lo, hi};
    }
};

/// Arbitrary x -> band map with no range restriction.
struct FunctionBand {
    std::function<ThetaBand(double)> fn;
    ThetaBand band(double x, bool& clamped) const {
        clamped = false;
        return fn(x);
    }
};

/// Boundary curve inverted once onto a uniform x-table for fast lookup.
/// Outside the x-range covered by both edges the band is clamped.
class TabulatedBand {
public:
    explicit TabulatedBand(const BoundaryCurve& curve, int points = 8001) {
        const auto& lo = curve.h_minus();
        const auto& hi = curve.h_plus();
        // x covered by both edges.
        const double a = std::max(std::min(lo.front(), lo.back()), std::min(hi.front(), hi.back()));
        const double b = std::min(std::max(lo.front(), lo.back()), std::max(hi.front(), hi.back()));
        if (!(b > a)) fail(ErrorCode::InvalidArgument, "boundary curve covers no common x-range");
        x0_ = a;
        step_ = (b - a) / (points - 1);
        lower_.resize(points);
        upper_.resize(points);
        for (int i = 0; i < points; ++i) {
            const auto [gm, gp] = curve.theta_band_clamped(i == points - 1 ? b : a + step_ * i);
            lower_[i] = gm;
            upper_[i] = gp;
        }
    }

    ThetaBand band(double x, bool& clamped) const {
        const double t = (x - x0_) / step_;
        const int last = static_cast<int>(lower_.size()) - 1;
        clamped = !(t >= 0.0 && t <= last);
        if (t <= 0.0) return {lower_.front(), upper_.front()};
        if (t >= last) return {lower_.back(), upper_.back()};
        const int c = std::min(static_cast<int>(t), last - 1);
        const double s = t - c;
        return {lower_[c] + s * (lower_[c + 1] - lower_[c]), upper_[c] + s * (upper_[c + 1] - upper_[c])};
    }

private:
    double x0_ = 0.0, step_ = 1.0;
    std::vector<double> lower_, upper_;
};

/// Band read off a DP policy at the nearest x-node; positions stay on the
/// theta-grid if they start there.
class GridBand {
public:
    GridBand(const PolicyGrid& g, const DpConfig& cfg) : x_(cfg.x) {
        for (const auto& b : column_bands(g)) bands_.emplace_back(cfg.theta.at(b.lo), cfg.theta.at(b.hi));
    }
    ThetaBand band(double x, bool& clamped) const {
        clamped = x < x_.min || x > x_.max;
        return bands_[x_.nearest(x)];
    }

private:
    UniformGrid x_;
    std::vector<ThetaBand> bands_;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Pairwise sum in a fixed tree order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

}  // namespace detail

/// Independent stream for one path, keyed by (seed, path index).
inline std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path) {
    return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ path));
}

template <DiffusionModel M, BandPolicy P>
SimReport simulate_policy(const M& model, const MarketConfig& market, const P& policy, const SimConfig& sim) {
    market.validate();
    sim.validate();
    const long steps = sim.steps();
    const double dt = sim.dt, sdt = std::sqrt(dt), g = market.risk_appetite;
    const double step_discount = std::exp(-market.discount_rate * dt);

    std::vector<double> values(sim.n_paths), squares(sim.n_paths), turnover(sim.n_paths), costs(sim.n_paths),
        qv(sim.n_paths), qv_ref(sim.n_paths), rates(sim.n_paths);
    std::vector<long> clamps(sim.n_paths);
    SimReport rep;
    if (sim.keep_paths) rep.paths.resize(sim.n_paths);

    for (int p = 0; p < sim.n_paths; ++p) {
        auto eng = path_engine(sim.seed, static_cast<std::uint64_t>(p));
        boost::random::normal_distribution<double> normal;
        double x = sim.x0, theta = sim.theta0, disc = 1.0;
        double total = 0.0, traded = 0.0, paid = 0.0, q = 0.0, qr = 0.0, tail_rate = 0.0;
        long clamped_steps = 0;
        for (long n = 0; n < steps; ++n) {
            bool clamped = false;
            const auto [lo, hi] = policy.band(x, clamped);
            clamped_steps += clamped;
            double cost = 0.0;
            if (theta > hi) {
                cost = market.eps_sell * (theta - hi);
                traded += theta - hi;
                theta = hi;
            } else if (theta < lo) {
                cost = market.eps_buy * (lo - theta);
                traded += lo - theta;
                theta = lo;
            }
            const double s = model.volatility(x);
            const double dx = model.drift(x) * dt + s * sdt * normal(eng);
            const double gain = theta * dx;
            const double inc = (sim.expected_accrual ? theta * (model.drift(x) - 0.5 * theta * s * s / g) * dt
                                                     : gain - gain * gain / (2.0 * g)) -
                               cost;
            total += disc * inc;
            paid += cost;
            q += gain * gain;
            qr += theta * theta * s * s * dt;
            if (n >= steps - steps / 10) tail_rate += inc;
            x += dx;
            disc *= step_discount;
        }
        values[p] = total;
        squares[p] = total * total;
        turnover[p] = traded;
        costs[p] = paid;
        qv[p] = q;
        qv_ref[p] = qr;
        rates[p] = std::abs(tail_rate);
        clamps[p] = clamped_steps;
        if (sim.keep_paths) rep.paths[p] = {total, x, theta, clamped_steps};
    }

    const double n = sim.n_paths;
    const double horizon = steps * dt;
    rep.n_paths = sim.n_paths;
    rep.steps_per_path = steps;
    rep.mean = detail::pairwise_sum(values) / n;
    const double var = std::max(0.0, (detail::pairwise_sum(squares) - n * rep.mean * rep.mean) / (n - 1.0));
    rep.std_error = std::sqrt(var / n);
    rep.turnover = detail::pairwise_sum(turnover) / (n * horizon);
    rep.cost_rate = detail::pairwise_sum(costs) / (n * horizon);
    const double ref = detail::pairwise_sum(qv_ref);
    rep.qv_ratio = ref > 0.0 ? detail::pairwise_sum(qv) / ref : 0.0;
    long clamped_total = 0;
    for (long c : clamps) clamped_total += c;
    rep.clamped_fraction = static_cast<double>(clamped_total) / (n * static_cast<double>(steps));
    // Remaining value beyond T is at most e^{-rT} times the late accrual rate / r.
    const double late = detail::pairwise_sum(rates) / (n * std::max(1.0, steps / 10.0) * dt);
    rep.truncation_bound = std::exp(-market.discount_rate * horizon) * late / market.discount_rate;
    if (rep.clamped_fraction > 0.01)
        fail(ErrorCode::RangeExit, "fraction of clamped steps " + std::to_string(rep.clamped_fraction) + " > 1%");
    return rep;
}

template <DiffusionModel M>
SimReport simulate_policy(const M& model, const MarketConfig& market, const BoundaryCurve& curve,
                          const SimConfig& sim) {
    return simulate_policy(model, market, TabulatedBand(curve), sim);
}

// ---------------------------------------------------------------------------
// Cost ladder

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0;   // 95% interval on the slope
    double ci_high = 0.0;
};

/// Ordinary least squares of log y on log x.
inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) fail(ErrorCode::InvalidArgument, "log-log fit needs matching samples");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) fail(ErrorCode::InvalidArgument, "log-log fit needs positive samples");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = std::log(y[i]) - (f.intercept + f.slope * std::log(x[i]));
            sse += r * r;
        }
        const double se = std::sqrt(sse / (n - 2) / sxx);
        const double t = boost::math::quantile(boost::math::students_t(static_cast<double>(n - 2)), 0.975);
        f.ci_low = f.slope - t * se;
        f.ci_high = f.slope + t * se;
    } else {
        f.ci_low = f.ci_high = f.slope;
    }
    return f;
}

struct SweepRow {
    double eps = 0.0;
    double half_width = 0.0;     // exact horizontal half-width at theta0
    double analytic_loss = 0.0;  // costfree value minus exact value at (x0, theta0)
    double sim_value = 0.0;
    double sim_std_error = 0.0;
    double sim_loss = 0.0;       // costfree policy minus band policy, common paths
    double sim_loss_std_error = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    SlopeFit width_fit;
    SlopeFit analytic_loss_fit;
    SlopeFit sim_loss_fit;
};

namespace detail {

/// Mean and standard error of the per-path difference a - b of two runs on
/// common random numbers.
inline std::pair<double, double> paired_difference(const SimReport& a, const SimReport& b) {
    const std::size_t n = a.paths.size();
    if (n < 2 || b.paths.size() != n) fail(ErrorCode::InvalidArgument, "paired runs need kept, matching paths");
    std::vector<double> d(n), d2(n);
    for (std::size_t p = 0; p < n; ++p) {
        d[p] = a.paths[p].value - b.paths[p].value;
        d2[p] = d[p] * d[p];
    }
    const double mean = pairwise_sum(d) / n;
    const double var = std::max(0.0, (pairwise_sum(d2) - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// For each cost re-solve the exact band, simulate it, and compare with the
/// costfree optimum at (sim.x0, sim.theta0). Kernel must be built for the
/// base market's G and r. With `simulate` false only the analytic columns
/// are filled.
template <OdeKernel K>
SweepTable sweep_epsilon(const K& kernel, const MarketConfig& market_base, const std::vector<double>& eps_ladder,
                         const SimConfig& sim, bool simulate = true, int theta_points = 201) {
    if (eps_ladder.size() < 2) fail(ErrorCode::InvalidArgument, "cost ladder needs at least two entries");
    const auto& model = kernel.model();
    const MarketConfig costfree = market_base.with_cost(0.0);
    const FunctionBand costfree_band{[&](double x) {
        const double t = costfree_position(model, costfree, x);
        return ThetaBand{t, t};
    }};
    const double f0 = kernel.costfree_value(sim.x0);
    SimConfig paired = sim;
    paired.keep_paths = true;
    SimReport costfree_run;
    if (simulate) costfree_run = simulate_policy(model, costfree, costfree_band, paired);

    SweepTable table;
    std::vector<double> eps, widths, aloss, sloss;
    for (double e : eps_ladder) {
        const MarketConfig cfg = market_base.with_cost(e);
        const auto grid = default_theta_grid(model, cfg, theta_points);
        const auto curve = solve_boundary_curve(kernel, cfg, grid);
        const auto weights = alpha_weights(kernel, cfg, curve);
        const auto band = curve.at(sim.theta0);

        SweepRow row;
        row.eps = e;
        row.half_width = 0.5 * band.width();
        row.analytic_loss = f0 - value_function(curve, weights, sim.x0, sim.theta0);
        if (simulate) {
            const auto rep = simulate_policy(model, cfg, TabulatedBand(curve), paired);
            row.sim_value = rep.mean;
            row.sim_std_error = rep.std_error;
            std::tie(row.sim_loss, row.sim_loss_std_error) = detail::paired_difference(costfree_run, rep);
        }
        table.rows.push_back(row);
        eps.push_back(e);
        widths.push_back(row.half_width);
        aloss.push_back(row.analytic_loss);
        sloss.push_back(row.sim_loss);
    }
    table.width_fit = fit_loglog(eps, widths);
    table.analytic_loss_fit = fit_loglog(eps, aloss);
    if (simulate && std::all_of(sloss.begin(), sloss.end(), [](double v) { return v > 0.0; }))
        table.sim_loss_fit = fit_loglog(eps, sloss);
    return table;
}

}  // namespace notrade
