#pragma once

// Value iteration for the discrete-time Bellman recursion on an (x, theta)
// grid. Independent of the analytic route: it uses only the model
// coefficients, the utility rate and the trading costs.

#include "notrade/boundary_solver.hpp"
#include "notrade/diffusion.hpp"
#include "notrade/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace notrade {

struct UniformGrid {
    double min = 0.0;
    double max = 1.0;
    int n = 2;

    double step() const { return (max - min) / (n - 1); }
    double at(int i) const { return i == n - 1 ? max : min + step() * i; }

    int nearest(double v) const {
        const int i = static_cast<int>(std::lround((v - min) / step()));
        return std::clamp(i, 0, n - 1);
    }
};

struct DpConfig {
    UniformGrid x{-5.0, 5.0, 401};
    UniformGrid theta{-5.6, 5.6, 201};
    double dt = 0.02;
    double tol = 0.0;    // 0 selects 1e-9 * G
    int max_iters = 0;   // 0 selects ceil(40 / (r dt))
    int quad_nodes = 21;

    void validate(const MarketConfig& cfg) const {
        if (x.n < 3 || theta.n < 3 || !(x.max > x.min) || !(theta.max > theta.min))
            fail(ErrorCode::InvalidArgument, "DP grids must be increasing with at least three points");
        if (!(dt > 0.0) || !(cfg.discount_rate * dt < 1.0))
            fail(ErrorCode::InvalidArgument, "DP time step must satisfy 0 < r dt < 1");
        if (quad_nodes < 2) fail(ErrorCode::InvalidArgument, "DP quadrature needs at least two nodes");
    }

    double tolerance(const MarketConfig& cfg) const { return tol > 0.0 ? tol : 1e-9 * cfg.risk_appetite; }
    int iteration_limit(const MarketConfig& cfg) const {
        return max_iters > 0 ? max_iters : static_cast<int>(std::ceil(40.0 / (cfg.discount_rate * dt)));
    }
};

/// Default time step: 1% of the local reversion time at the domain centre.
template <DiffusionModel M>
double default_dp_dt(const M& model) {
    const double k = std::abs(model.drift_prime(model.domain().mid()));
    return k > 0.0 ? 0.01 / k : 0.01;
}

/// f(i, j) at (x_i, theta_j); stored theta-major so x is contiguous.
struct ValueGrid {
    int nx = 0, nt = 0;
    std::vector<double> v;

    ValueGrid() = default;
    ValueGrid(int nx_, int nt_, double fill = 0.0) : nx(nx_), nt(nt_), v(static_cast<std::size_t>(nx_) * nt_, fill) {}
    double& operator()(int i, int j) { return v[static_cast<std::size_t>(j) * nx + i]; }
    double operator()(int i, int j) const { return v[static_cast<std::size_t>(j) * nx + i]; }
};

/// g(i, j): theta-index held after rebalancing from theta_j at x_i.
struct PolicyGrid {
    int nx = 0, nt = 0;
    std::vector<int> g;

    PolicyGrid() = default;
    PolicyGrid(int nx_, int nt_) : nx(nx_), nt(nt_), g(static_cast<std::size_t>(nx_) * nt_, 0) {}
    int& operator()(int i, int j) { return g[static_cast<std::size_t>(j) * nx + i]; }
    int operator()(int i, int j) const { return g[static_cast<std::size_t>(j) * nx + i]; }
    bool operator==(const PolicyGrid&) const = default;
};

struct DpResult {
    ValueGrid value;
    PolicyGrid policy;
    int iterations = 0;
    int policy_stable_at = 0;    // first sweep after which the policy never changed
    double residual = 0.0;       // final sup-norm change
    int monotone_violations = 0; // sweeps in which some value decreased
};

/// Gauss-Hermite rule for int e^{-t^2} g(t) dt (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) jac(k, k - 1) = jac(k - 1, k) = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    std::vector<double> nodes(n), weights(n);
    for (int k = 0; k < n; ++k) {
        nodes[k] = es.eigenvalues()(k);
        const double v0 = es.eigenvectors()(0, k);
        weights[k] = std::sqrt(std::numbers::pi) * v0 * v0;
    }
    return {nodes, weights};
}

/// Precomputed one-step problem: transition operator and utility table.
template <DiffusionModel M>
class DpProblem {
public:
    DpProblem(const M& model, const MarketConfig& market, const DpConfig& cfg)
        : market_(market), cfg_(cfg), nx_(cfg.x.n), nt_(cfg.theta.n) {
        market_.validate();
        cfg_.validate(market_);
        build_transition(model);
        utility_.assign(static_cast<std::size_t>(nx_) * nt_, 0.0);
        for (int j = 0; j < nt_; ++j)
            for (int i = 0; i < nx_; ++i)
                utility_[idx(i, j)] = utility_rate(model, market_, cfg_.x.at(i), cfg_.theta.at(j)) * cfg_.dt;
    }

    const DpConfig& config() const { return cfg_; }
    const MarketConfig& market() const { return market_; }

    /// One Bellman backup with the maximising policy. Ties go to holding.
    std::pair<ValueGrid, PolicyGrid> step(const ValueGrid& f_in) const {
        ValueGrid out(nx_, nt_);
        PolicyGrid pol(nx_, nt_);
        std::vector<double> cont(static_cast<std::size_t>(nx_) * nt_);
        continuation(f_in, cont);
        std::vector<double> a(nt_), pre(nt_), suf(nt_);
        std::vector<int> pre_k(nt_), suf_k(nt_);
        const double eb = market_.eps_buy, es = market_.eps_sell;
        for (int i = 0; i < nx_; ++i) {
            for (int k = 0; k < nt_; ++k) a[k] = cont[idx(i, k)];
            // Selling to k <= j earns a(k) + es theta_k - es theta_j; on ties
            // the nearer (larger) k wins.
            for (int k = 0; k < nt_; ++k) {
                const double v = a[k] + es * cfg_.theta.at(k);
                if (k == 0 || v >= pre[k - 1]) {
                    pre[k] = v;
                    pre_k[k] = k;
                } else {
                    pre[k] = pre[k - 1];
                    pre_k[k] = pre_k[k - 1];
                }
            }
            for (int k = nt_ - 1; k >= 0; --k) {
                const double v = a[k] - eb * cfg_.theta.at(k);
                if (k == nt_ - 1 || v >= suf[k + 1]) {
                    suf[k] = v;
                    suf_k[k] = k;
                } else {
                    suf[k] = suf[k + 1];
                    suf_k[k] = suf_k[k + 1];
                }
            }
            for (int j = 0; j < nt_; ++j) {
                const double th = cfg_.theta.at(j);
                double best = a[j];
                int arg = j;
                const double sell = pre[j] - es * th;
                if (pre_k[j] != j && sell > best) {
                    best = sell;
                    arg = pre_k[j];
                }
                const double buy = suf[j] + eb * th;
                if (suf_k[j] != j && buy > best) {
                    best = buy;
                    arg = suf_k[j];
                }
                out(i, j) = best;
                pol(i, j) = arg;
            }
        }
        return {std::move(out), std::move(pol)};
    }

    /// Backup with the action prescribed by `policy`.
    ValueGrid step_fixed(const ValueGrid& f_in, const PolicyGrid& policy) const {
        ValueGrid out(nx_, nt_);
        std::vector<double> cont(static_cast<std::size_t>(nx_) * nt_);
        continuation(f_in, cont);
        for (int j = 0; j < nt_; ++j)
            for (int i = 0; i < nx_; ++i) {
                const int k = policy(i, j);
                out(i, j) = cont[idx(i, k)] - trade_cost(j, k);
            }
        return out;
    }

    DpResult solve() const {
        DpResult res;
        ValueGrid f(nx_, nt_);
        PolicyGrid last;
        const double tol = cfg_.tolerance(market_);
        const int limit = cfg_.iteration_limit(market_);
        for (int it = 1; it <= limit; ++it) {
            auto [fn, g] = step(f);
            double change = 0.0;
            bool decreased = false;
            for (std::size_t n = 0; n < f.v.size(); ++n) {
                const double d = fn.v[n] - f.v[n];
                change = std::max(change, std::abs(d));
                decreased = decreased || d < 0.0;
            }
            if (decreased) ++res.monotone_violations;
            if (!(g == last)) res.policy_stable_at = it;
            last = std::move(g);
            f = std::move(fn);
            res.iterations = it;
            res.residual = change;
            if (change < tol) {
                res.value = std::move(f);
                res.policy = std::move(last);
                return res;
            }
        }
        fail(ErrorCode::NoConvergence,
             "value iteration stopped at max_iters with residual " + std::to_string(res.residual));
    }

    DpResult evaluate(const PolicyGrid& policy) const {
        if (policy.nx != nx_ || policy.nt != nt_) fail(ErrorCode::InvalidArgument, "policy grid shape mismatch");
        DpResult res;
        res.policy = policy;
        ValueGrid f(nx_, nt_);
        const double tol = cfg_.tolerance(market_);
        const int limit = cfg_.iteration_limit(market_);
        for (int it = 1; it <= limit; ++it) {
            ValueGrid fn = step_fixed(f, policy);
            double change = 0.0;
            for (std::size_t n = 0; n < f.v.size(); ++n) change = std::max(change, std::abs(fn.v[n] - f.v[n]));
            f = std::move(fn);
            res.iterations = it;
            res.residual = change;
            if (change < tol) {
                res.value = std::move(f);
                return res;
            }
        }
        fail(ErrorCode::NoConvergence,
             "policy evaluation stopped at max_iters with residual " + std::to_string(res.residual));
    }

    /// Trade-to-band policy on the grid: hold inside [g-(x_i), g+(x_i)],
    /// otherwise move to the grid position nearest the violated edge.
    PolicyGrid snap_policy(const BoundaryCurve& curve) const {
        PolicyGrid pol(nx_, nt_);
        for (int i = 0; i < nx_; ++i) {
            const auto [gm, gp] = curve.theta_band_clamped(cfg_.x.at(i));
            const int jm = std::clamp(static_cast<int>(std::ceil((gm - cfg_.theta.min) / cfg_.theta.step() - 1e-9)), 0,
                                      nt_ - 1);
            const int jp = std::clamp(static_cast<int>(std::floor((gp - cfg_.theta.min) / cfg_.theta.step() + 1e-9)),
                                      0, nt_ - 1);
            for (int j = 0; j < nt_; ++j) {
                if (jm > jp) pol(i, j) = cfg_.theta.nearest(0.5 * (gm + gp));
                else pol(i, j) = std::clamp(j, jm, jp);
            }
        }
        return pol;
    }

private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }

    double trade_cost(int from, int to) const {
        const double d = cfg_.theta.at(to) - cfg_.theta.at(from);
        return d > 0.0 ? market_.eps_buy * d : -market_.eps_sell * d;
    }

    /// Sparse rows of E[f(X_dt) | X_0 = x_i] with linear interpolation;
    /// mass beyond the grid is lumped onto the end points.
    void build_transition(const M& model) {
        const auto [t, w] = gauss_hermite(cfg_.quad_nodes);
        row_start_.assign(nx_, 0);
        row_.assign(nx_, {});
        const double h = cfg_.x.step();
        for (int i = 0; i < nx_; ++i) {
            const double x = cfg_.x.at(i);
            const double mean = x + model.drift(x) * cfg_.dt;
            const double sd = model.volatility(x) * std::sqrt(cfg_.dt);
            std::vector<std::pair<int, double>> acc;
            for (std::size_t k = 0; k < t.size(); ++k) {
                const double y = mean + std::sqrt(2.0) * sd * t[k];
                const double wk = w[k] / std::sqrt(std::numbers::pi);
                const double p = (y - cfg_.x.min) / h;
                if (p <= 0.0) acc.emplace_back(0, wk);
                else if (p >= nx_ - 1) acc.emplace_back(nx_ - 1, wk);
                else {
                    const int c = static_cast<int>(std::floor(p));
                    const double s = p - c;
                    acc.emplace_back(c, wk * (1.0 - s));
                    acc.emplace_back(c + 1, wk * s);
                }
            }
            std::sort(acc.begin(), acc.end());
            const int lo = acc.front().first, hi = acc.back().first;
            std::vector<double> dense(hi - lo + 1, 0.0);
            for (const auto& [c, v] : acc) dense[c - lo] += v;
            row_start_[i] = lo;
            row_[i] = std::move(dense);
        }
    }

    /// (1 - r dt) E[f] + U dt for every (x_i, theta_k).
    void continuation(const ValueGrid& f, std::vector<double>& out) const {
        const double disc = 1.0 - market_.discount_rate * cfg_.dt;
        for (int k = 0; k < nt_; ++k) {
            const double* col = f.v.data() + static_cast<std::size_t>(k) * nx_;
            for (int i = 0; i < nx_; ++i) {
                const auto& r = row_[i];
                const double* base = col + row_start_[i];
                double e = 0.0;
                for (std::size_t m = 0; m < r.size(); ++m) e += r[m] * base[m];
                out[idx(i, k)] = disc * e + utility_[idx(i, k)];
            }
        }
    }

    MarketConfig market_;
    DpConfig cfg_;
    int nx_, nt_;
    std::vector<int> row_start_;
    std::vector<std::vector<double>> row_;
    std::vector<double> utility_;
};

template <DiffusionModel M>
std::pair<ValueGrid, PolicyGrid> dp_step(const DpConfig& cfg, const MarketConfig& market, const M& model,
                                         const ValueGrid& f_in) {
    return DpProblem<M>(model, market, cfg).step(f_in);
}

template <DiffusionModel M>
DpResult dp_solve(const DpConfig& cfg, const MarketConfig& market, const M& model) {
    return DpProblem<M>(model, market, cfg).solve();
}

template <DiffusionModel M>
DpResult evaluate_fixed_policy(const DpConfig& cfg, const MarketConfig& market, const M& model,
                               const PolicyGrid& policy) {
    return DpProblem<M>(model, market, cfg).evaluate(policy);
}

template <DiffusionModel M>
DpResult evaluate_fixed_policy(const DpConfig& cfg, const MarketConfig& market, const M& model,
                               const BoundaryCurve& curve) {
    DpProblem<M> p(model, market, cfg);
    return p.evaluate(p.snap_policy(curve));
}

/// Hold interval [lo, hi] of theta-indices in column i.
struct ColumnBand {
    int lo = 0;
    int hi = 0;
};

/// Per-column hold intervals; throws NotBandForm unless each column holds
/// on one contiguous run and trades every other position onto its ends.
inline std::vector<ColumnBand> column_bands(const PolicyGrid& g) {
    std::vector<ColumnBand> out(g.nx);
    for (int i = 0; i < g.nx; ++i) {
        int lo = -1, hi = -1;
        for (int j = 0; j < g.nt; ++j) {
            if (g(i, j) != j) continue;
            if (lo < 0) lo = j;
            else if (hi != j - 1)
                fail(ErrorCode::NotBandForm, "hold set of column " + std::to_string(i) + " is not contiguous");
            hi = j;
        }
        if (lo < 0) fail(ErrorCode::NotBandForm, "column " + std::to_string(i) + " has no hold positions");
        for (int j = 0; j < g.nt; ++j) {
            const int expect = j < lo ? lo : (j > hi ? hi : j);
            if (g(i, j) != expect)
                fail(ErrorCode::NotBandForm, "column " + std::to_string(i) + " does not trade to its band edge");
        }
        out[i] = {lo, hi};
    }
    return out;
}

/// Vertical band edges at each x-node, half a cell outside the hold run.
inline std::vector<ThetaBand> column_edges(const PolicyGrid& g, const DpConfig& cfg) {
    const auto bands = column_bands(g);
    const double half = 0.5 * cfg.theta.step();
    std::vector<ThetaBand> out;
    out.reserve(bands.size());
    for (const auto& b : bands) out.emplace_back(cfg.theta.at(b.lo) - half, cfg.theta.at(b.hi) + half);
    return out;
}

/// Band in theta -> (h-, h+) form from the rows of the policy: at each
/// theta_j the hold set in x is an interval whose ends, offset by half an
/// x-cell, are the edges. Rows whose hold set touches the x-grid ends are
/// dropped.
inline BoundaryCurve extract_boundary(const PolicyGrid& g, const DpConfig& cfg) {
    column_bands(g);
    const double half = 0.5 * cfg.x.step();
    std::vector<double> th, lo, hi;
    for (int j = 0; j < g.nt; ++j) {
        int first = -1, last = -1;
        for (int i = 0; i < g.nx; ++i) {
            if (g(i, j) != j) continue;
            if (first < 0) first = i;
            else if (last != i - 1)
                fail(ErrorCode::NotBandForm, "hold set of row " + std::to_string(j) + " is not contiguous");
            last = i;
        }
        if (first <= 0 || last < 0 || last >= g.nx - 1) continue;
        th.push_back(cfg.theta.at(j));
        lo.push_back(cfg.x.at(first) - half);
        hi.push_back(cfg.x.at(last) + half);
    }
    if (th.size() < 2) fail(ErrorCode::NotBandForm, "fewer than two interior hold rows");
    return BoundaryCurve(std::move(th), std::move(lo), std::move(hi), Provenance::dp);
}

}  // namespace notrade
