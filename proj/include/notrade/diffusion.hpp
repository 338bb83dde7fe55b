#pragma once

// Asset dynamics dX = mu(X) dt + sigma(X) dW, market/cost settings, and the
// costfree optimum everything else is expanded around.

#include "notrade/errors.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <string>

namespace notrade {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double mid() const { return 0.5 * (lo + hi); }
    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Risk appetite G, discount rate r and the per-lot buy/sell costs.
struct MarketConfig {
    double risk_appetite = 1.0;
    double discount_rate = 0.05;
    double eps_buy = 0.0;
    double eps_sell = 0.0;

    /// Mean cost; buy and sell costs only enter the small-cost asymptotics
    /// through this.
    double eps() const { return 0.5 * (eps_buy + eps_sell); }

    void validate() const {
        if (!(risk_appetite > 0.0)) fail(ErrorCode::InvalidArgument, "risk appetite G must be > 0");
        if (!(discount_rate > 0.0)) fail(ErrorCode::InvalidArgument, "discount rate r must be > 0");
        if (!(eps_buy >= 0.0) || !(eps_sell >= 0.0))
            fail(ErrorCode::InvalidArgument, "transaction costs must be >= 0");
    }

    MarketConfig with_costs(double buy, double sell) const {
        MarketConfig out = *this;
        out.eps_buy = buy;
        out.eps_sell = sell;
        return out;
    }
    MarketConfig with_cost(double eps) const { return with_costs(eps, eps); }
};

template <class M>
concept DiffusionModel = requires(const M& m, double x) {
    { m.drift(x) } -> std::convertible_to<double>;
    { m.volatility(x) } -> std::convertible_to<double>;
    { m.drift_prime(x) } -> std::convertible_to<double>;
    { m.volatility_prime(x) } -> std::convertible_to<double>;
    { m.domain() } -> std::convertible_to<Interval>;
};

struct OuParams {
    double a = 0.0;      // drift intercept
    double b = 0.5;      // reversion speed
    double sigma = 1.0;  // volatility
};

struct ExtOuParams {
    double b = 0.5;
    double sigma = 1.0;
    double c = 1.0;   // level scale
    double nu = 0.0;  // local-vol exponent
};

/// dX = (a - bX) dt + sigma dW.
class OuModel {
public:
    explicit OuModel(OuParams p, std::optional<Interval> domain = std::nullopt) : p_(p) {
        if (!(p.b > 0.0)) fail(ErrorCode::InvalidArgument, "OU reversion speed b must be > 0");
        if (!(p.sigma > 0.0)) fail(ErrorCode::InvalidArgument, "OU volatility must be > 0");
        domain_ = domain ? *domain : Interval{mean() - 6.0 * stationary_sd(), mean() + 6.0 * stationary_sd()};
    }

    double drift(double x) const { return p_.a - p_.b * x; }
    double volatility(double) const { return p_.sigma; }
    double drift_prime(double) const { return -p_.b; }
    double volatility_prime(double) const { return 0.0; }
    Interval domain() const { return domain_; }

    const OuParams& params() const { return p_; }
    double mean() const { return p_.a / p_.b; }
    double stationary_sd() const { return p_.sigma / std::sqrt(2.0 * p_.b); }
    double z_score(double x) const { return (x - mean()) / stationary_sd(); }

private:
    OuParams p_;
    Interval domain_;
};

/// dX = -bX dt + sigma (1 + c^2 X^2)^nu dW, restricted to nu in [0, 1/4]
/// where the costfree position is monotone in X.
class ExtOuModel {
public:
    explicit ExtOuModel(ExtOuParams p, std::optional<Interval> domain = std::nullopt) : p_(p) {
        if (!(p.b > 0.0) || !(p.sigma > 0.0) || !(p.c > 0.0))
            fail(ErrorCode::InvalidArgument, "extended OU requires b, sigma, c > 0");
        if (p.nu < 0.0) fail(ErrorCode::InvalidArgument, "extended OU exponent nu must be >= 0");
        if (p.nu > 0.25) fail(ErrorCode::NuTooLarge, "extended OU exponent nu must be <= 1/4");
        const double sd = p_.sigma / std::sqrt(2.0 * p_.b);
        domain_ = domain ? *domain : Interval{-6.0 * sd, 6.0 * sd};
    }

    double drift(double x) const { return -p_.b * x; }
    double volatility(double x) const { return p_.sigma * std::pow(1.0 + p_.c * p_.c * x * x, p_.nu); }
    double drift_prime(double) const { return -p_.b; }
    double volatility_prime(double x) const {
        const double c2 = p_.c * p_.c;
        return p_.sigma * p_.nu * 2.0 * c2 * x * std::pow(1.0 + c2 * x * x, p_.nu - 1.0);
    }
    Interval domain() const { return domain_; }

    const ExtOuParams& params() const { return p_; }

private:
    ExtOuParams p_;
    Interval domain_;
};

/// Model from arbitrary evaluators. Missing derivatives fall back to centred
/// differences with step 1e-6 * max(1, |x|).
class GenericModel {
public:
    using Fn = std::function<double(double)>;

    GenericModel(Fn mu, Fn sigma, Interval domain, Fn mu_prime = {}, Fn sigma_prime = {})
        : mu_(std::move(mu)), sigma_(std::move(sigma)), mu_prime_(std::move(mu_prime)),
          sigma_prime_(std::move(sigma_prime)), domain_(domain) {
        if (!(domain.hi > domain.lo)) fail(ErrorCode::InvalidArgument, "empty model domain");
    }

    double drift(double x) const { return mu_(x); }
    double volatility(double x) const { return sigma_(x); }
    double drift_prime(double x) const { return mu_prime_ ? mu_prime_(x) : centred(mu_, x); }
    double volatility_prime(double x) const { return sigma_prime_ ? sigma_prime_(x) : centred(sigma_, x); }
    Interval domain() const { return domain_; }

private:
    static double centred(const Fn& f, double x) {
        const double h = 1e-6 * std::max(1.0, std::abs(x));
        return (f(x + h) - f(x - h)) / (2.0 * h);
    }

    Fn mu_, sigma_, mu_prime_, sigma_prime_;
    Interval domain_;
};

// ---------------------------------------------------------------------------
// Costfree solution

/// Rate of accumulation of expected utility mu theta - sigma^2 theta^2 / 2G.
template <DiffusionModel M>
double utility_rate(const M& model, const MarketConfig& cfg, double x, double theta) {
    const double s = model.volatility(x);
    return model.drift(x) * theta - s * s * theta * theta / (2.0 * cfg.risk_appetite);
}

/// Partial derivative of the utility rate in the position.
template <DiffusionModel M>
double utility_rate_slope(const M& model, const MarketConfig& cfg, double x, double theta) {
    const double s = model.volatility(x);
    return model.drift(x) - s * s * theta / cfg.risk_appetite;
}

template <DiffusionModel M>
double costfree_position(const M& model, const MarketConfig& cfg, double x) {
    const double s = model.volatility(x);
    return model.drift(x) * cfg.risk_appetite / (s * s);
}

/// Sensitivity of the costfree position to the market value.
template <DiffusionModel M>
double rebalancing_gamma(const M& model, const MarketConfig& cfg, double x) {
    const double s = model.volatility(x);
    const double mu = model.drift(x);
    return (model.drift_prime(x) - 2.0 * mu * model.volatility_prime(x) / s) * cfg.risk_appetite / (s * s);
}

/// Throws NotMonotone when the rebalancing gamma changes sign on the domain.
template <DiffusionModel M>
void require_monotone_costfree(const M& model, const MarketConfig& cfg, int samples = 401) {
    const Interval d = model.domain();
    int sign = 0;
    for (int i = 0; i < samples; ++i) {
        const double x = d.lo + d.width() * i / (samples - 1);
        const double g = rebalancing_gamma(model, cfg, x);
        const int s = g > 0.0 ? 1 : (g < 0.0 ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign))
            fail(ErrorCode::NotMonotone, "costfree position is not monotone near x=" + std::to_string(x));
        sign = s;
    }
}

/// Market value at which the costfree position equals theta.
template <DiffusionModel M>
double costfree_inverse(const M& model, const MarketConfig& cfg, double theta, double tol = 1e-10) {
    require_monotone_costfree(model, cfg);
    const Interval d = model.domain();
    double lo = d.lo, hi = d.hi;
    double f_lo = costfree_position(model, cfg, lo) - theta;
    double f_hi = costfree_position(model, cfg, hi) - theta;
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;
    if ((f_lo > 0.0) == (f_hi > 0.0))
        fail(ErrorCode::OutOfRange, "position " + std::to_string(theta) + " outside costfree range");

    double x = d.mid();
    for (int it = 0; it < 200; ++it) {
        const double fx = costfree_position(model, cfg, x) - theta;
        if (fx == 0.0) return x;
        if ((fx > 0.0) == (f_lo > 0.0)) {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        const double slope = rebalancing_gamma(model, cfg, x);
        double next = x - fx / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) < tol || hi - lo < tol) return next;
        x = next;
    }
    return x;
}

}  // namespace notrade
