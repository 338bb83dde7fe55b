#pragma once

// Complementary functions C+- of (-r + L) f = 0, the Green's function built
// from them, and the particular solutions needed by the boundary equations.
//
// Two flavours share one interface:
//   OuKernel         closed forms via D^{+-}_{r/b} of the z-score
//   NumericKernel<M> Riccati integration for psi = C'/C on a fine grid
//
// Every particular solution used downstream is a Green's-function response
// to one of three sources: mu, sigma^2 and the costfree utility rate. The
// I-function and the NT particular solution are quadratic in theta with
// these responses as coefficients.

#include "notrade/diffusion.hpp"
#include "notrade/errors.hpp"
#include "notrade/special_functions.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>
#include <concepts>
#include <functional>
#include <vector>

namespace notrade {

enum class KernelFlavor { closed_form_ou, numeric_general };

/// Values and first three x-derivatives of C+ and C- at one point.
struct ComplementarySample {
    std::array<double, 4> plus{};
    std::array<double, 4> minus{};

    /// W{C-, C+} = C- C+' - C+ C-'.
    double wronskian() const { return minus[0] * plus[1] - plus[0] * minus[1]; }
};

/// Green's-function responses to the drift and variance sources and their
/// x-derivatives: drift = int mu K, variance = int sigma^2 K.
struct ParticularSample {
    double drift = 0.0;
    double drift_d1 = 0.0;
    double variance = 0.0;
    double variance_d1 = 0.0;
};

struct IValue {
    double value = 0.0;
    double d1 = 0.0;
};

template <class K>
concept OdeKernel = requires(const K& k, double x, int n) {
    { k.complementary(x, n) } -> std::same_as<ComplementarySample>;
    { k.particular(x) } -> std::same_as<ParticularSample>;
    { k.costfree_value(x) } -> std::convertible_to<double>;
    { k.domain() } -> std::convertible_to<Interval>;
    { k.market() } -> std::convertible_to<const MarketConfig&>;
    { k.drift(x) } -> std::convertible_to<double>;
    { k.volatility(x) } -> std::convertible_to<double>;
    { k.flavor() } -> std::same_as<KernelFlavor>;
};

// ---------------------------------------------------------------------------

class OuKernel {
public:
    using model_type = OuModel;

    OuKernel(OuModel model, const MarketConfig& cfg) : model_(std::move(model)), cfg_(cfg) {
        cfg_.validate();
        order_ = cfg_.discount_rate / model_.params().b;
    }

    /// `derivs` is the highest derivative needed (1 or 3).
    ComplementarySample complementary(double x, int derivs = 1) const {
        const double z = model_.z_score(x);
        const double inv_s = 1.0 / model_.stationary_sd();
        ComplementarySample out;
        auto fill = [&](std::array<double, 4>& dst, Sign sign) {
            if (derivs <= 1) {
                const auto d = d_nu_derivatives<2>(DnuSpec{order_, sign}, z);
                dst[0] = d[0];
                dst[1] = d[1] * inv_s;
            } else {
                const auto d = d_nu_derivatives<4>(DnuSpec{order_, sign}, z);
                double f = 1.0;
                for (int k = 0; k < 4; ++k) {
                    dst[k] = d[k] * f;
                    f *= inv_s;
                }
            }
        };
        fill(out.plus, Sign::plus);
        fill(out.minus, Sign::minus);
        return out;
    }

    ParticularSample particular(double x) const {
        const auto& p = model_.params();
        const double r = cfg_.discount_rate;
        ParticularSample out;
        out.drift_d1 = -1.0 / (1.0 + r / p.b);
        out.drift = (x - model_.mean()) * out.drift_d1;
        out.variance = p.sigma * p.sigma / r;
        out.variance_d1 = 0.0;
        return out;
    }

    /// Value of the costfree strategy, G b / (2 (r + 2b)) (z^2/2 + b/r).
    double costfree_value(double x) const {
        const double b = model_.params().b, r = cfg_.discount_rate;
        const double z = model_.z_score(x);
        return cfg_.risk_appetite * b / (2.0 * (r + 2.0 * b)) * (0.5 * z * z + b / r);
    }

    Interval domain() const { return model_.domain(); }
    const MarketConfig& market() const { return cfg_; }
    const OuModel& model() const { return model_; }
    double drift(double x) const { return model_.drift(x); }
    double volatility(double x) const { return model_.volatility(x); }
    KernelFlavor flavor() const { return KernelFlavor::closed_form_ou; }

private:
    OuModel model_;
    MarketConfig cfg_;
    double order_ = 1.0;
};

// ---------------------------------------------------------------------------

struct NumericKernelOptions {
    int cells = 2400;
    double ode_tol = 1e-12;
};

template <DiffusionModel M>
class NumericKernel {
public:
    using model_type = M;

    NumericKernel(M model, const MarketConfig& cfg, NumericKernelOptions opts = {})
        : model_(std::move(model)), cfg_(cfg), domain_(model_.domain()), cells_(opts.cells) {
        cfg_.validate();
        if (cells_ < 16) fail(ErrorCode::InvalidArgument, "numeric kernel needs at least 16 cells");
        step_ = domain_.width() / cells_;
        integrate_riccati(opts.ode_tol);
        accumulate_log_c();
        accumulate_responses();
    }

    ComplementarySample complementary(double x, int derivs = 1) const {
        ComplementarySample out;
        const auto [cp, dp] = c_and_slope(x, +1);
        const auto [cm, dm] = c_and_slope(x, -1);
        out.plus[0] = cp;
        out.plus[1] = dp;
        out.minus[0] = cm;
        out.minus[1] = dm;
        if (derivs > 1) {
            // Higher derivatives by Richardson-extrapolated differences of C'.
            const double h = domain_.width() / 1200.0;
            for (int sgn : {+1, -1}) {
                auto slope = [&](double y) { return c_and_slope(y, sgn).second; };
                const double f0 = sgn > 0 ? dp : dm;
                auto d2 = [&](double hh) { return (slope(x + hh) - slope(x - hh)) / (2.0 * hh); };
                auto d3 = [&](double hh) { return (slope(x + hh) - 2.0 * f0 + slope(x - hh)) / (hh * hh); };
                auto& dst = sgn > 0 ? out.plus : out.minus;
                dst[2] = (4.0 * d2(0.5 * h) - d2(h)) / 3.0;
                dst[3] = (4.0 * d3(0.5 * h) - d3(h)) / 3.0;
            }
        }
        return out;
    }

    ParticularSample particular(double x) const {
        const auto w = weights_at(x);
        ParticularSample out;
        out.drift = w.cm * w.fwd[0] + w.cp * w.bwd[0];
        out.drift_d1 = w.dm * w.fwd[0] + w.dp * w.bwd[0];
        out.variance = w.cm * w.fwd[1] + w.cp * w.bwd[1];
        out.variance_d1 = w.dm * w.fwd[1] + w.dp * w.bwd[1];
        return out;
    }

    double costfree_value(double x) const {
        const auto w = weights_at(x);
        return w.cm * w.fwd[2] + w.cp * w.bwd[2];
    }

    /// psi+- = C+-'/C+- at x.
    double log_slope(double x, int sgn) const { return psi_at(x, sgn); }

    Interval domain() const { return domain_; }
    const MarketConfig& market() const { return cfg_; }
    const M& model() const { return model_; }
    double drift(double x) const { return model_.drift(x); }
    double volatility(double x) const { return model_.volatility(x); }
    KernelFlavor flavor() const { return KernelFlavor::numeric_general; }

private:
    static constexpr int kSources = 3;

    double node(int i) const { return domain_.lo + step_ * i; }

    double riccati_rhs(double x, double psi) const {
        const double s = model_.volatility(x);
        const double s2 = s * s;
        return -psi * psi - 2.0 * model_.drift(x) / s2 * psi + 2.0 * cfg_.discount_rate / s2;
    }

    /// Roots of sigma^2 psi^2 / 2 + mu psi - r = 0, computed without cancellation.
    std::pair<double, double> quadratic_roots(double x) const {
        const double s = model_.volatility(x);
        const double mu = model_.drift(x);
        const double r = cfg_.discount_rate;
        const double disc = std::sqrt(mu * mu + 2.0 * s * s * r);
        const double pos = mu >= 0.0 ? 2.0 * r / (mu + disc) : (disc - mu) / (s * s);
        const double neg = mu <= 0.0 ? -2.0 * r / (disc - mu) : -(mu + disc) / (s * s);
        return {pos, neg};
    }

    void integrate_riccati(double tol) {
        namespace ode = boost::numeric::odeint;
        const int n = cells_ + 1;
        psi_[0].assign(n, 0.0);
        psi_[1].assign(n, 0.0);
        dpsi_[0].assign(n, 0.0);
        dpsi_[1].assign(n, 0.0);

        double bound = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto [p, q] = quadratic_roots(node(i));
            bound = std::max({bound, std::abs(p), std::abs(q)});
        }
        bound *= 10.0;

        auto rhs = [this](const double& psi, double& dpsi, double x) { dpsi = riccati_rhs(x, psi); };
        for (int side = 0; side < 2; ++side) {
            std::vector<double> times(n);
            for (int i = 0; i < n; ++i) times[i] = side == 0 ? node(i) : node(cells_ - i);
            double state = side == 0 ? quadratic_roots(times.front()).first : quadratic_roots(times.front()).second;
            auto& dst = psi_[side];
            int k = 0;
            auto observer = [&](const double& psi, double) {
                if (!(std::abs(psi) <= bound))
                    fail(ErrorCode::RiccatiBlowup, "Riccati solution left its trapping region");
                const int idx = side == 0 ? k : cells_ - k;
                dst[idx] = psi;
                ++k;
            };
            const double dt = (side == 0 ? 1.0 : -1.0) * step_ * 0.1;
            ode::integrate_times(ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<double>()), rhs, state,
                                 times.begin(), times.end(), dt, observer);
        }
        for (int side = 0; side < 2; ++side)
            for (int i = 0; i < n; ++i) dpsi_[side][i] = riccati_rhs(node(i), psi_[side][i]);
    }

    struct CellPos {
        int cell;
        double s;
    };

    CellPos locate(double x) const {
        double t = (x - domain_.lo) / step_;
        int c = static_cast<int>(std::floor(t));
        c = std::clamp(c, 0, cells_ - 1);
        return {c, t - c};
    }

    /// Cubic Hermite interpolant of psi, and its integral from the left node.
    std::pair<double, double> psi_and_integral(double x, int sgn) const {
        const int side = sgn > 0 ? 0 : 1;
        const auto [c, s] = locate(x);
        const double h = step_;
        const double pa = psi_[side][c], pb = psi_[side][c + 1];
        const double da = dpsi_[side][c] * h, db = dpsi_[side][c + 1] * h;
        const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
        const double psi = (2 * s3 - 3 * s2 + 1) * pa + (s3 - 2 * s2 + s) * da + (-2 * s3 + 3 * s2) * pb + (s3 - s2) * db;
        const double integral =
            h * ((0.5 * s4 - s3 + s) * pa + (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2) * da +
                 (-0.5 * s4 + s3) * pb + (0.25 * s4 - s3 / 3.0) * db);
        return {psi, integral};
    }

    double psi_at(double x, int sgn) const { return psi_and_integral(x, sgn).first; }

    double log_c(double x, int sgn) const {
        const int side = sgn > 0 ? 0 : 1;
        const auto [c, s] = locate(x);
        (void)s;
        return log_c_[side][c] + psi_and_integral(x, sgn).second;
    }

    std::pair<double, double> c_and_slope(double x, int sgn) const {
        const int side = sgn > 0 ? 0 : 1;
        const auto [c, s] = locate(x);
        (void)s;
        const auto [psi, part] = psi_and_integral(x, sgn);
        const double value = std::exp(log_c_[side][c] + part);
        return {value, psi * value};
    }

    void accumulate_log_c() {
        for (int side = 0; side < 2; ++side) {
            auto& lc = log_c_[side];
            lc.assign(cells_ + 1, 0.0);
            for (int i = 0; i < cells_; ++i) {
                const double pa = psi_[side][i], pb = psi_[side][i + 1];
                const double da = dpsi_[side][i], db = dpsi_[side][i + 1];
                lc[i + 1] = lc[i] + step_ * 0.5 * (pa + pb) + step_ * step_ * (da - db) / 12.0;
            }
            // Unit value at the domain midpoint.
            const double at_mid = log_c(domain_.mid(), side == 0 ? 1 : -1);
            for (auto& v : lc) v -= at_mid;
        }
    }

    std::array<double, kSources> sources(double x) const {
        const double mu = model_.drift(x);
        const double s = model_.volatility(x);
        return {mu, s * s, mu * mu * cfg_.risk_appetite / (2.0 * s * s)};
    }

    /// Green's-function weights C+ N and C- N at xi with N = 1/(sigma^2 W / 2).
    std::pair<double, double> green_weights(double xi) const {
        const auto [cp, dp] = c_and_slope(xi, +1);
        const auto [cm, dm] = c_and_slope(xi, -1);
        const double s = model_.volatility(xi);
        const double w = cm * dp - cp * dm;
        const double n = 1.0 / (0.5 * s * s * w);
        return {cp * n, cm * n};
    }

    /// Forward integral of source * C+ N and backward integral of
    /// source * C- N over [a, b] by Gauss-Legendre.
    void cell_integrals(double a, double b, std::array<double, kSources>& fwd, std::array<double, kSources>& bwd) const {
        const auto& rule = detail::gauss_rule();
        const double half = 0.5 * (b - a), centre = 0.5 * (a + b);
        fwd.fill(0.0);
        bwd.fill(0.0);
        for (int i = 0; i < detail::kGaussPoints; ++i) {
            const double xi = centre + half * rule.x[i];
            const auto [wp, wm] = green_weights(xi);
            const auto src = sources(xi);
            for (int k = 0; k < kSources; ++k) {
                fwd[k] += rule.w[i] * half * src[k] * wp;
                bwd[k] += rule.w[i] * half * src[k] * wm;
            }
        }
    }

    void accumulate_responses() {
        const int n = cells_ + 1;
        for (int k = 0; k < kSources; ++k) {
            fwd_[k].assign(n, 0.0);
            bwd_[k].assign(n, 0.0);
        }
        // Tails beyond the domain from the exponential decay of the weights:
        // C+ N ~ 1/C- decays leftwards at rate |psi-|, C- N ~ 1/C+ rightwards
        // at rate psi+.
        {
            const auto [wp, wm] = green_weights(domain_.lo);
            (void)wm;
            const auto src = sources(domain_.lo);
            const double rate = -psi_[1][0];
            for (int k = 0; k < kSources; ++k) fwd_[k][0] = src[k] * wp / rate;
        }
        {
            const auto [wp, wm] = green_weights(domain_.hi);
            (void)wp;
            const auto src = sources(domain_.hi);
            const double rate = psi_[0][cells_];
            for (int k = 0; k < kSources; ++k) bwd_[k][cells_] = src[k] * wm / rate;
        }
        std::array<double, kSources> f{}, b{};
        for (int i = 0; i < cells_; ++i) {
            cell_integrals(node(i), node(i + 1), f, b);
            for (int k = 0; k < kSources; ++k) fwd_[k][i + 1] = fwd_[k][i] + f[k];
            cell_bwd_.push_back(b);
        }
        for (int i = cells_ - 1; i >= 0; --i)
            for (int k = 0; k < kSources; ++k) bwd_[k][i] = bwd_[k][i + 1] + cell_bwd_[i][k];
    }

    struct Weights {
        double cp, dp, cm, dm;
        std::array<double, kSources> fwd, bwd;
    };

    Weights weights_at(double x) const {
        Weights w{};
        std::tie(w.cp, w.dp) = c_and_slope(x, +1);
        std::tie(w.cm, w.dm) = c_and_slope(x, -1);
        const auto [c, s] = locate(x);
        (void)s;
        std::array<double, kSources> f{}, b{};
        cell_integrals(node(c), x, f, b);
        for (int k = 0; k < kSources; ++k) {
            w.fwd[k] = fwd_[k][c] + f[k];
            // bwd over [x, node(c+1)] = whole cell minus [node(c), x].
            w.bwd[k] = bwd_[k][c + 1] + (cell_bwd_[c][k] - b[k]);
        }
        return w;
    }

    M model_;
    MarketConfig cfg_;
    Interval domain_;
    int cells_;
    double step_ = 0.0;
    std::array<std::vector<double>, 2> psi_, dpsi_, log_c_;
    std::array<std::vector<double>, kSources> fwd_, bwd_;
    std::vector<std::array<double, kSources>> cell_bwd_;
};

/// Kernel whose complementary functions are rescaled by positive constants;
/// everything built from it must be invariant.
template <OdeKernel K>
class ScaledKernel {
public:
    ScaledKernel(const K& base, double plus_scale, double minus_scale)
        : base_(&base), lambda_(plus_scale), kappa_(minus_scale) {}

    ComplementarySample complementary(double x, int derivs = 1) const {
        auto s = base_->complementary(x, derivs);
        for (auto& v : s.plus) v *= lambda_;
        for (auto& v : s.minus) v *= kappa_;
        return s;
    }
    ParticularSample particular(double x) const { return base_->particular(x); }
    double costfree_value(double x) const { return base_->costfree_value(x); }
    Interval domain() const { return base_->domain(); }
    const MarketConfig& market() const { return base_->market(); }
    double drift(double x) const { return base_->drift(x); }
    double volatility(double x) const { return base_->volatility(x); }
    KernelFlavor flavor() const { return base_->flavor(); }
    const auto& model() const { return base_->model(); }

private:
    const K* base_;
    double lambda_, kappa_;
};

inline OuKernel build_kernel(const OuModel& model, const MarketConfig& cfg) { return OuKernel(model, cfg); }

template <DiffusionModel M>
NumericKernel<M> build_kernel(const M& model, const MarketConfig& cfg, NumericKernelOptions opts = {}) {
    return NumericKernel<M>(model, cfg, opts);
}

// ---------------------------------------------------------------------------
// Operations on any kernel

template <OdeKernel K>
double greens_function(const K& kernel, double x, double xi) {
    const auto at_xi = kernel.complementary(xi, 1);
    const double s = kernel.volatility(xi);
    const double norm = 1.0 / (0.5 * s * s * at_xi.wronskian());
    const auto at_x = kernel.complementary(x, 1);
    return x < xi ? at_xi.minus[0] * at_x.plus[0] * norm : at_xi.plus[0] * at_x.minus[0] * norm;
}

/// I(x, theta) = int (d/dtheta U)(xi, theta) K(x, xi) dxi and its x-derivative.
template <OdeKernel K>
IValue i_function(const K& kernel, double x, double theta) {
    const auto p = kernel.particular(x);
    const double g = kernel.market().risk_appetite;
    return {p.drift - theta * p.variance / g, p.drift_d1 - theta * p.variance_d1 / g};
}

/// NT particular solution int U(xi, theta) K(x, xi) dxi.
template <OdeKernel K>
double nt_particular(const K& kernel, double x, double theta) {
    const auto p = kernel.particular(x);
    return theta * p.drift - theta * theta * p.variance / (2.0 * kernel.market().risk_appetite);
}

/// int source(xi) K(x, xi) dxi over the kernel domain by adaptive
/// Gauss-Kronrod, split at the kink xi = x. Independent of the closed forms
/// and the cumulative responses; used to cross-check them.
template <OdeKernel K>
double greens_integral(const K& kernel, const std::function<double(double)>& source, double x,
                       double rel_tol = 1e-10) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    const Interval d = kernel.domain();
    const auto at_x = kernel.complementary(x, 1);
    auto weight = [&](double xi, bool left) {
        const auto c = kernel.complementary(xi, 1);
        const double s = kernel.volatility(xi);
        const double n = 1.0 / (0.5 * s * s * c.wronskian());
        return source(xi) * (left ? c.plus[0] : c.minus[0]) * n;
    };
    double err_l = 0.0, err_r = 0.0, l1_l = 0.0, l1_r = 0.0;
    const double left = GK::integrate([&](double xi) { return weight(xi, true); }, d.lo, x, 15, rel_tol, &err_l, &l1_l);
    const double right = GK::integrate([&](double xi) { return weight(xi, false); }, x, d.hi, 15, rel_tol, &err_r, &l1_r);
    if (err_l > 1e-8 * std::max(l1_l, 1e-300) || err_r > 1e-8 * std::max(l1_r, 1e-300))
        fail(ErrorCode::QuadratureFail, "Green's-function quadrature did not converge");
    return at_x.minus[0] * left + at_x.plus[0] * right;
}

/// Ratios Gamma_{i,j} / Gamma_{1,0} with Gamma_{i,j} = C+^(i) C-^(j) - C-^(i) C+^(j).
struct GammaRatios {
    double g20 = 0.0;
    double g21 = 0.0;
    double g30 = 0.0;
    double g31 = 0.0;
};

template <OdeKernel K>
GammaRatios gamma_invariants(const K& kernel, double x) {
    const auto c = kernel.complementary(x, 3);
    auto gam = [&](int i, int j) { return c.plus[i] * c.minus[j] - c.minus[i] * c.plus[j]; };
    const double g10 = gam(1, 0);
    return {gam(2, 0) / g10, gam(2, 1) / g10, gam(3, 0) / g10, gam(3, 1) / g10};
}

/// The same ratios from the ODE coefficients p = mu / (sigma^2/2),
/// q = -r / (sigma^2/2): -p, q, p^2 - p' - q, q' - pq.
template <DiffusionModel M>
GammaRatios gamma_closed_forms(const M& model, const MarketConfig& cfg, double x) {
    const double s = model.volatility(x), ds = model.volatility_prime(x);
    const double mu = model.drift(x), dmu = model.drift_prime(x);
    const double r = cfg.discount_rate;
    const double p = 2.0 * mu / (s * s);
    const double dp = 2.0 * dmu / (s * s) - 4.0 * mu * ds / (s * s * s);
    const double q = -2.0 * r / (s * s);
    const double dq = 4.0 * r * ds / (s * s * s);
    return {-p, q, p * p - dp - q, dq - p * q};
}

}  // namespace notrade
