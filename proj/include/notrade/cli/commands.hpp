#pragma once

// The five pipelines behind the command-line tool. Each computes everything
// in memory and returns the rendered files; nothing touches the disk here.

#include "notrade/boundary_solver.hpp"
#include "notrade/cli/config.hpp"
#include "notrade/cli/output.hpp"
#include "notrade/dp_oracle.hpp"
#include "notrade/ode_kernel.hpp"
#include "notrade/perturbation.hpp"
#include "notrade/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace notrade::cli {

namespace detail {

inline bool wants(const RunConfig& c, const std::string& format) {
    return std::find(c.output.formats.begin(), c.output.formats.end(), format) != c.output.formats.end();
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1);
    return out;
}

template <DiffusionModel M>
std::vector<double> theta_grid(const M& model, const MarketConfig& market, int n, std::optional<double> lo,
                               std::optional<double> hi) {
    if (!lo && !hi) return default_theta_grid(model, market, n);
    const auto def = default_theta_grid(model, market, 2);
    return linspace(lo.value_or(def.front()), hi.value_or(def.back()), n);
}

inline OuKernel make_kernel(const OuModel& m, const MarketConfig& c) { return build_kernel(m, c); }
template <DiffusionModel M>
NumericKernel<M> make_kernel(const M& m, const MarketConfig& c) {
    return build_kernel(m, c);
}

template <DiffusionModel M>
DpConfig dp_config(const M& model, const MarketConfig& market, const DpTask& t) {
    const Interval d = model.domain();
    const double reach = 5.0 / 6.0 * 0.5 * d.width();
    DpConfig cfg;
    cfg.x = {t.x.min.value_or(d.mid() - reach), t.x.max.value_or(d.mid() + reach), t.x.n};
    double peak = 0.0;
    for (int i = 0; i < cfg.x.n; ++i) peak = std::max(peak, std::abs(costfree_position(model, market, cfg.x.at(i))));
    cfg.theta = {t.theta.min.value_or(-1.12 * peak), t.theta.max.value_or(1.12 * peak), t.theta.n};
    cfg.dt = t.dt.value_or(default_dp_dt(model));
    cfg.tol = t.tol;
    cfg.max_iters = t.max_iters;
    return cfg;
}

inline nlohmann::json fit_json(const SlopeFit& f) {
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"ci_low", f.ci_low}, {"ci_high", f.ci_high}};
}

// ---------------------------------------------------------------------------

template <DiffusionModel M>
OutputSet run_boundary(const RunConfig& c, const M& model, const std::string& header) {
    const auto kernel = make_kernel(model, c.market);
    const auto& t = c.boundary;
    const auto thetas = theta_grid(model, c.market, t.theta_points, t.theta_min, t.theta_max);
    const auto exact = solve_boundary_curve(kernel, c.market, thetas);
    const PerturbativeBand<M> pert(model, c.market);

    CsvTable csv({"theta", "h_minus_exact", "h_plus_exact", "h0_costfree", "h_minus_perturb", "h_plus_perturb"});
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        const double th = thetas[i];
        const auto [pm, pp] = c.market.eps() > 0.0 ? pert.horizontal(th) : std::pair<double, double>{
                                                                                exact.h_minus()[i], exact.h_plus()[i]};
        csv.add({th, exact.h_minus()[i], exact.h_plus()[i], costfree_inverse(model, c.market, th), pm, pp});
    }
    OutputSet out;
    out.add("boundary.csv", csv.render(header));
    if (wants(c, "json")) {
        const auto mid = exact.at(0.5 * (thetas.front() + thetas.back()));
        out.add("boundary.json", nlohmann::json{{"points", thetas.size()},
                                                {"theta_min", thetas.front()},
                                                {"theta_max", thetas.back()},
                                                {"mid_half_width", 0.5 * mid.width()}}
                                         .dump(2) +
                                     "\n");
    }
    return out;
}

template <DiffusionModel M>
OutputSet run_dp(const RunConfig& c, const M& model, const std::string& header) {
    const DpConfig cfg = dp_config(model, c.market, c.dp);
    const DpResult res = dp_solve(cfg, c.market, model);

    CsvTable grid({"x", "theta", "value", "target_theta"});
    for (int j = 0; j < cfg.theta.n; ++j)
        for (int i = 0; i < cfg.x.n; ++i)
            grid.add({cfg.x.at(i), cfg.theta.at(j), res.value(i, j), cfg.theta.at(res.policy(i, j))});

    CsvTable band({"x", "theta_lower", "theta_upper"});
    const auto edges = column_edges(res.policy, cfg);
    for (int i = 0; i < cfg.x.n; ++i) band.add({cfg.x.at(i), edges[i].first, edges[i].second});

    const BoundaryCurve curve = extract_boundary(res.policy, cfg);
    CsvTable rows({"theta", "h_minus", "h_plus"});
    for (std::size_t k = 0; k < curve.size(); ++k) rows.add({curve.thetas()[k], curve.h_minus()[k], curve.h_plus()[k]});

    OutputSet out;
    out.add("dp.csv", grid.render(header));
    out.add("dp_band.csv", band.render(header));
    out.add("dp_boundary.csv", rows.render(header));
    if (wants(c, "json")) {
        out.add("dp.json", nlohmann::json{{"iterations", res.iterations},
                                           {"policy_stable_at", res.policy_stable_at},
                                           {"residual", res.residual},
                                           {"monotone_violations", res.monotone_violations},
                                           {"dt", cfg.dt},
                                           {"x_grid", {cfg.x.min, cfg.x.max, cfg.x.n}},
                                           {"theta_grid", {cfg.theta.min, cfg.theta.max, cfg.theta.n}}}
                                   .dump(2) +
                               "\n");
    }
    return out;
}

template <DiffusionModel M>
OutputSet run_value(const RunConfig& c, const M& model, const std::string& header) {
    const auto kernel = make_kernel(model, c.market);
    const auto curve = solve_boundary_curve(kernel, c.market, default_theta_grid(model, c.market, c.value.theta_points));
    const auto weights = alpha_weights(kernel, c.market, curve);
    const ValueSurface surface(curve, weights);

    CsvTable csv({"x", "theta", "value", "zone", "target_theta"});
    for (int j = 0; j < c.value.theta.n; ++j) {
        const double th = c.value.theta.at(j);
        for (int i = 0; i < c.value.x.n; ++i) {
            const double x = c.value.x.at(i);
            csv.add({x, th, surface(x, th), std::string(to_string(surface.zone(x, th))), surface.target(x, th)});
        }
    }
    OutputSet out;
    out.add("value.csv", csv.render(header));
    return out;
}

template <DiffusionModel M>
OutputSet run_simulate(const RunConfig& c, const M& model, const std::string& header) {
    const auto& t = c.simulate;
    SimConfig sim = t.sim;
    sim.keep_paths = true;
    const auto kernel = make_kernel(model, c.market);
    nlohmann::json summary;

    SimReport rep;
    if (t.policy == "costfree") {
        const MarketConfig market = c.market;
        const FunctionBand band{[&model, market](double x) {
            const double g = costfree_position(model, market, x);
            return ThetaBand{g, g};
        }};
        rep = simulate_policy(model, c.market, band, sim);
    } else {
        const auto thetas = default_theta_grid(model, c.market, t.theta_points);
        const auto curve = t.policy == "exact" ? solve_boundary_curve(kernel, c.market, thetas)
                                               : perturbative_curve(model, c.market, thetas);
        rep = simulate_policy(model, c.market, curve, sim);
        if (t.policy == "exact") {
            const auto weights = alpha_weights(kernel, c.market, curve);
            summary["analytic_value"] = value_function(curve, weights, sim.x0, sim.theta0);
        }
    }
    summary["policy"] = t.policy;
    summary["mean"] = rep.mean;
    summary["std_error"] = rep.std_error;
    summary["turnover"] = rep.turnover;
    summary["cost_rate"] = rep.cost_rate;
    summary["clamped_fraction"] = rep.clamped_fraction;
    summary["qv_ratio"] = rep.qv_ratio;
    summary["truncation_bound"] = rep.truncation_bound;
    summary["steps_per_path"] = rep.steps_per_path;
    summary["n_paths"] = rep.n_paths;
    summary["costfree_value"] = kernel.costfree_value(sim.x0);

    CsvTable paths({"path", "value", "terminal_x", "terminal_theta", "clamped_steps"});
    for (std::size_t p = 0; p < rep.paths.size(); ++p) {
        const auto& s = rep.paths[p];
        paths.add({static_cast<long>(p), s.value, s.terminal_x, s.terminal_theta, s.clamped_steps});
    }
    OutputSet out;
    out.add("sim.json", summary.dump(2) + "\n");
    out.add("sim.csv", paths.render(header));
    return out;
}

template <DiffusionModel M>
OutputSet run_scaling(const RunConfig& c, const M& model, const std::string& header) {
    const auto& t = c.scaling;
    const auto kernel = make_kernel(model, c.market);
    const SweepTable table = sweep_epsilon(kernel, c.market, t.eps, t.sim, t.simulate, t.theta_points);

    CsvTable rows({"eps", "half_width", "analytic_loss", "sim_value", "sim_std_error", "sim_loss",
                   "sim_loss_std_error", "width_slope", "width_slope_ci_low", "width_slope_ci_high", "loss_slope",
                   "loss_slope_ci_low", "loss_slope_ci_high"});
    for (const auto& r : table.rows)
        rows.add({r.eps, r.half_width, r.analytic_loss, r.sim_value, r.sim_std_error, r.sim_loss,
                  r.sim_loss_std_error, table.width_fit.slope, table.width_fit.ci_low, table.width_fit.ci_high,
                  table.analytic_loss_fit.slope, table.analytic_loss_fit.ci_low, table.analytic_loss_fit.ci_high});

    CsvTable fits({"quantity", "slope", "intercept", "ci_low", "ci_high"});
    auto add_fit = [&](const char* name, const SlopeFit& f) {
        fits.add({std::string(name), f.slope, f.intercept, f.ci_low, f.ci_high});
    };
    add_fit("half_width", table.width_fit);
    add_fit("analytic_loss", table.analytic_loss_fit);
    if (t.simulate) add_fit("sim_loss", table.sim_loss_fit);

    OutputSet out;
    out.add("scaling.csv", rows.render(header));
    out.add("scaling_fit.csv", fits.render(header));
    if (wants(c, "json")) {
        nlohmann::json j = {{"half_width", fit_json(table.width_fit)},
                            {"analytic_loss", fit_json(table.analytic_loss_fit)}};
        if (t.simulate) j["sim_loss"] = fit_json(table.sim_loss_fit);
        out.add("scaling.json", j.dump(2) + "\n");
    }
    return out;
}

}  // namespace detail

/// Run the configured task and return the files it produces.
inline OutputSet run(const RunConfig& c) {
    const std::string header = header_block(to_json(c));
    const AnyModel model = make_model(c.model);
    return std::visit(
        [&](const auto& m) {
            switch (c.task) {
                case Task::boundary: return detail::run_boundary(c, m, header);
                case Task::dp: return detail::run_dp(c, m, header);
                case Task::value: return detail::run_value(c, m, header);
                case Task::simulate: return detail::run_simulate(c, m, header);
                case Task::scaling: return detail::run_scaling(c, m, header);
            }
            return OutputSet{};
        },
        model);
}

}  // namespace notrade::cli
