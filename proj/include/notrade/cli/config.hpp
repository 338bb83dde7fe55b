#pragma once

// Run configuration: JSON in, validated structs out, and a normalised JSON
// echo (every default filled in) that reproduces the run when fed back.

#include "notrade/diffusion.hpp"
#include "notrade/dp_oracle.hpp"
#include "notrade/simulator.hpp"

#include <boost/math/interpolators/makima.hpp>
#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace notrade::cli {

using json = nlohmann::json;

/// Malformed or out-of-range configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Task { boundary, dp, value, simulate, scaling };

inline const std::map<std::string, Task>& task_names() {
    static const std::map<std::string, Task> names = {{"boundary", Task::boundary},
                                                      {"dp", Task::dp},
                                                      {"value", Task::value},
                                                      {"simulate", Task::simulate},
                                                      {"scaling", Task::scaling}};
    return names;
}

inline std::string to_string(Task t) {
    for (const auto& [name, task] : task_names())
        if (task == t) return name;
    return "unknown";
}

struct TableModelSpec {
    std::vector<double> x, mu, sigma;
};

struct ModelSpec {
    std::string kind = "ou";
    OuParams ou;
    ExtOuParams ext;
    TableModelSpec table;
    std::optional<Interval> domain;
};

using AnyModel = std::variant<OuModel, ExtOuModel, GenericModel>;

struct GridSpec {
    std::optional<double> min, max;
    int n = 0;
};

struct BoundaryTask {
    int theta_points = 201;
    std::optional<double> theta_min, theta_max;
};

struct DpTask {
    GridSpec x{std::nullopt, std::nullopt, 401};
    GridSpec theta{std::nullopt, std::nullopt, 201};
    std::optional<double> dt;
    double tol = 0.0;
    int max_iters = 0;
};

struct ValueTask {
    UniformGrid x{-3.0, 3.0, 61};
    UniformGrid theta{-3.0, 3.0, 61};
    int theta_points = 201;
};

struct SimulateTask {
    SimConfig sim;
    std::string policy = "exact";
    int theta_points = 201;
};

struct ScalingTask {
    std::vector<double> eps{0.001, 0.002, 0.004, 0.008, 0.016};
    bool simulate = false;
    SimConfig sim{2000, 200.0, 5e-3, 1, 0.0, 0.0, false};
    int theta_points = 201;
};

struct OutputSpec {
    std::string directory = ".";
    std::vector<std::string> formats{"csv"};
};

struct RunConfig {
    ModelSpec model;
    MarketConfig market;
    Task task = Task::boundary;
    BoundaryTask boundary;
    DpTask dp;
    ValueTask value;
    SimulateTask simulate;
    ScalingTask scaling;
    OutputSpec output;
};

namespace detail {

/// Object reader that remembers which keys were consumed and rejects the rest.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, double fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        return require_number(key);
    }
    std::optional<double> maybe_number(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
        return require_number(key);
    }
    int integer(const std::string& key, int fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        return v.get<int>();
    }
    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
        return v.get<std::uint64_t>();
    }
    bool boolean(const std::string& key, bool fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
        return v.get<bool>();
    }
    std::string string(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where(key) + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of strings");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) throw ConfigError(where(key) + ": expected an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }
    Section child(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) return Section(empty(), where(key));
        return Section(j_.at(key), where(key));
    }

    /// Throws on any key that was never read.
    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ConfigError(where(k) + ": unknown key");
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }
    double require_number(const std::string& key) const {
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        return v.get<double>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

inline GridSpec read_grid(Section& s, const GridSpec& fallback) {
    GridSpec g = fallback;
    if (auto v = s.maybe_number("min")) g.min = v;
    if (auto v = s.maybe_number("max")) g.max = v;
    g.n = s.integer("n", fallback.n);
    s.finish();
    require(g.n >= 3, s.where("n") + ": need at least 3 points");
    require(!g.min || !g.max || *g.max > *g.min, s.where("max") + ": must exceed min");
    return g;
}

inline UniformGrid read_uniform(Section& s, const UniformGrid& fallback) {
    UniformGrid g{s.number("min", fallback.min), s.number("max", fallback.max), s.integer("n", fallback.n)};
    s.finish();
    require(g.n >= 2, s.where("n") + ": need at least 2 points");
    require(g.max > g.min, s.where("max") + ": must exceed min");
    return g;
}

inline SimConfig read_sim(Section& s, const SimConfig& fallback) {
    SimConfig c = fallback;
    c.n_paths = s.integer("n_paths", c.n_paths);
    c.horizon = s.number("horizon", c.horizon);
    c.dt = s.number("dt", c.dt);
    c.seed = s.unsigned_integer("seed", c.seed);
    c.x0 = s.number("x0", c.x0);
    c.theta0 = s.number("theta0", c.theta0);
    require(c.n_paths >= 2, s.where("n_paths") + ": need at least 2 paths");
    require(c.horizon > 0.0 && c.dt > 0.0 && c.dt <= c.horizon, s.where("dt") + ": need 0 < dt <= horizon");
    return c;
}

inline int read_theta_points(Section& s, int fallback) {
    const int n = s.integer("theta_points", fallback);
    require(n >= 4, s.where("theta_points") + ": need at least 4 points");
    return n;
}

inline ModelSpec read_model(Section s) {
    ModelSpec m;
    m.kind = s.string("kind", "ou");
    if (m.kind == "ou") {
        m.ou.a = s.number("a", m.ou.a);
        m.ou.b = s.number("b", m.ou.b);
        m.ou.sigma = s.number("sigma", m.ou.sigma);
        require(m.ou.b > 0.0, s.where("b") + ": must be > 0");
        require(m.ou.sigma > 0.0, s.where("sigma") + ": must be > 0");
    } else if (m.kind == "ext_ou") {
        m.ext.b = s.number("b", m.ext.b);
        m.ext.sigma = s.number("sigma", m.ext.sigma);
        m.ext.c = s.number("c", m.ext.c);
        m.ext.nu = s.number("nu", m.ext.nu);
        require(m.ext.b > 0.0 && m.ext.sigma > 0.0 && m.ext.c > 0.0, s.where("b") + ": b, sigma, c must be > 0");
        require(m.ext.nu >= 0.0, s.where("nu") + ": must be >= 0");
    } else if (m.kind == "custom_table") {
        m.table.x = s.numbers("x", {});
        m.table.mu = s.numbers("mu", {});
        m.table.sigma = s.numbers("sigma", {});
        const auto n = m.table.x.size();
        require(n >= 4 && m.table.mu.size() == n && m.table.sigma.size() == n,
                s.where("x") + ": x, mu, sigma need equal length >= 4");
        for (std::size_t i = 0; i < n; ++i) {
            require(i == 0 || m.table.x[i] > m.table.x[i - 1], s.where("x") + ": must be strictly increasing");
            require(m.table.sigma[i] > 0.0, s.where("sigma") + ": must be > 0");
        }
    } else {
        throw ConfigError(s.where("kind") + ": expected ou, ext_ou or custom_table");
    }
    if (s.has("domain")) {
        const auto d = s.numbers("domain", {});
        require(d.size() == 2 && d[1] > d[0], s.where("domain") + ": expected [lo, hi] with hi > lo");
        m.domain = Interval{d[0], d[1]};
    } else {
        s.numbers("domain", {});
    }
    s.finish();
    return m;
}

inline MarketConfig read_market(Section s) {
    MarketConfig c;
    c.risk_appetite = s.number("G", 2.0);
    c.discount_rate = s.number("r", 0.05);
    if (s.has("eps")) {
        require(!s.has("eps_buy") && !s.has("eps_sell"), s.where("eps") + ": give eps or eps_buy/eps_sell, not both");
        c.eps_buy = c.eps_sell = s.number("eps", 0.0);
    } else {
        s.number("eps", 0.0);
        c.eps_buy = s.number("eps_buy", 0.0);
        c.eps_sell = s.number("eps_sell", 0.0);
    }
    s.finish();
    require(c.risk_appetite > 0.0, s.where("G") + ": must be > 0");
    require(c.discount_rate > 0.0, s.where("r") + ": must be > 0");
    require(c.eps_buy >= 0.0 && c.eps_sell >= 0.0, s.where("eps_buy") + ": costs must be >= 0");
    return c;
}

}  // namespace detail

/// Parse and validate. `expected` is the subcommand given on the command
/// line; a task section naming a different command is an error.
inline RunConfig parse_config(const json& j, std::optional<Task> expected = std::nullopt) {
    using detail::require;
    detail::Section root(j, "config");
    RunConfig cfg;
    cfg.model = detail::read_model(root.child("model"));
    cfg.market = detail::read_market(root.child("market"));

    auto task = root.child("task");
    std::optional<std::string> name;
    const json tasks = j.contains("task") ? j.at("task") : json::object();
    require(tasks.is_object(), "config.task: expected an object");
    for (const auto& [k, v] : tasks.items()) {
        require(!name, "config.task: exactly one task expected");
        name = k;
    }
    if (name) {
        const auto it = task_names().find(*name);
        require(it != task_names().end(), "config.task." + *name + ": unknown task");
        cfg.task = it->second;
        require(!expected || *expected == cfg.task,
                "config.task: configured for '" + *name + "' but run as '" + to_string(*expected) + "'");
    } else {
        require(expected.has_value(), "config.task: no task given");
        cfg.task = *expected;
    }
    auto opts = task.child(to_string(cfg.task));
    switch (cfg.task) {
        case Task::boundary: {
            cfg.boundary.theta_points = detail::read_theta_points(opts, cfg.boundary.theta_points);
            cfg.boundary.theta_min = opts.maybe_number("theta_min");
            cfg.boundary.theta_max = opts.maybe_number("theta_max");
            require(!cfg.boundary.theta_min || !cfg.boundary.theta_max ||
                        *cfg.boundary.theta_max > *cfg.boundary.theta_min,
                    opts.where("theta_max") + ": must exceed theta_min");
            break;
        }
        case Task::dp: {
            auto xs = opts.child("x_grid");
            cfg.dp.x = detail::read_grid(xs, cfg.dp.x);
            auto ts = opts.child("theta_grid");
            cfg.dp.theta = detail::read_grid(ts, cfg.dp.theta);
            cfg.dp.dt = opts.maybe_number("dt");
            cfg.dp.tol = opts.number("tol", 0.0);
            cfg.dp.max_iters = opts.integer("max_iters", 0);
            require(!cfg.dp.dt || *cfg.dp.dt > 0.0, opts.where("dt") + ": must be > 0");
            require(cfg.dp.tol >= 0.0 && cfg.dp.max_iters >= 0, opts.where("tol") + ": must be >= 0");
            break;
        }
        case Task::value: {
            auto xs = opts.child("x_grid");
            cfg.value.x = detail::read_uniform(xs, cfg.value.x);
            auto ts = opts.child("theta_grid");
            cfg.value.theta = detail::read_uniform(ts, cfg.value.theta);
            cfg.value.theta_points = detail::read_theta_points(opts, cfg.value.theta_points);
            break;
        }
        case Task::simulate: {
            cfg.simulate.sim = detail::read_sim(opts, cfg.simulate.sim);
            cfg.simulate.policy = opts.string("policy", cfg.simulate.policy);
            require(cfg.simulate.policy == "exact" || cfg.simulate.policy == "perturbative" ||
                        cfg.simulate.policy == "costfree",
                    opts.where("policy") + ": expected exact, perturbative or costfree");
            cfg.simulate.theta_points = detail::read_theta_points(opts, cfg.simulate.theta_points);
            break;
        }
        case Task::scaling: {
            cfg.scaling.eps = opts.numbers("eps", cfg.scaling.eps);
            require(cfg.scaling.eps.size() >= 2, opts.where("eps") + ": need at least two costs");
            for (double e : cfg.scaling.eps) require(e > 0.0, opts.where("eps") + ": costs must be > 0");
            cfg.scaling.simulate = opts.boolean("simulate", cfg.scaling.simulate);
            cfg.scaling.sim = detail::read_sim(opts, cfg.scaling.sim);
            cfg.scaling.theta_points = detail::read_theta_points(opts, cfg.scaling.theta_points);
            break;
        }
    }
    opts.finish();
    task.finish();

    auto out = root.child("output");
    cfg.output.directory = out.string("directory", cfg.output.directory);
    cfg.output.formats = out.strings("formats", cfg.output.formats);
    for (const auto& f : cfg.output.formats)
        require(f == "csv" || f == "json", out.where("formats") + ": expected csv or json");
    out.finish();
    root.finish();
    return cfg;
}

namespace detail {
inline json grid_json(const GridSpec& g) {
    json j = {{"n", g.n}};
    j["min"] = g.min ? json(*g.min) : json(nullptr);
    j["max"] = g.max ? json(*g.max) : json(nullptr);
    return j;
}
inline json sim_json(const SimConfig& s) {
    return {{"n_paths", s.n_paths}, {"horizon", s.horizon}, {"dt", s.dt},
            {"seed", s.seed},       {"x0", s.x0},           {"theta0", s.theta0}};
}
}  // namespace detail

/// Normalised configuration with all defaults explicit.
inline json to_json(const RunConfig& c) {
    json model = {{"kind", c.model.kind}};
    if (c.model.kind == "ou") {
        model["a"] = c.model.ou.a;
        model["b"] = c.model.ou.b;
        model["sigma"] = c.model.ou.sigma;
    } else if (c.model.kind == "ext_ou") {
        model["b"] = c.model.ext.b;
        model["sigma"] = c.model.ext.sigma;
        model["c"] = c.model.ext.c;
        model["nu"] = c.model.ext.nu;
    } else {
        model["x"] = c.model.table.x;
        model["mu"] = c.model.table.mu;
        model["sigma"] = c.model.table.sigma;
    }
    if (c.model.domain) model["domain"] = {c.model.domain->lo, c.model.domain->hi};

    json market = {{"G", c.market.risk_appetite},
                   {"r", c.market.discount_rate},
                   {"eps_buy", c.market.eps_buy},
                   {"eps_sell", c.market.eps_sell}};

    json opts;
    switch (c.task) {
        case Task::boundary:
            opts = {{"theta_points", c.boundary.theta_points}};
            if (c.boundary.theta_min) opts["theta_min"] = *c.boundary.theta_min;
            if (c.boundary.theta_max) opts["theta_max"] = *c.boundary.theta_max;
            break;
        case Task::dp:
            opts = {{"x_grid", detail::grid_json(c.dp.x)},
                    {"theta_grid", detail::grid_json(c.dp.theta)},
                    {"tol", c.dp.tol},
                    {"max_iters", c.dp.max_iters}};
            opts["dt"] = c.dp.dt ? json(*c.dp.dt) : json(nullptr);
            break;
        case Task::value:
            opts = {{"x_grid", {{"min", c.value.x.min}, {"max", c.value.x.max}, {"n", c.value.x.n}}},
                    {"theta_grid", {{"min", c.value.theta.min}, {"max", c.value.theta.max}, {"n", c.value.theta.n}}},
                    {"theta_points", c.value.theta_points}};
            break;
        case Task::simulate:
            opts = detail::sim_json(c.simulate.sim);
            opts["policy"] = c.simulate.policy;
            opts["theta_points"] = c.simulate.theta_points;
            break;
        case Task::scaling:
            opts = detail::sim_json(c.scaling.sim);
            opts["eps"] = c.scaling.eps;
            opts["simulate"] = c.scaling.simulate;
            opts["theta_points"] = c.scaling.theta_points;
            break;
    }
    return {{"model", model},
            {"market", market},
            {"task", {{to_string(c.task), opts}}},
            {"output", {{"directory", c.output.directory}, {"formats", c.output.formats}}}};
}

/// Instantiate the configured model. Table models interpolate mu and sigma
/// with modified Akima splines, which also supply the derivatives.
inline AnyModel make_model(const ModelSpec& m) {
    if (m.kind == "ou") return OuModel(m.ou, m.domain);
    if (m.kind == "ext_ou") return ExtOuModel(m.ext, m.domain);
    using Spline = boost::math::interpolators::makima<std::vector<double>>;
    auto mu = std::make_shared<Spline>(std::vector<double>(m.table.x), std::vector<double>(m.table.mu));
    auto sg = std::make_shared<Spline>(std::vector<double>(m.table.x), std::vector<double>(m.table.sigma));
    const Interval d = m.domain ? *m.domain : Interval{m.table.x.front(), m.table.x.back()};
    if (d.lo < m.table.x.front() || d.hi > m.table.x.back())
        throw ConfigError("config.model.domain: must lie within the table");
    return GenericModel([mu](double x) { return (*mu)(x); }, [sg](double x) { return (*sg)(x); }, d,
                        [mu](double x) { return mu->prime(x); }, [sg](double x) { return sg->prime(x); });
}

}  // namespace notrade::cli
