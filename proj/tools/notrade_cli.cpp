#include "notrade/cli/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

namespace cli = notrade::cli;

void diagnostic(const std::string& code, const std::string& message) {
    std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << '\n';
}

nlohmann::json load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw cli::ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    // Output files carry their config in a '#' header and are accepted as-is.
    if (!text.empty() && text[0] == '#') return cli::read_config_echo(text);
    return nlohmann::json::parse(text);
}

int execute(cli::Task task, const std::string& config_path, const std::string& out_dir) {
    try {
        const cli::RunConfig cfg = cli::parse_config(load(config_path), task);
        const cli::OutputSet files = cli::run(cfg);
        const auto written = files.write(out_dir.empty() ? cfg.output.directory : out_dir);
        for (const auto& p : written) std::cout << p.string() << '\n';
        return 0;
    } catch (const cli::ConfigError& e) {
        diagnostic("ConfigError", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        diagnostic("ConfigError", e.what());
        return 2;
    } catch (const notrade::NumericalError& e) {
        diagnostic(std::string(notrade::to_string(e.code())), e.what());
        return 3;
    } catch (const std::exception& e) {
        diagnostic("Internal", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"No-trade band solver"};
    app.set_version_flag("--version", std::string(notrade::kVersion));
    app.require_subcommand(1);

    std::string config_path, out_dir;
    for (const auto& [name, task] : cli::task_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out-dir", out_dir, "Override output.directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    for (const auto& [name, task] : cli::task_names())
        if (app.got_subcommand(name)) return execute(task, config_path, out_dir);
    return 2;
}
