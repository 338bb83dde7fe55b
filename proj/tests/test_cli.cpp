#include "notrade/cli/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace notrade;
using namespace notrade::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json boundary_config() {
    return json::parse(R"({
        "model": {"kind": "ou", "a": 0.0, "b": 0.5, "sigma": 1.0},
        "market": {"eps": 0.03},
        "task": {"boundary": {"theta_points": 21}},
        "output": {"directory": "unused"}
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class CliRun : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("notrade_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    fs::path write_config(const std::string& name, const json& j) const {
        const auto p = root_ / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    int run(const std::string& sub, const fs::path& config, const fs::path& out) const {
        const std::string cmd = std::string(NOTRADE_CLI_PATH) + " " + sub + " --config '" + config.string() +
                                "' --out-dir '" + out.string() + "' > '" + (root_ / "stdout").string() + "' 2> '" +
                                (root_ / "stderr").string() + "'";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string stderr_text() const { return slurp(root_ / "stderr"); }

    fs::path root_;
};

}  // namespace

TEST(ParseConfig, Defaults) {
    const auto c = parse_config(boundary_config());
    EXPECT_EQ(c.task, Task::boundary);
    EXPECT_EQ(c.market.risk_appetite, 2.0);
    EXPECT_EQ(c.market.discount_rate, 0.05);
    EXPECT_EQ(c.market.eps_buy, 0.03);
    EXPECT_EQ(c.market.eps_sell, 0.03);
    EXPECT_EQ(c.boundary.theta_points, 21);
    EXPECT_EQ(c.output.formats, std::vector<std::string>{"csv"});
}

TEST(ParseConfig, RejectsUnknownKeys) {
    for (const char* ptr : {"/model", "/market", "/task/boundary", "/output", ""}) {
        json j = boundary_config();
        j[json::json_pointer(ptr)]["spurious"] = 1;
        EXPECT_THROW(parse_config(j), ConfigError) << ptr;
    }
}

TEST(ParseConfig, RejectsInvalidValues) {
    auto bad = [](const char* ptr, json v) {
        json j = boundary_config();
        j[json::json_pointer(ptr)] = v;
        return j;
    };
    EXPECT_THROW(parse_config(bad("/market/G", -1.0)), ConfigError);
    EXPECT_THROW(parse_config(bad("/market/r", 0.0)), ConfigError);
    EXPECT_THROW(parse_config(bad("/market/eps", -0.1)), ConfigError);
    EXPECT_THROW(parse_config(bad("/model/sigma", 0.0)), ConfigError);
    EXPECT_THROW(parse_config(bad("/model/kind", "cir")), ConfigError);
    EXPECT_THROW(parse_config(bad("/model/b", "half")), ConfigError);
    EXPECT_THROW(parse_config(bad("/output/formats", json::array({"xlsx"}))), ConfigError);
    EXPECT_THROW(parse_config(bad("/task", json::object({{"boundary", json::object()}, {"dp", json::object()}}))),
                 ConfigError);
    json both = boundary_config();
    both["market"]["eps_buy"] = 0.02;
    EXPECT_THROW(parse_config(both), ConfigError);
    EXPECT_THROW(parse_config(boundary_config(), Task::dp), ConfigError);
}

TEST(ParseConfig, AsymmetricCosts) {
    json j = boundary_config();
    j["market"] = {{"eps_buy", 0.08}, {"eps_sell", 0.02}};
    const auto c = parse_config(j);
    EXPECT_EQ(c.market.eps_buy, 0.08);
    EXPECT_EQ(c.market.eps_sell, 0.02);
}

TEST(ParseConfig, EchoRoundTrips) {
    for (const char* name : {"fig2a_boundary.json", "fig2c_boundary.json", "dp_ou.json", "value_ou.json",
                             "simulate_ou.json", "scaling_ou.json"}) {
        std::ifstream is(fs::path(NOTRADE_CONFIG_DIR) / name);
        const auto cfg = parse_config(json::parse(is));
        const json echo = to_json(cfg);
        EXPECT_EQ(to_json(parse_config(echo)), echo) << name;
        EXPECT_EQ(read_config_echo(header_block(echo) + "x,y\n1,2\n"), echo) << name;
    }
}

TEST(FormatNumber, ShortestRoundTrip) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 1000; ++k) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(-2.0), "-2");
    EXPECT_EQ(format_number(std::nan("")), "nan");
}

TEST(CsvTable, RendersHeaderAndRows) {
    CsvTable t({"a", "b", "c"});
    t.add({1.5, 2L, std::string("x")});
    EXPECT_EQ(t.render("# h\n"), "# h\na,b,c\n1.5,2,x\n");
    EXPECT_THROW(t.add({1.0}), std::logic_error);
}

TEST(MakeModel, CustomTableMatchesOu) {
    json j = boundary_config();
    std::vector<double> xs, mu, sig;
    for (int i = 0; i <= 120; ++i) {
        xs.push_back(-6.0 + 0.1 * i);
        mu.push_back(-0.5 * xs.back());
        sig.push_back(1.0);
    }
    j["model"] = {{"kind", "custom_table"}, {"x", xs}, {"mu", mu}, {"sigma", sig}};
    const auto c = parse_config(j);
    const auto model = make_model(c.model);
    const auto& g = std::get<GenericModel>(model);
    EXPECT_NEAR(g.drift(0.37), -0.185, 1e-12);
    EXPECT_NEAR(g.drift_prime(1.2), -0.5, 1e-9);
    j["model"]["mu"] = std::vector<double>{1.0};
    EXPECT_THROW(parse_config(j), ConfigError);
}

TEST_F(CliRun, BoundaryWritesHeaderedCsv) {
    const auto cfg = write_config("b.json", boundary_config());
    ASSERT_EQ(run("boundary", cfg, root_ / "out"), 0) << stderr_text();
    const std::string text = slurp(root_ / "out" / "boundary.csv");
    EXPECT_EQ(text.rfind("# notrade " + std::string(kVersion) + "\n# config: ", 0), 0u);
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    std::getline(is, line);
    std::getline(is, line);
    EXPECT_EQ(line, "theta,h_minus_exact,h_plus_exact,h0_costfree,h_minus_perturb,h_plus_perturb");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 21);
    EXPECT_EQ(read_config_echo(text), to_json(parse_config(boundary_config())));
}

TEST_F(CliRun, RerunsAreByteIdentical) {
    const auto cfg = write_config("b.json", boundary_config());
    ASSERT_EQ(run("boundary", cfg, root_ / "one"), 0) << stderr_text();
    ASSERT_EQ(run("boundary", cfg, root_ / "two"), 0) << stderr_text();
    EXPECT_EQ(slurp(root_ / "one" / "boundary.csv"), slurp(root_ / "two" / "boundary.csv"));
    // An output file is itself a valid config.
    ASSERT_EQ(run("boundary", root_ / "one" / "boundary.csv", root_ / "three"), 0) << stderr_text();
    EXPECT_EQ(slurp(root_ / "one" / "boundary.csv"), slurp(root_ / "three" / "boundary.csv"));
}

TEST_F(CliRun, ConfigErrorExitsTwo) {
    json j = boundary_config();
    j["market"]["G"] = -2.0;
    const auto cfg = write_config("bad.json", j);
    EXPECT_EQ(run("boundary", cfg, root_ / "out"), 2);
    const json diag = json::parse(stderr_text());
    EXPECT_EQ(diag.at("error"), "ConfigError");
    EXPECT_FALSE(fs::exists(root_ / "out"));

    std::ofstream(root_ / "broken.json") << "{\"model\": ";
    EXPECT_EQ(run("boundary", root_ / "broken.json", root_ / "out"), 2);
    EXPECT_EQ(run("dp", write_config("b.json", boundary_config()), root_ / "out"), 2);
}

TEST_F(CliRun, NumericalErrorExitsThreeWithoutOutput) {
    const json j = json::parse(R"({
        "model": {"kind": "ou", "a": 0.0, "b": 0.5, "sigma": 1.0},
        "market": {"eps": 0.03},
        "task": {"dp": {"x_grid": {"n": 21}, "theta_grid": {"n": 21}, "dt": 0.1, "max_iters": 3}},
        "output": {"formats": ["csv", "json"]}
    })");
    const auto cfg = write_config("dp.json", j);
    EXPECT_EQ(run("dp", cfg, root_ / "out"), 3);
    EXPECT_EQ(json::parse(stderr_text()).at("error"), "NoConvergence");
    EXPECT_TRUE(!fs::exists(root_ / "out") || fs::is_empty(root_ / "out"));
}

TEST_F(CliRun, DpWritesAllTables) {
    const json j = json::parse(R"({
        "model": {"kind": "ou", "a": 0.0, "b": 0.5, "sigma": 1.0},
        "market": {"eps": 0.03},
        "task": {"dp": {"x_grid": {"n": 41}, "theta_grid": {"n": 31}, "dt": 0.1}},
        "output": {"formats": ["csv", "json"]}
    })");
    ASSERT_EQ(run("dp", write_config("dp.json", j), root_ / "out"), 0) << stderr_text();
    for (const char* f : {"dp.csv", "dp_band.csv", "dp_boundary.csv", "dp.json"})
        EXPECT_TRUE(fs::exists(root_ / "out" / f)) << f;
    const json meta = json::parse(slurp(root_ / "out" / "dp.json"));
    EXPECT_GT(meta.at("iterations").get<int>(), 0);
}

TEST_F(CliRun, VersionFlag) {
    const std::string cmd = std::string(NOTRADE_CLI_PATH) + " --version > '" + (root_ / "v").string() + "'";
    EXPECT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_NE(slurp(root_ / "v").find(kVersion), std::string::npos);
}
