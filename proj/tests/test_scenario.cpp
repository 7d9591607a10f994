#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ahrf/acceptance.hpp"
#include "ahrf/errors.hpp"
#include "ahrf/scenario.hpp"

using namespace ahrf;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = AHRF_SCENARIO_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ahrf_scenario_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

ScenarioConfig small(const std::string& name, double t_end = 60.0) {
    return parse_config(R"({"name": ")" + name + R"(", "grid_n": 32, "t_end": )" + std::to_string(t_end) +
                        R"(, "H": {"kind": "for_mass", "m": 0.3}, "controls": {"dt_factor": 1e-3}})");
}

int cli(const std::string& args) {
    const std::string cmd = std::string(AHRF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("bundled configs parse") {
    for (const char* name : {"hyperbolic", "ads_m01", "ads_m05", "ads_m09", "perturbed_l2", "tail_a1"}) {
        const ScenarioConfig c = load_config(kScenarios + "/" + name + ".json");
        CHECK(c.name == name);
        CHECK(c.grid_n == 128);
        CHECK(c.t_end == 100.0);
        // The echo parses back to the same config.
        CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
    }
    CHECK(load_config(kScenarios + "/ads_m05.json").has_exact_solution());
    CHECK(load_config(kScenarios + "/ads_m05.json").exact_mass() == 0.5);
    CHECK_FALSE(load_config(kScenarios + "/perturbed_l2.json").has_exact_solution());
    CHECK_FALSE(load_config(kScenarios + "/tail_a1.json").has_exact_solution());
}

TEST_CASE("config validation") {
    const std::string H = R"("H": {"kind": "constant", "value": 2})";
    CHECK_NOTHROW(parse_config("{" + H + "}"));
    CHECK_THROWS_AS(parse_config("{" + H), ConfigurationError);
    CHECK_THROWS_AS(parse_config("{}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"grid_n": 8, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"grid_n": 64.5, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"t_end": 1, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"tend": 10, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version": 2, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"name": "../x", )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"H": {"kind": "constant", "value": 0}})"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"H": {"kind": "for_mass", "m": 1.0}})"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"H": {"kind": "profile", "coefficients": [1.0, 1.5]}})"), ConfigurationError);
    CHECK_NOTHROW(parse_config(R"({"H": {"kind": "profile", "coefficients": [2.0, 0.5, 0.1]}})"));
    CHECK_THROWS_AS(parse_config(R"({"H": {"kind": "sphere"}})"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"initial_metric": {"kind": "perturbed", "eps": 0.5}, )" + H + "}"),
                    ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"initial_metric": {"kind": "perturbed", "l": 1}, )" + H + "}"),
                    ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"Rbar": {"kind": "tail", "a": -1}, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"Rbar": {"kind": "table", "path": "missing.csv"}, )" + H + "}"),
                    ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"controls": {"cfl_safety": 1.5}, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"controls": {"snapshot_times": [0.5]}, )" + H + "}"), ConfigurationError);
    CHECK_THROWS_AS(parse_config(R"({"admissibility_override": 1, )" + H + "}"), ConfigurationError);
}

TEST_CASE("Rbar tables resolve against the config directory") {
    const fs::path dir = scratch_dir("table");
    std::ofstream(dir / "rbar.csv") << "t,0,3.141592653589793\n1,-5.5,-7\n10,-6,-6\n";
    std::ofstream(dir / "cfg.json") << R"({"H": {"kind": "constant", "value": 2.5}, "Rbar": {"kind": "table", "path": "rbar.csv"}})";
    const ScenarioConfig c = load_config((dir / "cfg.json").string());
    const RbarProfile p = c.curvature_profile();
    CHECK(p.kind() == RbarProfile::Kind::table);
    CHECK(p.warnings().size() == 1);
    CHECK(p(1.0, 0.0) == -5.5);
    CHECK(p(1.0, 3.0) >= -6.0);
    fs::remove_all(dir);
}

TEST_CASE("output times") {
    ScenarioConfig c = small("times", 80.0);
    CHECK(c.output_times() == std::vector<double>{1.0, 10.0, 20.0, 40.0, 80.0});
    c.controls.snapshot_times = {3.0, 40.0};
    CHECK(c.output_times() == std::vector<double>{3.0, 20.0, 40.0, 80.0});
}

TEST_CASE("run writes reports and is deterministic") {
    const fs::path dir = scratch_dir("run");
    const ScenarioConfig c = small("ads_small");
    const RunResult r = run_scenario(c, {dir.string()});
    INFO(r.report.table());
    CHECK(r.report.status == RunReport::Status::completed);
    CHECK(r.report.all_passed());
    for (const char* f : {"flow.csv", "lapse.csv", "master.csv", "summary.json", "snapshot_t15.txt"}) {
        CHECK(fs::exists(dir / "ads_small" / f));
    }
    const auto summary = nlohmann::json::parse(slurp(dir / "ads_small" / "summary.json"));
    CHECK(summary["schema_version"] == kSchemaVersion);
    CHECK(summary["status"] == "completed");
    CHECK(summary["config"]["grid_n"] == 32);
    CHECK(summary["all_passed"] == true);
    for (const auto& check : summary["checks"]) {
        CHECK(check.contains("measured"));
        CHECK(check.contains("threshold"));
        CHECK(check.contains("passed"));
    }
    CHECK(summary["checks"].size() == r.report.checks.size());
    const std::string master = slurp(dir / "ads_small" / "master.csv");
    const std::string lapse = slurp(dir / "ads_small" / "lapse.csv");

    const fs::path again = scratch_dir("run_again");
    run_scenario(c, {again.string()});
    CHECK(slurp(again / "ads_small" / "master.csv") == master);
    CHECK(slurp(again / "ads_small" / "lapse.csv") == lapse);
    CHECK(slurp(again / "ads_small" / "flow.csv") == slurp(dir / "ads_small" / "flow.csv"));
    fs::remove_all(dir);
    fs::remove_all(again);
}

TEST_CASE("hyperbolic run is rigid") {
    ScenarioConfig c = small("hyp");
    c.H.mass = 0.0;
    const RunResult r = run_scenario(c);
    REQUIRE(r.report.status == RunReport::Status::completed);
    for (const auto& s : r.extension->states()) {
        for (double u : s.u) {
            CHECK(u == 1.0);
        }
    }
    REQUIRE(r.rigidity.has_value());
    CHECK(r.rigidity->rigid);
    CHECK(r.rigidity->consistent);
    CHECK(r.decay->degenerate);
    CHECK(r.report.files.empty());
}

TEST_CASE("rejection and blow-up are reported") {
    // a = 20 gives K ~ 0.30; phi = 2 sqrt(2)/H exceeds 1/sqrt(K) for H = 1.
    ScenarioConfig c = small("reject", 20.0);
    c.H = {};
    c.H.kind = ScenarioConfig::MeanCurvature::Kind::constant;
    c.H.value = 1.0;
    c.Rbar.kind = ScenarioConfig::Curvature::Kind::tail;
    c.Rbar.a = 20.0;
    const RunResult rejected = run_scenario(c);
    CHECK(rejected.report.status == RunReport::Status::rejected);
    CHECK_FALSE(rejected.report.admissibility.admissible);
    CHECK(rejected.report.K.K > 0.25);
    CHECK_FALSE(rejected.extension.has_value());
    CHECK_FALSE(rejected.report.all_passed());

    c.admissibility_override = true;
    const RunResult blown = run_scenario(c);
    CHECK(blown.report.status == RunReport::Status::blowup);
    REQUIRE(blown.report.blowup.has_value());
    CHECK(blown.report.blowup->t < 2.0);
    CHECK(nlohmann::json::parse(blown.report.summary_json())["status"] == "blowup");
}

TEST_CASE("worker pool keeps the input order") {
    std::vector<ScenarioConfig> configs;
    for (double m : {0.0, 0.2, 0.4}) {
        ScenarioConfig c = small("pool" + std::to_string(configs.size()), 20.0);
        c.H.mass = m;
        configs.push_back(c);
    }
    const auto results = run_scenarios(configs, {}, 2);
    REQUIRE(results.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(results[i].report.config.name == configs[i].name);
        CHECK(results[i].masses->mass_formula.front() == doctest::Approx(configs[i].H.mass).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("refinement against the closed form") {
    ScenarioConfig c = small("refine", 20.0);
    c.H.mass = 0.5;
    const RefinementReport r = run_refinement(c, 3);
    CHECK(r.oracle == "exact");
    CHECK(r.grid_sizes == std::vector<std::size_t>{32, 64, 128});
    CHECK(r.errors[2] < r.errors[1]);
    CHECK(r.min_order > 1.8);
    CHECK_THROWS_AS(run_refinement(c, 1), ConfigurationError);

    c.H.mass = 0.0;
    const RefinementReport flat = run_refinement(c, 2);
    CHECK(flat.degenerate);
}

TEST_CASE("self-convergence on perturbed data") {
    ScenarioConfig c = parse_config(R"({"name": "pert", "grid_n": 32, "t_end": 12,
        "initial_metric": {"kind": "perturbed", "eps": 0.1, "l": 2},
        "H": {"kind": "constant", "value": 2.8284271247461903}})");
    const RefinementReport r = run_refinement(c, 3);
    INFO(r.table());
    CHECK(r.oracle == "richardson");
    CHECK(r.errors.size() == 2);
    CHECK(r.min_order > 1.8);
    CHECK_THROWS_AS(run_refinement(c, 2), ConfigurationError);
}

TEST_CASE("describe") {
    const std::string d = describe(load_config(kScenarios + "/ads_m09.json"));
    CHECK(d.find("ads_m09") != std::string::npos);
    CHECK(d.find("m = 0.9") != std::string::npos);
}

TEST_CASE("acceptance suite failure path") {
    SuiteOptions o;
    o.only = {11, 12};
    const SuiteReport pass = run_acceptance_suite(o);
    CHECK(pass.criteria.size() == 2);
    CHECK(pass.all_passed());
    o.tolerance_scale = 1e-30;
    const SuiteReport fail = run_acceptance_suite(o);
    CHECK_FALSE(fail.all_passed());
    CHECK(fail.table().find("FAIL") != std::string::npos);
}

TEST_CASE("command-line exit status") {
    const fs::path dir = scratch_dir("cli");
    std::ofstream(dir / "broken.json") << "{ not json";
    std::ofstream(dir / "reject.json")
        << R"({"name": "reject", "grid_n": 32, "t_end": 10, "H": {"kind": "constant", "value": 1.0},
              "Rbar": {"kind": "tail", "a": 20}})";
    std::ofstream(dir / "blowup.json")
        << R"({"name": "blowup", "grid_n": 32, "t_end": 10, "H": {"kind": "constant", "value": 1.0},
              "Rbar": {"kind": "tail", "a": 20}, "admissibility_override": true})";
    const std::string root = "--output-root " + (dir / "out").string() + " ";
    CHECK(cli(root + "run " + (dir / "broken.json").string()) == 2);
    CHECK(cli(root + "run " + (dir / "missing.json").string()) == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli(root + "run " + (dir / "reject.json").string()) == 3);
    CHECK(fs::exists(dir / "out" / "reject" / "summary.json"));
    CHECK(cli(root + "run " + (dir / "blowup.json").string()) == 4);
    CHECK(cli("accept --only 11") == 0);
    CHECK(cli("accept --only 11 --tolerance-scale 1e-30") == 5);
    CHECK(cli("describe " + kScenarios + "/tail_a1.json") == 0);
    fs::remove_all(dir);
}
