// Command-line front end: run, refine, accept, describe.
//
// Exit status: 0 success, 1 unexpected error, 2 config error, 3 admissibility
// rejection, 4 blow-up, 5 failed checks or acceptance criteria.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ahrf/acceptance.hpp"
#include "ahrf/errors.hpp"
#include "ahrf/scenario.hpp"

namespace {

enum Exit { ok = 0, other = 1, config = 2, rejected = 3, blowup = 4, failed = 5 };

int run(const std::string& path, const std::string& out_root, bool quiet) {
    const ahrf::ScenarioConfig cfg = ahrf::load_config(path);
    const ahrf::RunResult r = ahrf::run_scenario(cfg, {out_root});
    if (!quiet) {
        std::cout << r.report.table();
    }
    switch (r.report.status) {
        case ahrf::RunReport::Status::rejected:
            std::cerr << "admissibility: " << r.report.admissibility.message << '\n';
            return rejected;
        case ahrf::RunReport::Status::blowup:
            std::cerr << "blow-up: " << r.report.message << '\n';
            return blowup;
        case ahrf::RunReport::Status::completed:
            break;
    }
    return r.report.all_passed() ? ok : failed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Asymptotically hyperbolic extensions by modified Ricci flow"};
    app.require_subcommand(1);
    std::string out_root = ahrf::default_output_root();
    app.add_option("--output-root", out_root, "Directory for run outputs (default $AHRF_OUTPUT_ROOT or ./ahrf_output)");

    std::string config_path;
    bool quiet = false;
    auto* run_cmd = app.add_subcommand("run", "Run one scenario and write CSV/JSON outputs");
    run_cmd->add_option("config", config_path, "Scenario JSON")->required();
    run_cmd->add_flag("-q,--quiet", quiet, "Print nothing on success");

    std::size_t levels = 3;
    auto* refine_cmd = app.add_subcommand("refine", "Grid refinement study at n, 2n, 4n, ...");
    refine_cmd->add_option("config", config_path, "Scenario JSON")->required();
    refine_cmd->add_option("--levels", levels, "Number of grids")->check(CLI::Range(2, 6));
    double min_order = 1.8;
    refine_cmd->add_option("--min-order", min_order, "Observed order required for exit status 0");

    auto* accept_cmd = app.add_subcommand("accept", "Run the acceptance suite");
    ahrf::SuiteOptions suite;
    accept_cmd->add_option("--scenario-dir", suite.scenario_dir, "Directory holding the bundled scenarios");
    accept_cmd->add_option("--workers", suite.workers, "Scenario worker threads (0: hardware concurrency)");
    accept_cmd->add_option("--only", suite.only, "Criteria to run")->check(CLI::Range(1, 12));
    accept_cmd->add_option("--tolerance-scale", suite.tolerance_scale, "Scale every threshold; values below 1 are stricter")
        ->check(CLI::PositiveNumber);

    auto* describe_cmd = app.add_subcommand("describe", "Print the parsed scenario");
    describe_cmd->add_option("config", config_path, "Scenario JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config;
    }

    try {
        if (*run_cmd) {
            return run(config_path, out_root, quiet);
        }
        if (*refine_cmd) {
            const ahrf::RefinementReport r = ahrf::run_refinement(ahrf::load_config(config_path), levels);
            std::cout << r.table();
            return r.degenerate || r.min_order >= min_order ? ok : failed;
        }
        if (*accept_cmd) {
            const ahrf::SuiteReport r = ahrf::run_acceptance_suite(suite);
            std::cout << r.table();
            return r.all_passed() ? ok : failed;
        }
        if (*describe_cmd) {
            const ahrf::ScenarioConfig cfg = ahrf::load_config(config_path);
            std::cout << ahrf::describe(cfg) << "\n" << ahrf::config_to_json(cfg) << '\n';
            return ok;
        }
    } catch (const ahrf::ConfigurationError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config;
    } catch (const ahrf::AdmissibilityError& e) {
        std::cerr << "admissibility: " << e.what() << '\n';
        return rejected;
    } catch (const ahrf::BlowUpError& e) {
        std::cerr << "blow-up: " << e.what() << '\n';
        return blowup;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return other;
    }
    return other;
}
