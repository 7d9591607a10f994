#pragma once

// Scenario configs (one JSON object per file), the end-to-end pipeline
// flow -> K -> admissibility -> lapse -> analysis, refinement sweeps and reports.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ahrf/analysis.hpp"
#include "ahrf/extension_solver.hpp"
#include "ahrf/ricci_flow.hpp"

namespace ahrf {

inline constexpr int kSchemaVersion = 1;

struct ScenarioConfig {
    std::string name = "scenario";
    std::size_t grid_n = 128;
    double t_end = 100.0;

    struct Initial {
        enum class Kind { round, perturbed } kind = Kind::round;
        double eps = 0.0;
        int l = 2;
    } initial;

    struct MeanCurvature {
        enum class Kind { constant, for_mass, profile } kind = Kind::constant;
        double value = 0.0;                // constant
        double mass = 0.0;                 // for_mass
        std::vector<double> coefficients;  // profile: H = sum_i c_i cos^i(theta)
    } H;

    struct Curvature {
        enum class Kind { constant, tail, table } kind = Kind::constant;
        double a = 0.0;
        std::string path;  // table; relative paths resolve against the config file
    } Rbar;

    struct Controls {
        double cfl_safety = 0.9;
        double dt_factor = 4e-3;
        double max_rel_change = 0.01;
        std::vector<double> snapshot_times;  // empty: {1, 10, t_end} clipped to t_end
        std::string output_dir;              // empty: <output root>/<name>
        double sandwich_allowance = 0.0;     // added to the 1e-6 sandwich tolerance
    } controls;

    bool admissibility_override = false;

    /// Round sphere, constant Rbar and constant H: the run must reproduce AdS-Schwarzschild.
    bool has_exact_solution() const;
    /// Mass of the matching AdS-Schwarzschild solution; requires has_exact_solution().
    double exact_mass() const;

    ScalarField mean_curvature(const SphereGrid& grid) const;
    AxisymMetric initial_metric(const SphereGrid& grid) const;
    RbarProfile curvature_profile() const;
    /// Lapse output times: snapshots plus T/4 and T/2, sorted and unique.
    std::vector<double> output_times() const;
};

/// Throws ConfigurationError for unknown keys, wrong types or out-of-range values.
ScenarioConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
ScenarioConfig load_config(const std::string& path);
std::string config_to_json(const ScenarioConfig& config);

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool passed = false;
    std::string detail;
};

struct RunReport {
    enum class Status { completed, rejected, blowup };

    ScenarioConfig config;
    Status status = Status::completed;
    std::string message;
    KResult K;
    AdmissibilityReport admissibility;
    std::optional<BlowUp> blowup;
    std::vector<CheckResult> checks;
    /// Named scalar results (masses, fitted slopes) echoed into the summary.
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::string> files;
    std::vector<std::string> warnings;

    bool all_passed() const;
    std::string summary_json() const;
    std::string table() const;
};

const char* to_string(RunReport::Status status);

/// Everything a run produced; analysis fields are empty unless the lapse completed.
struct RunResult {
    RunReport report;
    std::shared_ptr<const FlowTrajectory> flow;
    std::optional<ExtensionTrajectory> extension;
    ScalarField phi;
    std::optional<BoundEnvelope> envelope;
    std::optional<SandwichReport> sandwich;
    std::optional<MassSeries> masses;
    std::optional<MassLimit> limit;
    std::optional<DecayFit> decay;
    std::optional<AHReport> ah;
    std::optional<RigidityReport> rigidity;
};

struct RunOptions {
    /// Directory receiving <name>/...; no files are written when empty.
    std::string output_root;
};

/// AHRF_OUTPUT_ROOT if set, otherwise "ahrf_output".
std::string default_output_root();

/// Admissibility rejection and blow-up are reported through the status, not thrown.
RunResult run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

/// Runs each config on at most `workers` threads; results keep the input order.
std::vector<RunResult> run_scenarios(const std::vector<ScenarioConfig>& configs, const RunOptions& options,
                                     std::size_t workers);

struct RefinementReport {
    std::string oracle;  // "exact" or "richardson"
    std::vector<std::size_t> grid_sizes;
    std::vector<double> errors;  // exact: against u_exact; richardson: between consecutive levels
    std::vector<double> orders;
    double min_order = 0.0;
    bool degenerate = false;
    std::string note;

    std::string table() const;
};

/// Reruns the lapse at n, 2n, ... (levels grids) over [1, t_end]. The step scales with
/// the grid spacing and the relative-change cap with 1/n. Errors are the max over stored
/// t >= 1 of |u - u_exact| when the config has an exact solution, otherwise the max
/// difference of the mean of u and of the Hawking mass between consecutive levels.
RefinementReport run_refinement(const ScenarioConfig& config, std::size_t levels);

/// Human-readable summary of the parsed config and the derived inputs.
std::string describe(const ScenarioConfig& config);

}  // namespace ahrf
