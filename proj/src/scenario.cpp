#include "ahrf/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ahrf/errors.hpp"
#include "ahrf/exact_solutions.hpp"

namespace ahrf {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double pi = std::numbers::pi;
constexpr double kSandwichTolerance = 1e-6;

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(6) << v;
    return out.str();
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigurationError(where + ": " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        fail(where, "expected an object");
    }
    for (const auto& item : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
            fail(where, "unknown key \"" + item.key() + "\"");
        }
    }
}

double number(const json& j, const std::string& where, const char* key, double fallback, double lo, double hi,
              bool open_lo = false) {
    if (!j.contains(key)) {
        return fallback;
    }
    const json& v = j.at(key);
    if (!v.is_number()) {
        fail(where + "." + key, "expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x) || x > hi || x < lo || (open_lo && x == lo)) {
        fail(where + "." + key, "value " + fmt(x) + " outside " + (open_lo ? "(" : "[") + fmt(lo) + ", " + fmt(hi) + "]");
    }
    return x;
}

long integer(const json& j, const std::string& where, const char* key, long fallback, long lo, long hi) {
    if (!j.contains(key)) {
        return fallback;
    }
    const json& v = j.at(key);
    if (!v.is_number_integer()) {
        fail(where + "." + key, "expected an integer");
    }
    const long x = v.get<long>();
    if (x < lo || x > hi) {
        fail(where + "." + key, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                                     std::to_string(hi) + "]");
    }
    return x;
}

std::string text(const json& j, const std::string& where, const char* key, const std::string& fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_string()) {
        fail(where + "." + key, "expected a string");
    }
    return j.at(key).get<std::string>();
}

std::string kind_of(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("kind")) {
        fail(where, "missing \"kind\"");
    }
    return text(j, where, "kind", "");
}

double profile_value(const std::vector<double>& c, double theta) {
    const double x = std::cos(theta);
    double v = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        v = v * x + *it;
    }
    return v;
}

void validate_mean_curvature(const ScenarioConfig::MeanCurvature& H) {
    using K = ScenarioConfig::MeanCurvature::Kind;
    if (H.kind != K::profile) {
        return;
    }
    if (H.coefficients.empty()) {
        fail("H.coefficients", "must not be empty");
    }
    for (int i = 0; i <= 4096; ++i) {
        const double v = profile_value(H.coefficients, pi * i / 4096.0);
        if (!(v > 0.0) || !std::isfinite(v)) {
            fail("H.coefficients", "profile is not positive at theta = " + fmt(pi * i / 4096.0));
        }
    }
}

}  // namespace

bool ScenarioConfig::has_exact_solution() const {
    if (initial.kind != Initial::Kind::round || Rbar.kind != Curvature::Kind::constant) {
        return false;
    }
    double h = 0.0;
    switch (H.kind) {
        case MeanCurvature::Kind::for_mass:
            return true;
        case MeanCurvature::Kind::constant:
            h = H.value;
            break;
        case MeanCurvature::Kind::profile:
            if (std::any_of(H.coefficients.begin() + 1, H.coefficients.end(), [](double c) { return c != 0.0; })) {
                return false;
            }
            h = H.coefficients.front();
            break;
    }
    const double m = mass_for_mean_curvature(h);
    return m >= 0.0 && m < 1.0;
}

double ScenarioConfig::exact_mass() const {
    if (!has_exact_solution()) {
        throw DomainError("scenario " + name + " has no closed-form solution");
    }
    switch (H.kind) {
        case MeanCurvature::Kind::for_mass:
            return H.mass;
        case MeanCurvature::Kind::constant:
            return mass_for_mean_curvature(H.value);
        case MeanCurvature::Kind::profile:
            break;
    }
    return mass_for_mean_curvature(H.coefficients.front());
}

ScalarField ScenarioConfig::mean_curvature(const SphereGrid& grid) const {
    ScalarField out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        switch (H.kind) {
            case MeanCurvature::Kind::constant:
                out[k] = H.value;
                break;
            case MeanCurvature::Kind::for_mass:
                out[k] = mean_curvature_for_mass(H.mass);
                break;
            case MeanCurvature::Kind::profile:
                out[k] = profile_value(H.coefficients, grid.theta()[k]);
                break;
        }
    }
    return out;
}

AxisymMetric ScenarioConfig::initial_metric(const SphereGrid& grid) const {
    if (initial.kind == Initial::Kind::perturbed && initial.eps != 0.0) {
        return perturbed_metric(grid, initial.eps, initial.l);
    }
    return round_metric(grid);
}

RbarProfile ScenarioConfig::curvature_profile() const {
    switch (Rbar.kind) {
        case Curvature::Kind::constant:
            return RbarProfile::constant();
        case Curvature::Kind::tail:
            return RbarProfile::tail(Rbar.a);
        case Curvature::Kind::table:
            break;
    }
    return RbarProfile::load_table(Rbar.path);
}

std::vector<double> ScenarioConfig::output_times() const {
    std::vector<double> t = controls.snapshot_times;
    if (t.empty()) {
        t = {1.0, std::min(10.0, t_end), t_end};
    }
    t.push_back(t_end / 4.0);
    t.push_back(t_end / 2.0);
    t.push_back(t_end);
    std::erase_if(t, [&](double x) { return x < 1.0 || x > t_end; });
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

ScenarioConfig parse_config(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigurationError(std::string("malformed JSON: ") + e.what());
    }
    check_keys(j, "config",
               {"schema_version", "name", "grid_n", "t_end", "initial_metric", "H", "Rbar", "controls",
                "admissibility_override"});
    ScenarioConfig c;
    if (integer(j, "config", "schema_version", kSchemaVersion, kSchemaVersion, kSchemaVersion) != kSchemaVersion) {
        fail("config.schema_version", "unsupported");
    }
    c.name = text(j, "config", "name", c.name);
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos || c.name == "." || c.name == "..") {
        fail("config.name", "must be a non-empty plain file name");
    }
    c.grid_n = static_cast<std::size_t>(integer(j, "config", "grid_n", 128, SphereGrid::min_nodes, 2048));
    c.t_end = number(j, "config", "t_end", c.t_end, 1.0, 1000.0, true);

    if (j.contains("initial_metric")) {
        const json& m = j.at("initial_metric");
        const std::string kind = kind_of(m, "initial_metric");
        if (kind == "round") {
            check_keys(m, "initial_metric", {"kind"});
        } else if (kind == "perturbed") {
            check_keys(m, "initial_metric", {"kind", "eps", "l"});
            c.initial.kind = ScenarioConfig::Initial::Kind::perturbed;
            c.initial.eps = number(m, "initial_metric", "eps", 0.0, -0.299, 0.299);
            c.initial.l = static_cast<int>(integer(m, "initial_metric", "l", 2, 2, 16));
        } else {
            fail("initial_metric.kind", "expected \"round\" or \"perturbed\", got \"" + kind + "\"");
        }
    }

    if (!j.contains("H")) {
        fail("config", "missing \"H\"");
    }
    {
        const json& h = j.at("H");
        const std::string kind = kind_of(h, "H");
        using K = ScenarioConfig::MeanCurvature::Kind;
        if (kind == "constant") {
            check_keys(h, "H", {"kind", "value"});
            c.H.kind = K::constant;
            if (!h.contains("value")) {
                fail("H", "missing \"value\"");
            }
            c.H.value = number(h, "H", "value", 0.0, 0.0, 1e6, true);
        } else if (kind == "for_mass") {
            check_keys(h, "H", {"kind", "m"});
            c.H.kind = K::for_mass;
            if (!h.contains("m")) {
                fail("H", "missing \"m\"");
            }
            c.H.mass = number(h, "H", "m", 0.0, 0.0, 0.999999);
        } else if (kind == "profile") {
            check_keys(h, "H", {"kind", "coefficients"});
            c.H.kind = K::profile;
            const json& coeffs = h.contains("coefficients") ? h.at("coefficients") : json();
            if (!coeffs.is_array()) {
                fail("H.coefficients", "expected an array of numbers");
            }
            for (const auto& v : coeffs) {
                if (!v.is_number() || !std::isfinite(v.get<double>())) {
                    fail("H.coefficients", "expected finite numbers");
                }
                c.H.coefficients.push_back(v.get<double>());
            }
            validate_mean_curvature(c.H);
        } else {
            fail("H.kind", "expected \"constant\", \"for_mass\" or \"profile\", got \"" + kind + "\"");
        }
    }

    if (j.contains("Rbar")) {
        const json& r = j.at("Rbar");
        const std::string kind = kind_of(r, "Rbar");
        using K = ScenarioConfig::Curvature::Kind;
        if (kind == "constant") {
            check_keys(r, "Rbar", {"kind"});
        } else if (kind == "tail") {
            check_keys(r, "Rbar", {"kind", "a"});
            c.Rbar.kind = K::tail;
            c.Rbar.a = number(r, "Rbar", "a", 0.0, 0.0, 1e6);
        } else if (kind == "table") {
            check_keys(r, "Rbar", {"kind", "path"});
            c.Rbar.kind = K::table;
            fs::path p = text(r, "Rbar", "path", "");
            if (p.empty()) {
                fail("Rbar", "missing \"path\"");
            }
            if (p.is_relative()) {
                p = fs::path(base_dir) / p;
            }
            c.Rbar.path = p.lexically_normal().string();
            try {
                (void)RbarProfile::load_table(c.Rbar.path);
            } catch (const Error& e) {
                fail("Rbar.path", e.what());
            }
        } else {
            fail("Rbar.kind", "expected \"constant\", \"tail\" or \"table\", got \"" + kind + "\"");
        }
    }

    if (j.contains("controls")) {
        const json& k = j.at("controls");
        check_keys(k, "controls",
                   {"cfl_safety", "dt_factor", "max_rel_change", "snapshot_times", "output_dir", "sandwich_allowance"});
        auto& ctl = c.controls;
        ctl.cfl_safety = number(k, "controls", "cfl_safety", ctl.cfl_safety, 0.0, 1.0, true);
        ctl.dt_factor = number(k, "controls", "dt_factor", ctl.dt_factor, 0.0, 0.1, true);
        ctl.max_rel_change = number(k, "controls", "max_rel_change", ctl.max_rel_change, 0.0, 0.5, true);
        ctl.sandwich_allowance = number(k, "controls", "sandwich_allowance", 0.0, 0.0, 1.0);
        ctl.output_dir = text(k, "controls", "output_dir", "");
        if (k.contains("snapshot_times")) {
            const json& s = k.at("snapshot_times");
            if (!s.is_array()) {
                fail("controls.snapshot_times", "expected an array of numbers");
            }
            for (const auto& v : s) {
                if (!v.is_number()) {
                    fail("controls.snapshot_times", "expected numbers");
                }
                const double t = v.get<double>();
                if (!(t >= 1.0 && t <= c.t_end)) {
                    fail("controls.snapshot_times", "time " + fmt(t) + " outside [1, t_end]");
                }
                ctl.snapshot_times.push_back(t);
            }
        }
    }

    if (j.contains("admissibility_override")) {
        if (!j.at("admissibility_override").is_boolean()) {
            fail("config.admissibility_override", "expected true or false");
        }
        c.admissibility_override = j.at("admissibility_override").get<bool>();
    }
    return c;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigurationError("cannot read config " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const fs::path base = fs::path(path).parent_path();
    return parse_config(buffer.str(), base.empty() ? "." : base.string());
}

namespace {

json config_json(const ScenarioConfig& c) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = c.name;
    j["grid_n"] = c.grid_n;
    j["t_end"] = c.t_end;
    if (c.initial.kind == ScenarioConfig::Initial::Kind::round) {
        j["initial_metric"] = {{"kind", "round"}};
    } else {
        j["initial_metric"] = {{"kind", "perturbed"}, {"eps", c.initial.eps}, {"l", c.initial.l}};
    }
    switch (c.H.kind) {
        case ScenarioConfig::MeanCurvature::Kind::constant:
            j["H"] = {{"kind", "constant"}, {"value", c.H.value}};
            break;
        case ScenarioConfig::MeanCurvature::Kind::for_mass:
            j["H"] = {{"kind", "for_mass"}, {"m", c.H.mass}};
            break;
        case ScenarioConfig::MeanCurvature::Kind::profile:
            j["H"] = {{"kind", "profile"}, {"coefficients", c.H.coefficients}};
            break;
    }
    switch (c.Rbar.kind) {
        case ScenarioConfig::Curvature::Kind::constant:
            j["Rbar"] = {{"kind", "constant"}};
            break;
        case ScenarioConfig::Curvature::Kind::tail:
            j["Rbar"] = {{"kind", "tail"}, {"a", c.Rbar.a}};
            break;
        case ScenarioConfig::Curvature::Kind::table:
            j["Rbar"] = {{"kind", "table"}, {"path", c.Rbar.path}};
            break;
    }
    j["controls"] = {{"cfl_safety", c.controls.cfl_safety},
                     {"dt_factor", c.controls.dt_factor},
                     {"max_rel_change", c.controls.max_rel_change},
                     {"snapshot_times", c.controls.snapshot_times},
                     {"output_dir", c.controls.output_dir},
                     {"sandwich_allowance", c.controls.sandwich_allowance}};
    j["admissibility_override"] = c.admissibility_override;
    return j;
}

json number_or_null(double v) {
    return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

std::string config_to_json(const ScenarioConfig& config) {
    return config_json(config).dump(2);
}

const char* to_string(RunReport::Status status) {
    switch (status) {
        case RunReport::Status::completed:
            return "completed";
        case RunReport::Status::rejected:
            return "rejected";
        case RunReport::Status::blowup:
            return "blowup";
    }
    return "unknown";
}

bool RunReport::all_passed() const {
    return status == Status::completed &&
           std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string RunReport::summary_json() const {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config_json(config);
    j["status"] = to_string(status);
    j["message"] = message;
    j["K"] = {{"value", number_or_null(K.K)},
              {"attained_at", number_or_null(K.attained_at)},
              {"t_max", number_or_null(K.t_max)},
              {"certificate", K.certificate}};
    j["admissibility"] = {{"admissible", admissibility.admissible},
                          {"max_phi", number_or_null(admissibility.max_phi)},
                          {"phi_threshold", number_or_null(admissibility.phi_threshold)},
                          {"H_threshold", number_or_null(admissibility.H_threshold)},
                          {"overridden", config.admissibility_override && !admissibility.admissible},
                          {"message", admissibility.message}};
    if (blowup) {
        j["blowup"] = {{"t", blowup->t}, {"theta", blowup->theta}, {"message", blowup->message}};
    } else {
        j["blowup"] = nullptr;
    }
    j["checks"] = json::array();
    for (const auto& c : checks) {
        j["checks"].push_back({{"name", c.name},
                               {"measured", number_or_null(c.measured)},
                               {"threshold", number_or_null(c.threshold)},
                               {"passed", c.passed},
                               {"detail", c.detail}});
    }
    j["metrics"] = json::object();
    for (const auto& [k, v] : metrics) {
        j["metrics"][k] = number_or_null(v);
    }
    j["files"] = files;
    j["warnings"] = warnings;
    j["all_passed"] = all_passed();
    return j.dump(2);
}

std::string RunReport::table() const {
    std::ostringstream out;
    out << "scenario " << config.name << ": " << to_string(status);
    if (!message.empty()) {
        out << " (" << message << ")";
    }
    out << "\n  K = " << fmt(K.K) << " at t = " << fmt(K.attained_at) << "; " << admissibility.message << '\n';
    for (const auto& c : checks) {
        out << "  " << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(22) << c.name << " measured "
            << std::setw(12) << fmt(c.measured) << " threshold " << std::setw(10) << fmt(c.threshold);
        if (!c.detail.empty()) {
            out << "  " << c.detail;
        }
        out << '\n';
    }
    for (const auto& w : warnings) {
        out << "  warning: " << w << '\n';
    }
    for (const auto& f : files) {
        out << "  wrote " << f << '\n';
    }
    return out.str();
}

std::string default_output_root() {
    const char* env = std::getenv("AHRF_OUTPUT_ROOT");
    return env && *env ? std::string(env) : std::string("ahrf_output");
}

namespace {

FlowControls flow_controls(const ScenarioConfig& c) {
    FlowControls fc;
    fc.cfl_safety = c.controls.cfl_safety;
    fc.t_end = c.t_end;
    return fc;
}

ExtensionControls extension_controls(const ScenarioConfig& c) {
    ExtensionControls ec;
    ec.t_end = c.t_end;
    ec.dt_factor = c.controls.dt_factor;
    ec.max_rel_change = c.controls.max_rel_change;
    ec.output_times = c.output_times();
    ec.admissibility_override = c.admissibility_override;
    return ec;
}

CheckResult at_most(std::string name, double measured, double threshold, std::string detail = {}) {
    return {std::move(name), measured, threshold, measured <= threshold, std::move(detail)};
}

std::string snapshot_name(double t) {
    std::ostringstream out;
    out << "snapshot_t" << std::setprecision(10) << t << ".txt";
    return out.str();
}

void flow_checks(RunResult& r) {
    const auto& flow = *r.flow;
    double drift = 0.0;
    double gb = 0.0;
    for (std::size_t i = 0; i < flow.states().size(); ++i) {
        drift = std::max(drift, std::abs(flow.diagnostics()[i].area - 4.0 * pi) / (4.0 * pi));
        const auto& s = flow.states()[i];
        gb = std::max(gb, std::abs(integrate(s.metric, s.R) - 8.0 * pi));
    }
    auto& checks = r.report.checks;
    checks.push_back(at_most("flow_area_drift", drift, 1e-8, "relative to 4 pi"));
    checks.push_back(at_most("gauss_bonnet", gb, 1e-6, "max |int R - 8 pi| over stored flow states"));
    const double final_msq = flow.diagnostics().back().max_msq;
    std::string detail = "max |M|^2 at the last flow state";
    bool decaying = true;
    if (flow.diagnostics().front().max_msq > 1e-20) {
        try {
            const RateFit fit = convergence_rate(flow);
            detail += "; fitted rate " + fmt(fit.rate);
            decaying = fit.degenerate || fit.rate < 0.0;
            r.report.metrics.emplace_back("flow_decay_rate", fit.rate);
        } catch (const DiagnosticError& e) {
            detail += std::string("; ") + e.what();
            decaying = false;
        }
    }
    CheckResult c = at_most("flow_settles", final_msq, 1e-6, detail);
    c.passed = c.passed && decaying;
    checks.push_back(c);
}

void lapse_checks(RunResult& r, const ScenarioConfig& config, const RbarProfile& Rbar) {
    const auto& ext = *r.extension;
    const auto& flow = *r.flow;
    const auto& grid = flow.grid();
    auto& report = r.report;
    auto& checks = report.checks;

    std::vector<double> times;
    for (const auto& s : ext.states()) {
        times.push_back(s.t);
    }
    r.envelope = delta_bounds(flow, Rbar, times);
    const double tol = kSandwichTolerance + config.controls.sandwich_allowance;
    r.sandwich = check_sandwich(ext, *r.envelope, r.phi, grid, tol);
    const auto& sw = *r.sandwich;
    {
        CheckResult c{"sandwich_bounds", sw.max_violation, tol, sw.lower_violations + sw.upper_violations == 0,
                      std::to_string(sw.lower_violations) + " lower and " + std::to_string(sw.upper_violations) +
                          " upper violations in " + std::to_string(sw.checked) + " points"};
        checks.push_back(c);
    }
    const bool round_case = config.initial.kind == ScenarioConfig::Initial::Kind::round &&
                            config.Rbar.kind != ScenarioConfig::Curvature::Kind::table &&
                            *std::min_element(r.phi.begin(), r.phi.end()) ==
                                *std::max_element(r.phi.begin(), r.phi.end());
    if (round_case) {
        checks.push_back(at_most("sandwich_equality", std::max(sw.max_lower_gap, sw.max_upper_gap), 1e-8,
                                 "round case: both bounds equal w"));
    }

    r.masses = mass_series(ext, flow, Rbar);
    const auto& ms = *r.masses;
    double identity = 0.0;
    double worst_increment = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        identity = std::max(identity, std::abs(ms.mass_def[i] - ms.mass_formula[i]));
        if (i > 0) {
            worst_increment = std::min(worst_increment, ms.mass_formula[i] - ms.mass_formula[i - 1]);
        }
    }
    checks.push_back(at_most("mass_identity", identity, 1e-10, "definition against the integral formula"));
    checks.push_back({"mass_monotone", worst_increment, -1e-8, worst_increment >= -1e-8,
                      "most negative increment of the mass series"});
    {
        const auto fd = finite_difference(times, ms.mass_formula);
        double worst = 0.0;
        double where = 0.0;
        std::size_t compared = 0;
        for (std::size_t i = 1; i + 1 < times.size(); ++i) {
            if (ms.dmass[i] > 1e-6) {
                ++compared;
                const double rel = std::abs(fd[i] - ms.dmass[i]) / ms.dmass[i];
                if (rel > worst) {
                    worst = rel;
                    where = times[i];
                }
            }
        }
        checks.push_back(at_most("mass_derivative", worst, 0.05,
                                 compared == 0 ? "dm/dt stays below 1e-6"
                                               : std::to_string(compared) + " interior samples, worst at t = " +
                                                     fmt(where)));
    }
    report.metrics.emplace_back("mass_initial", ms.mass_formula.front());
    report.metrics.emplace_back("mass_final", ms.mass_formula.back());

    if (config.has_exact_solution()) {
        const double m = config.exact_mass();
        double u_err = 0.0;
        double m_err = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double u = exact_lapse(m, times[i]);
            for (double v : ext.states()[i].u) {
                u_err = std::max(u_err, std::abs(v - u));
            }
            m_err = std::max(m_err, std::abs(ms.mass_def[i] - m));
        }
        checks.push_back(at_most("exact_lapse", u_err, 1e-5, "max |u - u_exact|, m = " + fmt(m)));
        checks.push_back(at_most("mass_constancy", m_err, 1e-5, "max |m_H - m|"));
        report.metrics.emplace_back("exact_mass", m);
    }

    if (config.t_end < 50.0) {
        report.warnings.push_back("t_end < 50: mass limit, decay fit, asymptotics and rigidity skipped");
        return;
    }
    try {
        r.limit = mass_limit_estimate(ms);
        report.metrics.emplace_back("mass_limit", r.limit->value);
        checks.push_back({"mass_limit", r.limit->residual, 1e-3, r.limit->residual <= 1e-3, r.limit->note});
    } catch (const DiagnosticError& e) {
        checks.push_back({"mass_limit", std::numeric_limits<double>::quiet_NaN(), 1e-3, false, e.what()});
    }

    const bool exact = config.has_exact_solution();
    r.decay = exact ? decay_fit(ext, 10.0, 50.0) : decay_fit(ext, 10.0);
    if (r.decay->degenerate) {
        checks.push_back({"decay_slope", 0.0, -2.9, true, r.decay->note});
    } else if (exact) {
        checks.push_back({"decay_slope", r.decay->slope, 0.05, std::abs(r.decay->slope + 3.0) <= 0.05,
                          "slope must equal -3 within the threshold; " + r.decay->note});
    } else {
        checks.push_back({"decay_slope", r.decay->slope, -2.9, r.decay->slope <= -2.9, r.decay->note});
    }
    report.metrics.emplace_back("decay_slope", r.decay->slope);

    r.ah = ah_asymptotics_check(ext, flow);
    checks.push_back({"ah_asymptotics", r.ah->growth_slope, 0.25, r.ah->bounded, r.ah->note});
    report.metrics.emplace_back("ah_sup_scaled", r.ah->sup_scaled);

    if (r.limit) {
        r.rigidity = rigidity_diagnostics(ms, *r.limit);
        checks.push_back({"rigidity", r.rigidity->mass_gap, 1e-6, r.rigidity->consistent, r.rigidity->note});
        report.metrics.emplace_back("mass_gap", r.rigidity->mass_gap);
    }
}

void write_outputs(RunResult& r, const RunOptions& options) {
    const auto& config = r.report.config;
    if (options.output_root.empty() && config.controls.output_dir.empty()) {
        return;
    }
    const fs::path dir = config.controls.output_dir.empty() ? fs::path(options.output_root) / config.name
                                                             : fs::path(config.controls.output_dir);
    fs::create_directories(dir);
    auto& files = r.report.files;
    const std::string flow_csv = (dir / "flow.csv").string();
    r.flow->write_csv(flow_csv);
    files.push_back(flow_csv);
    if (r.extension) {
        const std::string lapse_csv = (dir / "lapse.csv").string();
        r.extension->write_csv(lapse_csv);
        files.push_back(lapse_csv);
        for (double t : config.output_times()) {
            if (t > r.extension->states().back().t) {
                break;
            }
            const std::string snap = (dir / snapshot_name(t)).string();
            r.extension->write_snapshot(snap, t, r.flow->grid());
            files.push_back(snap);
        }
    }
    if (r.envelope && r.masses) {
        const std::string master = (dir / "master.csv").string();
        write_master_csv(master, *r.extension, *r.envelope, *r.masses, r.phi);
        files.push_back(master);
    }
    const std::string summary = (dir / "summary.json").string();
    files.push_back(summary);
    std::ofstream out(summary);
    if (!out) {
        throw ConfigurationError("cannot write " + summary);
    }
    out << r.report.summary_json() << '\n';
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config, const RunOptions& options) {
    RunResult r;
    r.report.config = config;
    const SphereGrid grid = build_grid(config.grid_n);
    const RbarProfile Rbar = config.curvature_profile();
    r.report.warnings = Rbar.warnings();
    const ScalarField H = config.mean_curvature(grid);
    r.phi = initial_lapse(H);

    r.flow = std::make_shared<const FlowTrajectory>(evolve(config.initial_metric(grid), flow_controls(config)));
    flow_checks(r);

    r.report.K = compute_K(*r.flow, Rbar, config.t_end);
    r.report.admissibility = check_global_condition(r.phi, r.report.K.K);
    if (!r.report.admissibility.admissible && !config.admissibility_override) {
        r.report.status = RunReport::Status::rejected;
        r.report.message = "initial lapse violates the global-existence condition";
        write_outputs(r, options);
        return r;
    }
    if (!r.report.admissibility.admissible) {
        r.report.warnings.push_back("admissibility overridden: " + r.report.admissibility.message);
    }

    r.extension = integrate_extension(*r.flow, H, Rbar, extension_controls(config));
    if (r.extension->blowup()) {
        r.report.status = RunReport::Status::blowup;
        r.report.blowup = r.extension->blowup();
        r.report.message = r.report.blowup->message;
        write_outputs(r, options);
        return r;
    }
    lapse_checks(r, config, Rbar);
    write_outputs(r, options);
    return r;
}

std::vector<RunResult> run_scenarios(const std::vector<ScenarioConfig>& configs, const RunOptions& options,
                                     std::size_t workers) {
    std::vector<std::optional<RunResult>> slots(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                slots[i] = run_scenario(configs[i], options);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(configs.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t k = 1; k < workers; ++k) {
            pool.emplace_back(work);
        }
        work();
    }
    std::vector<RunResult> out;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        if (errors[i]) {
            std::rethrow_exception(errors[i]);
        }
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

std::string RefinementReport::table() const {
    std::ostringstream out;
    out << "oracle " << oracle << '\n';
    for (std::size_t i = 0; i < errors.size(); ++i) {
        out << "  n = " << grid_sizes[i];
        if (oracle == "richardson") {
            out << " vs " << grid_sizes[i + 1];
        }
        out << "  error " << std::setprecision(4) << std::scientific << errors[i] << std::defaultfloat;
        if (i > 0) {
            out << "  order " << std::setprecision(4) << orders[i - 1];
        }
        out << '\n';
    }
    out << "  min order " << std::setprecision(4) << min_order << (degenerate ? " (degenerate)" : "") << '\n';
    if (!note.empty()) {
        out << "  " << note << '\n';
    }
    return out.str();
}

RefinementReport run_refinement(const ScenarioConfig& config, std::size_t levels) {
    if (levels < 2) {
        throw ConfigurationError("refinement needs at least 2 levels");
    }
    const bool exact = config.has_exact_solution();
    if (!exact && levels < 3) {
        throw ConfigurationError("self-convergence needs at least 3 levels");
    }
    const RbarProfile Rbar = config.curvature_profile();

    struct Level {
        std::vector<double> t;
        std::vector<double> mean_u;
        std::vector<double> mass;
        double exact_error = 0.0;
    };
    std::vector<Level> runs;
    RefinementReport report;
    report.oracle = exact ? "exact" : "richardson";
    for (std::size_t i = 0; i < levels; ++i) {
        const std::size_t scale = std::size_t{1} << i;
        ScenarioConfig c = config;
        c.grid_n = config.grid_n * scale;
        c.controls.max_rel_change = config.controls.max_rel_change / static_cast<double>(scale);
        const SphereGrid grid = build_grid(c.grid_n);
        const FlowTrajectory flow = evolve(c.initial_metric(grid), flow_controls(c));
        const ExtensionTrajectory ext = integrate_extension(flow, c.mean_curvature(grid), Rbar, extension_controls(c));
        if (ext.blowup()) {
            throw BlowUpError(ext.blowup()->message, ext.blowup()->t, ext.blowup()->theta);
        }
        report.grid_sizes.push_back(c.grid_n);
        Level lv;
        for (const auto& s : ext.states()) {
            if (exact) {
                const double u = exact_lapse(config.exact_mass(), s.t);
                for (double v : s.u) {
                    lv.exact_error = std::max(lv.exact_error, std::abs(v - u));
                }
                continue;
            }
            const FlowState fs = flow.at(s.t);
            lv.t.push_back(s.t);
            lv.mean_u.push_back(integrate(fs.metric, s.u) / (4.0 * pi));
            lv.mass.push_back(hawking_mass_formula(s, fs));
        }
        runs.push_back(std::move(lv));
    }

    if (exact) {
        for (const auto& lv : runs) {
            report.errors.push_back(lv.exact_error);
        }
    } else {
        for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
            const auto& a = runs[i];
            const auto& b = runs[i + 1];
            double diff = 0.0;
            std::size_t j = 0;
            std::size_t matched = 0;
            for (std::size_t k = 0; k < a.t.size(); ++k) {
                while (j < b.t.size() && b.t[j] < a.t[k] * (1.0 - 1e-12)) {
                    ++j;
                }
                if (j < b.t.size() && std::abs(b.t[j] - a.t[k]) <= 1e-12 * a.t[k]) {
                    ++matched;
                    diff = std::max({diff, std::abs(a.mean_u[k] - b.mean_u[j]), std::abs(a.mass[k] - b.mass[j])});
                }
            }
            if (matched == 0) {
                throw DiagnosticError("refinement levels share no stored times");
            }
            report.errors.push_back(diff);
        }
    }

    const double floor = 1e-12;
    report.degenerate = *std::max_element(report.errors.begin(), report.errors.end()) < floor;
    report.min_order = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < report.errors.size(); ++i) {
        const double p = std::log2(report.errors[i] / report.errors[i + 1]);
        report.orders.push_back(p);
        report.min_order = std::min(report.min_order, p);
    }
    if (report.degenerate) {
        report.note = "errors at the rounding floor; observed order is not meaningful";
        report.min_order = 0.0;
    }
    return report;
}

std::string describe(const ScenarioConfig& config) {
    std::ostringstream out;
    const SphereGrid grid = build_grid(config.grid_n);
    const ScalarField H = config.mean_curvature(grid);
    const ScalarField phi = initial_lapse(H);
    const auto [h_lo, h_hi] = std::minmax_element(H.begin(), H.end());
    const auto [p_lo, p_hi] = std::minmax_element(phi.begin(), phi.end());
    out << "scenario " << config.name << '\n'
        << "  grid n = " << config.grid_n << ", t in [1, " << fmt(config.t_end) << "]\n"
        << "  initial metric: "
        << (config.initial.kind == ScenarioConfig::Initial::Kind::round
                ? std::string("round")
                : "perturbed, eps = " + fmt(config.initial.eps) + ", l = " + std::to_string(config.initial.l))
        << '\n'
        << "  H in [" << fmt(*h_lo) << ", " << fmt(*h_hi) << "], initial lapse in [" << fmt(*p_lo) << ", "
        << fmt(*p_hi) << "]\n"
        << "  Rbar: " << config.curvature_profile().describe() << '\n'
        << "  cfl_safety " << fmt(config.controls.cfl_safety) << ", dt_factor " << fmt(config.controls.dt_factor)
        << ", max_rel_change " << fmt(config.controls.max_rel_change) << '\n'
        << "  output times:";
    for (double t : config.output_times()) {
        out << ' ' << fmt(t);
    }
    out << '\n';
    if (config.has_exact_solution()) {
        const double m = config.exact_mass();
        out << "  closed form: AdS-Schwarzschild with m = " << fmt(m) << ", horizon t0 = " << fmt(horizon_t0(m))
            << '\n';
    }
    if (config.admissibility_override) {
        out << "  admissibility override set\n";
    }
    return out.str();
}

}  // namespace ahrf
