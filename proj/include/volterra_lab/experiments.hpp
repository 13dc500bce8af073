#pragma once

// Experiment configuration, named presets and the runners behind each CLI
// subcommand. Runners return ReportRows; write_csv renders them with the
// frozen header.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "volterra_lab/det_volterra.hpp"
#include "volterra_lab/duality.hpp"
#include "volterra_lab/errors.hpp"
#include "volterra_lab/kernels.hpp"
#include "volterra_lab/monte_carlo.hpp"
#include "volterra_lab/noise.hpp"
#include "volterra_lab/regularity.hpp"
#include "volterra_lab/sie_solver.hpp"
#include "volterra_lab/yw_mollifiers.hpp"

namespace volterra_lab {

using json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr std::string_view kCsvHeader = "experiment,param_json,metric,value,stderr,pass";

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"simulate", "picard",         "duality-check",
                                                "moments-check", "holder",    "yw-check",
                                                "pathwise-probe", "smooth-probe", "sweep"};
    return names;
}

// ---------------------------------------------------------------------------
// Parameters

enum class ParamKind { Real, Count, Seed, Flag, Text, RealList };

struct ParamSpec {
    std::string key;
    ParamKind kind;
    std::string help;
};

inline const std::vector<ParamSpec>& parameter_table() {
    static const std::vector<ParamSpec> table{
        {"alpha", ParamKind::Real, "singular kernel exponent, (0, 0.5)"},
        {"gamma", ParamKind::Real, "Hölder exponent used by sigma=holder, (0, 1]"},
        {"theta", ParamKind::Real, "fractional heat kernel parameter, > 0"},
        {"x0", ParamKind::Real, "initial value"},
        {"t_end", ParamKind::Real, "time horizon, > 0"},
        {"n_steps", ParamKind::Count, "time steps"},
        {"n_paths", ParamKind::Count, "Monte Carlo paths"},
        {"n_rep", ParamKind::Count, "shared-noise replicates in probes"},
        {"seed", ParamKind::Seed, "master seed (unsigned 64-bit)"},
        {"tol", ParamKind::Real, "Picard tolerance, > 0"},
        {"max_iter", ParamKind::Count, "Picard iteration cap"},
        {"lambda", ParamKind::Real, "noise scale"},
        {"kernel", ParamKind::Text, "power | heat | smooth"},
        {"sigma", ParamKind::Text, "zero | one | linear | sqrt | holder | holder:<gamma>"},
        {"g", ParamKind::Text, "zero | const:<c>"},
        {"phi", ParamKind::Text, "zero | bump:[a,b] | unit_bump:[a,b]"},
        {"kappa", ParamKind::Text, "one | 2+sin | const:<c>"},
        {"n_max", ParamKind::Count, "largest mollifier index"},
        {"edge_fraction", ParamKind::Real, "mollifier cutoff edge, (0, 0.5)"},
        {"cutoff", ParamKind::Text, "mass | linear"},
        {"smoothstep", ParamKind::Text, "c1 | c2 | cinf"},
        {"rho", ParamKind::Text, "sqrt | sqrt_plus_linear:<c>"},
        {"grid_points", ParamKind::Count, "sample points per mollifier audit"},
        {"lag_min", ParamKind::Count, "smallest variogram lag"},
        {"lag_max", ParamKind::Count, "largest variogram lag (0: n_steps/16)"},
        {"alpha_grid", ParamKind::RealList, "sweep values of alpha"},
        {"gamma_grid", ParamKind::RealList, "sweep values of gamma"},
        {"halvings", ParamKind::Count, "dt-halvings in the smooth-kernel probe"},
        {"allowance", ParamKind::Real, "relative discretization allowance in duality-check"},
        {"allow_subcritical", ParamKind::Flag, "run probes below the gamma threshold"},
    };
    return table;
}

inline const ParamSpec* find_param(std::string_view key) {
    for (const auto& p : parameter_table())
        if (p.key == key) return &p;
    return nullptr;
}

inline json default_parameters(const std::string& experiment) {
    json p = {
        {"alpha", 0.25},          {"gamma", 1.0},
        {"theta", 2.0},           {"x0", 1.0},
        {"t_end", 1.0},           {"n_steps", 512},
        {"n_paths", 10000},       {"n_rep", 32},
        {"seed", 20240601},       {"tol", 1e-12},
        {"max_iter", 1000},       {"lambda", 1.0},
        {"kernel", "power"},      {"sigma", "linear"},
        {"g", "zero"},            {"phi", "unit_bump:[-1,1]"},
        {"kappa", "one"},         {"n_max", 8},
        {"edge_fraction", 0.1},   {"cutoff", "mass"},
        {"smoothstep", "c2"},     {"rho", "sqrt"},
        {"grid_points", 10000},   {"lag_min", 1},
        {"lag_max", 0},           {"alpha_grid", {0.1, 0.2, 0.3, 0.4}},
        {"gamma_grid", {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
        {"halvings", 3},          {"allowance", 0.01},
        {"allow_subcritical", false},
    };
    if (experiment == "simulate" || experiment == "picard") {
        p["n_paths"] = 1;
    } else if (experiment == "duality-check") {
        p["t_end"] = 0.5;
        p["n_paths"] = 100000;
        p["sigma"] = "sqrt";
    } else if (experiment == "moments-check") {
        // Short horizon: for sigma=linear the law of X^2 is so heavy-tailed at
        // t ~ 1 that sample standard errors are unreliable.
        p["t_end"] = 0.03;
        p["n_paths"] = 100000;
    } else if (experiment == "holder") {
        p["sigma"] = "one";
        p["x0"] = 0.0;
        p["n_steps"] = 4096;
        p["n_paths"] = 20;
    } else if (experiment == "smooth-probe") {
        p["kernel"] = "smooth";
        p["kappa"] = "2+sin";
        p["sigma"] = "sqrt";
        p["gamma"] = 0.5;
        p["n_steps"] = 128;
        p["n_rep"] = 16;
    } else if (experiment == "sweep") {
        p["n_steps"] = 128;
        p["n_rep"] = 4;
        p["sigma"] = "holder";
    }
    return p;
}

namespace detail {

inline double parse_real(std::string_view key, std::string_view text) {
    const std::string s(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == s.size() && used > 0, "parameter '" + std::string(key) + "' expects a number, got '" + s + "'");
    return v;
}

inline std::uint64_t parse_unsigned(std::string_view key, std::string_view text) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    require(ec == std::errc() && ptr == end && !text.empty(),
            "parameter '" + std::string(key) + "' expects an unsigned decimal integer, got '" + std::string(text) + "'");
    return v;
}

/// "lo:hi:count" (inclusive, evenly spaced) or "a,b,c".
inline std::vector<double> parse_real_list(std::string_view key, std::string_view text) {
    std::vector<double> out;
    const std::string s(text);
    if (std::count(s.begin(), s.end(), ':') == 2) {
        const auto c1 = s.find(':'), c2 = s.rfind(':');
        const double lo = parse_real(key, s.substr(0, c1));
        const double hi = parse_real(key, s.substr(c1 + 1, c2 - c1 - 1));
        const std::uint64_t n = parse_unsigned(key, s.substr(c2 + 1));
        require(n >= 1, "parameter '" + std::string(key) + "' needs at least one point");
        for (std::uint64_t i = 0; i < n; ++i)
            out.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
        return out;
    }
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto piece = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        out.push_back(parse_real(key, piece));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Converts a command-line string to the JSON value of the parameter's kind.
inline json param_from_text(const ParamSpec& spec, std::string_view text) {
    switch (spec.kind) {
        case ParamKind::Real: return parse_real(spec.key, text);
        case ParamKind::Count:
        case ParamKind::Seed: return parse_unsigned(spec.key, text);
        case ParamKind::Flag:
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw ParameterError("parameter '" + spec.key + "' expects true or false");
        case ParamKind::Text: return std::string(text);
        case ParamKind::RealList: return parse_real_list(spec.key, text);
    }
    return nullptr;
}

/// Type check of a value read from a JSON config.
inline json param_from_json(const ParamSpec& spec, const json& v) {
    const auto bad = [&spec](const char* what) {
        return ParameterError("parameter '" + spec.key + "' must be " + what);
    };
    switch (spec.kind) {
        case ParamKind::Real:
            if (!v.is_number()) throw bad("a number");
            return v.get<double>();
        case ParamKind::Count:
        case ParamKind::Seed:
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                throw bad("a non-negative integer");
            return v.get<std::uint64_t>();
        case ParamKind::Flag:
            if (!v.is_boolean()) throw bad("a boolean");
            return v;
        case ParamKind::Text:
            if (!v.is_string()) throw bad("a string");
            return v;
        case ParamKind::RealList:
            if (v.is_string()) return parse_real_list(spec.key, v.get<std::string>());
            if (!v.is_array() || v.empty()) throw bad("a non-empty array of numbers");
            for (const auto& x : v)
                if (!x.is_number()) throw bad("a non-empty array of numbers");
            return v.get<std::vector<double>>();
    }
    return nullptr;
}

}  // namespace detail

/// Parsed and validated experiment configuration.
struct ExperimentConfig {
    std::string experiment;
    json params;  // every parameter, with defaults filled in
    std::string out;
    std::size_t threads = 0;

    double real(const std::string& key) const { return params.at(key).get<double>(); }
    std::size_t count(const std::string& key) const { return params.at(key).get<std::size_t>(); }
    std::uint64_t seed() const { return params.at("seed").get<std::uint64_t>(); }
    std::string text(const std::string& key) const { return params.at(key).get<std::string>(); }
    bool flag(const std::string& key) const { return params.at(key).get<bool>(); }
    std::vector<double> list(const std::string& key) const { return params.at(key).get<std::vector<double>>(); }

    /// Parameter echo for CSV rows: output path and thread count are excluded
    /// so the CSV does not depend on them.
    std::string echo() const { return params.dump(); }
};

inline void validate_config(const ExperimentConfig& c) {
    using detail::require;
    const auto& names = experiment_names();
    require(std::find(names.begin(), names.end(), c.experiment) != names.end(),
            "unknown experiment '" + c.experiment + "'");
    const double alpha = c.real("alpha");
    require(alpha > 0.0 && alpha < 0.5, "alpha must lie in the open interval (0, 0.5), got " + std::to_string(alpha));
    const double gamma = c.real("gamma");
    require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1], got " + std::to_string(gamma));
    require(c.real("theta") > 0.0, "theta must be positive");
    require(std::isfinite(c.real("x0")), "x0 must be finite");
    require(c.real("t_end") > 0.0 && std::isfinite(c.real("t_end")), "t_end must be positive");
    require(c.count("n_steps") >= 4 && c.count("n_steps") <= (1u << 17), "n_steps must lie in [4, 131072]");
    require(c.count("n_paths") >= 1, "n_paths must be at least 1");
    require(c.count("n_rep") >= 1, "n_rep must be at least 1");
    require(c.real("tol") > 0.0, "tol must be positive");
    require(c.count("max_iter") >= 1, "max_iter must be at least 1");
    require(std::isfinite(c.real("lambda")), "lambda must be finite");
    require(c.count("n_max") >= 1 && c.count("n_max") <= kMaxMollifierIndex,
            "n_max must lie in [1, " + std::to_string(kMaxMollifierIndex) + "]");
    const double e = c.real("edge_fraction");
    require(e > 0.0 && e < 0.5, "edge_fraction must lie in (0, 0.5)");
    require(c.count("grid_points") >= 16, "grid_points must be at least 16");
    require(c.count("lag_min") >= 1, "lag_min must be at least 1");
    require(c.count("halvings") >= 1 && c.count("halvings") <= 6, "halvings must lie in [1, 6]");
    require(c.real("allowance") >= 0.0, "allowance must be non-negative");
    for (const char* key : {"alpha_grid", "gamma_grid"})
        require(!c.list(key).empty(), std::string(key) + " must not be empty");
    for (double a : c.list("alpha_grid"))
        require(a > 0.0 && a < 0.5, "alpha_grid values must lie in (0, 0.5)");
    for (double g : c.list("gamma_grid")) require(g > 0.0 && g <= 1.0, "gamma_grid values must lie in (0, 1]");
}

/// Builds a config from defaults, an optional JSON document, and overrides.
/// `overrides` holds raw command-line strings keyed by parameter name.
inline ExperimentConfig make_config(const std::string& experiment, const json* file,
                                    const std::map<std::string, std::string>& overrides) {
    ExperimentConfig c;
    c.experiment = experiment;
    c.params = default_parameters(experiment);
    if (file) {
        detail::require(file->is_object(), "config must be a JSON object");
        for (const auto& [key, value] : file->items())
            detail::require(key == "schema_version" || key == "experiment" || key == "parameters",
                            "unknown config key '" + key + "'");
        detail::require(file->contains("schema_version") && (*file)["schema_version"].is_number_integer() &&
                            (*file)["schema_version"].get<int>() == kConfigSchemaVersion,
                        "config schema_version must be " + std::to_string(kConfigSchemaVersion));
        if (file->contains("experiment")) {
            const auto& e = (*file)["experiment"];
            detail::require(e.is_string() && e.get<std::string>() == experiment,
                            "config experiment does not match the subcommand '" + experiment + "'");
        }
        if (file->contains("parameters")) {
            const auto& p = (*file)["parameters"];
            detail::require(p.is_object(), "config parameters must be an object");
            for (const auto& [key, value] : p.items()) {
                const ParamSpec* spec = find_param(key);
                detail::require(spec != nullptr, "unknown parameter '" + key + "'");
                c.params[key] = detail::param_from_json(*spec, value);
            }
        }
    }
    for (const auto& [key, text] : overrides) {
        const ParamSpec* spec = find_param(key);
        detail::require(spec != nullptr, "unknown parameter '" + key + "'");
        c.params[key] = detail::param_from_text(*spec, text);
    }
    validate_config(c);
    return c;
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

/// "[a,b]" -> (a, b)
inline std::pair<double, double> parse_interval(std::string_view key, std::string_view text) {
    require(text.size() >= 5 && text.front() == '[' && text.back() == ']',
            "expected an interval [a,b] in '" + std::string(key) + "'");
    const auto inner = text.substr(1, text.size() - 2);
    const auto comma = inner.find(',');
    require(comma != std::string_view::npos, "expected an interval [a,b] in '" + std::string(key) + "'");
    return {parse_real(key, inner.substr(0, comma)), parse_real(key, inner.substr(comma + 1))};
}

}  // namespace detail

/// sigma presets. "holder" alone takes γ from `gamma`; |x|^γ never exceeds
/// the growth cap 1 + |x| for γ <= 1.
inline DiffusionCoefficient sigma_preset(const std::string& name, double gamma) {
    if (name == "zero") return {[](double) { return 0.0; }, 1.0, 1.0, 1.0, "zero"};
    if (name == "one") return {[](double) { return 1.0; }, 1.0, 1.0, 1.0, "one"};
    if (name == "linear") return {[](double x) { return x; }, 1.0, 1.0, 1.0, "linear"};
    if (name == "sqrt") return detail::sqrt_positive_part();
    if (name == "holder" || detail::starts_with(name, "holder:")) {
        const double g = name == "holder" ? gamma : detail::parse_real("sigma", name.substr(7));
        detail::require(g > 0.0 && g <= 1.0, "sigma=holder:<gamma> needs gamma in (0, 1]");
        return {[g](double x) { return std::min(std::pow(std::abs(x), g), 1.0 + std::abs(x)); }, g, 1.0, 1.0,
                "holder:" + std::to_string(g)};
    }
    throw ParameterError("unknown sigma preset '" + name + "' (zero | one | linear | sqrt | holder[:gamma])");
}

/// g presets; an empty function means g ≡ 0.
inline std::function<double(double)> g_preset(const std::string& name) {
    if (name == "zero") return {};
    if (detail::starts_with(name, "const:")) {
        const double c = detail::parse_real("g", name.substr(6));
        detail::require(std::isfinite(c), "g=const:<c> needs a finite constant");
        return [c](double) { return c; };
    }
    throw ParameterError("unknown g preset '" + name + "' (zero | const:<c>)");
}

inline TestFunction phi_preset(const std::string& name) {
    if (name == "zero") return TestFunction::zero();
    if (detail::starts_with(name, "bump:")) {
        const auto [a, b] = detail::parse_interval("phi", std::string_view(name).substr(5));
        return TestFunction::bump(a, b);
    }
    if (detail::starts_with(name, "unit_bump:")) {
        const auto [a, b] = detail::parse_interval("phi", std::string_view(name).substr(10));
        return TestFunction::unit_bump(a, b);
    }
    throw ParameterError("unknown phi preset '" + name + "' (zero | bump:[a,b] | unit_bump:[a,b])");
}

inline SmoothKernel kappa_preset(const std::string& name) {
    if (name == "one") return {[](double, double) { return 1.0; }, 1.0, 0.0};
    if (name == "2+sin") return {[](double s, double t) { return 2.0 + std::sin(s + t); }, 1.0, 1.0};
    if (detail::starts_with(name, "const:")) {
        const double c = detail::parse_real("kappa", name.substr(6));
        detail::require(c > 0.0, "kappa=const:<c> needs c > 0");
        return {[c](double, double) { return c; }, c, 0.0};
    }
    throw ParameterError("unknown kappa preset '" + name + "' (one | 2+sin | const:<c>)");
}

inline Rho rho_preset(const std::string& name) {
    if (name == "sqrt") return Rho::sqrt();
    if (detail::starts_with(name, "sqrt_plus_linear:")) {
        const double c = detail::parse_real("rho", name.substr(17));
        detail::require(c >= 0.0, "rho=sqrt_plus_linear:<c> needs c >= 0");
        return {[c](double x) { return std::sqrt(x) + c * x; }, false, name};
    }
    throw ParameterError("unknown rho preset '" + name + "' (sqrt | sqrt_plus_linear:<c>)");
}

inline KernelSpec kernel_from_config(const ExperimentConfig& c) {
    const std::string k = c.text("kernel");
    if (k == "power") return SingularPower{c.real("alpha")};
    if (k == "heat") return FractionalHeat{c.real("theta")};
    if (k == "smooth") return kappa_preset(c.text("kappa"));
    throw ParameterError("unknown kernel '" + k + "' (power | heat | smooth)");
}

inline SieProblem problem_from_config(const ExperimentConfig& c) {
    SieProblem p;
    p.kernel = kernel_from_config(c);
    p.sigma = sigma_preset(c.text("sigma"), c.real("gamma"));
    p.x0 = c.real("x0");
    p.g_forcing = g_preset(c.text("g"));
    p.lambda_scale = c.real("lambda");
    p.label = c.experiment;
    return p;
}

inline TimeGrid grid_from_config(const ExperimentConfig& c) { return {c.real("t_end"), c.count("n_steps")}; }

// ---------------------------------------------------------------------------
// Rows and CSV

struct ReportRow {
    std::string experiment;
    std::string param_json;
    std::string metric;
    double value = 0.0;
    std::optional<double> stderr_value;
    std::optional<bool> pass;
};

namespace detail {

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + '"';
}

}  // namespace detail

inline void write_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << detail::csv_field(r.experiment) << ',' << detail::csv_field(r.param_json) << ','
           << detail::csv_field(r.metric) << ',' << detail::format_real(r.value) << ','
           << (r.stderr_value ? detail::format_real(*r.stderr_value) : "") << ','
           << (r.pass ? (*r.pass ? "true" : "false") : "") << '\n';
    }
}

/// Collects rows for one experiment with a shared parameter echo.
class RowSink {
public:
    explicit RowSink(const ExperimentConfig& c) : experiment_(c.experiment), echo_(c.echo()) {}

    void add(std::string metric, double value, std::optional<double> se = std::nullopt,
             std::optional<bool> pass = std::nullopt) {
        rows_.push_back({experiment_, echo_, std::move(metric), value, se, pass});
    }

    void add_with_params(const json& params, std::string metric, double value,
                         std::optional<bool> pass = std::nullopt) {
        rows_.push_back({experiment_, params.dump(), std::move(metric), value, std::nullopt, pass});
    }

    std::vector<ReportRow> take() { return std::move(rows_); }

private:
    std::string experiment_;
    std::string echo_;
    std::vector<ReportRow> rows_;
};

inline std::string at_time(const char* metric, double t) {
    return std::string(metric) + "(t=" + detail::format_real(t) + ")";
}

// ---------------------------------------------------------------------------
// Runners

/// Refuses parameters below the pathwise-uniqueness threshold unless allowed.
inline void check_threshold(const ExperimentConfig& c, const SieProblem& p) {
    if (c.flag("allow_subcritical")) return;
    if (const auto alpha = kernel_alpha(p.kernel)) {
        const double thr = gamma_threshold(*alpha);
        detail::require(p.sigma.gamma > thr, "sigma's gamma = " + std::to_string(p.sigma.gamma) +
                                                 " does not exceed the threshold 1/(2(1-alpha)) = " +
                                                 std::to_string(thr) + "; pass --allow-subcritical to run anyway");
    } else {
        detail::require(p.sigma.gamma >= 0.5, "smooth kernels require gamma >= 1/2; pass --allow-subcritical");
    }
}

/// One Euler path (master seed, index 0); with n_paths > 1 also the mean and
/// variance of X(t_end).
inline std::vector<ReportRow> run_simulate(const ExperimentConfig& c) {
    RowSink rows(c);
    const SieProblem problem = problem_from_config(c);
    const TimeGrid grid = grid_from_config(c);
    const SieSolver solver(problem, grid);
    const auto x = solver.euler(sample_brownian_increments(grid, derive_path_seed(c.seed(), 0)));
    for (std::size_t k = 0; k <= grid.n_steps; ++k) rows.add(at_time("X", grid.node(k)), x.values[k]);
    const std::size_t n_paths = c.count("n_paths");
    if (n_paths > 1) {
        const auto stats = mc::block_reduce<mc::MomentStats>(
            n_paths, c.threads, [] { return mc::MomentStats{}; },
            [&](mc::MomentStats& s, std::size_t i) {
                const auto p = solver.euler(sample_brownian_increments(grid, derive_path_seed(c.seed(), i)));
                s.add(p.values.back());
            });
        rows.add("mean_X_T", stats.mean, stats.stderr_mean());
        rows.add("var_X_T", stats.variance());
    }
    return rows.take();
}

inline std::vector<ReportRow> run_picard(const ExperimentConfig& c) {
    RowSink rows(c);
    const SieProblem problem = problem_from_config(c);
    const TimeGrid grid = grid_from_config(c);
    const SieSolver solver(problem, grid);
    const auto path = sample_brownian_increments(grid, derive_path_seed(c.seed(), 0));
    const auto r = solver.picard(path, c.count("max_iter"), c.real("tol"));
    for (std::size_t i = 0; i < r.sup_gaps.size(); ++i)
        rows.add("sup_gap[" + std::to_string(i + 1) + "]", r.sup_gaps[i]);
    rows.add("n_iterations", static_cast<double>(r.n_iterations), std::nullopt, r.converged);
    rows.add("heuristic_fixed_point", r.heuristic ? 1.0 : 0.0);
    const auto e = solver.euler(path);
    double diff = 0.0;
    for (std::size_t k = 0; k <= grid.n_steps; ++k) diff = std::max(diff, std::abs(e.values[k] - r.final.values[k]));
    rows.add("euler_picard_sup_diff", diff);
    return rows.take();
}

inline DualityConfig duality_from_config(const ExperimentConfig& c) {
    DualityConfig d;
    d.theta = c.real("theta");
    d.x0 = c.real("x0");
    d.g = g_preset(c.text("g"));
    d.phi = phi_preset(c.text("phi"));
    d.grid = grid_from_config(c);
    d.n_paths = c.count("n_paths");
    d.master_seed = c.seed();
    d.threads = c.threads;
    d.discretization_allowance = c.real("allowance");
    return d;
}

inline std::vector<ReportRow> run_duality_check(const ExperimentConfig& c) {
    RowSink rows(c);
    const DualityReport r = duality_report(duality_from_config(c));
    rows.add("lhs_mean", r.lhs_mean, r.lhs_stderr);
    rows.add("rhs", r.rhs);
    rows.add("gap", r.gap, std::nullopt, r.pass);
    rows.add("tolerance", r.tolerance);
    rows.add("z_score", r.z_score);
    rows.add("clamp_fraction", r.clamp_fraction, std::nullopt, r.clamp_fraction < 0.01);
    rows.add("excluded_paths", static_cast<double>(r.excluded));
    return rows.take();
}


namespace detail {

struct StatsVector {
    std::vector<mc::MomentStats> s;
    void merge(const StatsVector& o) {
        for (std::size_t i = 0; i < s.size(); ++i) s[i].merge(o.s[i]);
    }
};

/// Accumulator for drivers that write per-item results by index.
struct NoReduction {
    void merge(const NoReduction&) {}
};

inline double kernel_noise_factor(const SieProblem& p) {
    const double scale = std::holds_alternative<FractionalHeat>(p.kernel)
                             ? c_theta(std::get<FractionalHeat>(p.kernel).theta)
                             : 1.0;
    return p.lambda_scale * p.lambda_scale * scale * scale;
}

}  // namespace detail

/// Monte Carlo second moments at eight checkpoints against the available
/// oracle: Var X = ∫ k² for sigma=one, the linear moment equation for
/// sigma=linear, none otherwise (E X² and E X⁴ are reported).
inline std::vector<ReportRow> run_moments_check(const ExperimentConfig& c) {
    RowSink rows(c);
    const SieProblem problem = problem_from_config(c);
    const TimeGrid grid = grid_from_config(c);
    const SieSolver solver(problem, grid);
    const std::string sigma = c.text("sigma");
    const auto alpha = kernel_alpha(problem.kernel);
    const auto& h = solver.forcing();

    constexpr std::size_t n_check = 8;
    std::vector<std::size_t> ks;
    for (std::size_t j = 1; j <= n_check; ++j) ks.push_back(std::max<std::size_t>(1, grid.n_steps * j / n_check));

    auto acc = mc::block_reduce<detail::StatsVector>(
        c.count("n_paths"), c.threads, [&] { return detail::StatsVector{std::vector<mc::MomentStats>(2 * n_check)}; },
        [&](detail::StatsVector& a, std::size_t i) {
            const auto x = solver.euler(sample_brownian_increments(grid, derive_path_seed(c.seed(), i)));
            for (std::size_t j = 0; j < n_check; ++j) {
                const double v = x.values[ks[j]];
                const double z = sigma == "one" ? v - h[ks[j]] : v;
                a.s[j].add(z * z);
                a.s[n_check + j].add(z * z * z * z);
            }
        });

    if (sigma == "one" && alpha) {
        const double factor = detail::kernel_noise_factor(problem);
        for (std::size_t j = 0; j < n_check; ++j) {
            const double t = grid.node(ks[j]);
            const double oracle = factor * kernel_l2_partial(*alpha, t, 0.0, t);
            const auto& s = acc.s[j];
            rows.add(at_time("Var[X]", t), s.mean, s.stderr_mean(),
                     std::abs(s.mean - oracle) <= 3.0 * s.stderr_mean());
            rows.add(at_time("oracle_Var[X]", t), oracle);
        }
    } else if (sigma == "linear" && alpha) {
        const MomentOracle m = solve_linear_moment(problem, grid);
        for (std::size_t j = 0; j < n_check; ++j) {
            const double t = grid.node(ks[j]);
            const auto& s = acc.s[j];
            rows.add(at_time("E[X^2]", t), s.mean, s.stderr_mean(),
                     std::abs(s.mean - m.m[ks[j]]) <= 3.0 * s.stderr_mean());
            rows.add(at_time("oracle_E[X^2]", t), m.m[ks[j]]);
        }
        const TimeGrid fine_grid(grid.t_end, 2 * grid.n_steps);
        for (const auto& [scheme, name] : {std::pair{MomentScheme::LeftPoint, "left_point"},
                                           std::pair{MomentScheme::ProductTrapezoid, "product_trapezoid"}}) {
            const double coarse = solve_linear_moment(problem, grid, scheme).m.back();
            const double fine = solve_linear_moment(problem, fine_grid, scheme).m.back();
            const double rel = std::abs(fine - coarse) / std::abs(fine);
            rows.add(std::string("oracle_self_convergence_rel_diff(scheme=") + name + ")", rel, std::nullopt,
                     rel < 0.01);
        }
    } else {
        for (std::size_t j = 0; j < n_check; ++j) {
            const double t = grid.node(ks[j]);
            rows.add(at_time("E[X^2]", t), acc.s[j].mean, acc.s[j].stderr_mean());
            rows.add(at_time("E[X^4]", t), acc.s[n_check + j].mean, acc.s[n_check + j].stderr_mean());
        }
    }
    return rows.take();
}

/// Pooled variogram of Z = X - h over n_paths paths, its Hölder fit, and the
/// p = 2, 4 increment-moment exponents.
inline std::vector<ReportRow> run_holder(const ExperimentConfig& c) {
    RowSink rows(c);
    const SieProblem problem = problem_from_config(c);
    const TimeGrid grid = grid_from_config(c);
    const SieSolver solver(problem, grid);
    const std::size_t lag_max = c.count("lag_max") ? c.count("lag_max") : grid.n_steps / 16;
    detail::require(lag_max <= grid.n_steps / 4, "lag_max must not exceed n_steps / 4");
    const auto lags = geometric_lags(c.count("lag_min"), lag_max);
    const auto& h = solver.forcing();

    auto acc = mc::block_reduce<detail::StatsVector>(
        c.count("n_paths"), c.threads, [&] { return detail::StatsVector{std::vector<mc::MomentStats>(lags.size())}; },
        [&](detail::StatsVector& a, std::size_t i) {
            auto x = solver.euler(sample_brownian_increments(grid, derive_path_seed(c.seed(), i)));
            for (std::size_t k = 0; k <= grid.n_steps; ++k) x.values[k] -= h[k];
            const auto v = variogram(x.values, lags);
            for (std::size_t j = 0; j < lags.size(); ++j) a.s[j].add(v[j]);
        });
    std::vector<double> pooled;
    for (const auto& s : acc.s) pooled.push_back(s.mean);
    const HolderEstimate est = fit_holder(lags, pooled, grid.dt());
    for (std::size_t j = 0; j < lags.size(); ++j) {
        const std::string lag = "(lag=" + std::to_string(lags[j]) + ")";
        rows.add("variogram" + lag, pooled[j], acc.s[j].stderr_mean());
        rows.add("fit_residual" + lag, est.residuals[j]);
    }
    const auto alpha = kernel_alpha(problem.kernel);
    std::optional<bool> pass;
    if (alpha && c.text("sigma") == "one") pass = std::abs(est.exponent - (0.5 - *alpha)) < 0.05;
    rows.add("holder_exponent", est.exponent, std::nullopt, pass);
    if (alpha) rows.add("holder_exponent_theory", 0.5 - *alpha);
    rows.add("r_squared", est.r_squared);
    rows.add("boundary", est.boundary ? 1.0 : 0.0);
    if (alpha) {
        for (int p : {2, 4}) {
            const auto fit = moment_increment_check(problem, p, std::max<std::size_t>(2, c.count("n_paths")), c.seed(),
                                                    grid, c.threads);
            const std::string tag = "(p=" + std::to_string(p) + ")";
            rows.add("increment_exponent" + tag, fit.exponent, std::nullopt, fit.pass);
            rows.add("increment_exponent_required" + tag, fit.required);
            rows.add("increment_degenerate" + tag, fit.degenerate ? 1.0 : 0.0);
        }
    }
    return rows.take();
}

inline MollifierOptions mollifier_options_from_config(const ExperimentConfig& c) {
    MollifierOptions o;
    o.edge_fraction = c.real("edge_fraction");
    const std::string cut = c.text("cutoff");
    if (cut == "mass") o.scale = CutoffScale::Mass;
    else if (cut == "linear") o.scale = CutoffScale::Linear;
    else throw ParameterError("unknown cutoff '" + cut + "' (mass | linear)");
    const std::string st = c.text("smoothstep");
    if (st == "c1") o.order = SmoothstepOrder::C1;
    else if (st == "c2") o.order = SmoothstepOrder::C2;
    else if (st == "cinf") o.order = SmoothstepOrder::Cinf;
    else throw ParameterError("unknown smoothstep '" + st + "' (c1 | c2 | cinf)");
    return o;
}

inline std::vector<ReportRow> run_yw_check(const ExperimentConfig& c) {
    RowSink rows(c);
    const std::size_t n_max = c.count("n_max");
    const MollifierFamily family(n_max, rho_preset(c.text("rho")), mollifier_options_from_config(c));
    for (std::size_t n = 0; n <= n_max; ++n) rows.add("a(n=" + std::to_string(n) + ")", family.a()[n]);
    for (std::size_t n = 1; n <= n_max; ++n)
        rows.add("normalizer(n=" + std::to_string(n) + ")", family.normalizer(n));
    const PropertyReport report = verify_family(family, n_max, c.count("grid_points"));
    for (const auto& chk : report.checks) {
        const std::string tag = chk.property + "(n=" + std::to_string(chk.n) + ")";
        rows.add(tag, chk.measured, std::nullopt, chk.pass);
        rows.add(tag + ":bound", chk.bound);
    }
    rows.add("all_properties", report.all_pass() ? 1.0 : 0.0, std::nullopt, report.all_pass());
    return rows.take();
}

namespace detail {

inline double sup_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

/// sup over coarse nodes k of |coarse[k] - fine[k * factor]|.
inline double sup_diff_common(std::span<const double> coarse, std::span<const double> fine, std::size_t factor) {
    double d = 0.0;
    for (std::size_t k = 0; k < coarse.size(); ++k) d = std::max(d, std::abs(coarse[k] - fine[k * factor]));
    return d;
}

struct TwoInitResult {
    double gap = 0.0;
    bool converged = true;
    bool heuristic = false;
};

/// Picard from h and from h + 1 on one path; sup-norm gap of the final iterates.
inline TwoInitResult two_init_gap(const SieSolver& solver, const BrownianPath& path, std::size_t max_iter,
                                  double tol) {
    std::vector<double> shifted = solver.forcing();
    for (double& v : shifted) v += 1.0;
    const auto a = solver.picard(path, max_iter, tol);
    const auto b = solver.picard(path, max_iter, tol, &shifted);
    return {sup_diff(a.final.values, b.final.values), a.converged && b.converged, a.heuristic};
}

}  // namespace detail

/// Shared-noise probe: per replicate, the Picard two-initialization gap on the
/// n-step grid and the Euler gap between n and 2n steps on the same path.
inline std::vector<ReportRow> run_pathwise_probe(const ExperimentConfig& c) {
    RowSink rows(c);
    const SieProblem problem = problem_from_config(c);
    check_threshold(c, problem);
    const TimeGrid grid = grid_from_config(c);
    const TimeGrid fine_grid(grid.t_end, 2 * grid.n_steps);
    const SieSolver solver(problem, grid);
    const SieSolver fine_solver(problem, fine_grid);
    const std::size_t n_rep = c.count("n_rep");
    const double tol = c.real("tol");

    std::vector<detail::TwoInitResult> two(n_rep);
    std::vector<double> refine(n_rep);
    mc::block_reduce<detail::NoReduction>(
        n_rep, c.threads, [] { return detail::NoReduction{}; },
        [&](detail::NoReduction&, std::size_t r) {
            const auto fine = sample_brownian_increments(fine_grid, derive_path_seed(c.seed(), r));
            const auto coarse = coarsen(fine, 2);
            two[r] = detail::two_init_gap(solver, coarse, c.count("max_iter"), tol);
            refine[r] = detail::sup_diff_common(solver.euler(coarse).values, fine_solver.euler(fine).values, 2);
        },
        1);

    double gap_max = 0.0;
    bool converged = true;
    mc::MomentStats ref;
    for (std::size_t r = 0; r < n_rep; ++r) {
        rows.add("picard_gap(rep=" + std::to_string(r) + ")", two[r].gap);
        rows.add("refinement_gap(rep=" + std::to_string(r) + ")", refine[r]);
        gap_max = std::max(gap_max, two[r].gap);
        converged = converged && two[r].converged;
        ref.add(refine[r]);
    }
    rows.add("picard_gap_max", gap_max, std::nullopt, gap_max < 10.0 * tol);
    rows.add("picard_all_converged", converged ? 1.0 : 0.0, std::nullopt, converged);
    rows.add("heuristic_fixed_point", problem.sigma.gamma < 1.0 ? 1.0 : 0.0);
    rows.add("refinement_gap_mean", ref.mean, ref.stderr_mean());
    return rows.take();
}

struct SmoothProbeLevel {
    std::size_t n_steps = 0;
    double two_init_gap_max = 0.0;
    double refinement_gap_mean = 0.0;  // against the next finer level
    double refinement_gap_stderr = 0.0;
};

struct SmoothProbeResult {
    std::vector<SmoothProbeLevel> levels;
    double control_gap_max = 0.0;  // Lipschitz σ(x) = x on the coarsest grid
    bool trend_ok = false;         // refinement gaps decrease or stay within 2 stderr
    bool converged = true;
};

/// Core of smooth-probe; `levels` = halvings + 1 grids n, 2n, ..., all driven
/// by the same Brownian path per replicate.
inline SmoothProbeResult smooth_kernel_probe(const SieProblem& problem, const TimeGrid& base, std::size_t halvings,
                                             std::size_t n_rep, std::uint64_t seed, std::size_t max_iter, double tol,
                                             std::size_t threads) {
    detail::require(halvings >= 1, "at least one halving is required");
    const std::size_t finest = base.n_steps << halvings;
    const TimeGrid finest_grid(base.t_end, finest);
    std::vector<SieSolver> solvers;
    for (std::size_t j = 0; j <= halvings; ++j) solvers.emplace_back(problem, TimeGrid(base.t_end, base.n_steps << j));
    SieProblem control = problem;
    control.sigma = sigma_preset("linear", 1.0);
    const SieSolver control_solver(control, base);

    const std::size_t n_levels = halvings + 1;
    std::vector<std::vector<double>> gap(n_rep, std::vector<double>(n_levels));
    std::vector<std::vector<double>> ref(n_rep, std::vector<double>(halvings));
    std::vector<double> control_gap(n_rep);
    std::vector<char> conv(n_rep, 1);
    mc::block_reduce<detail::NoReduction>(
        n_rep, threads, [] { return detail::NoReduction{}; },
        [&](detail::NoReduction&, std::size_t r) {
            const auto path = sample_brownian_increments(finest_grid, derive_path_seed(seed, r));
            std::vector<std::vector<double>> euler(n_levels);
            for (std::size_t j = 0; j < n_levels; ++j) {
                const auto p = coarsen(path, std::size_t{1} << (halvings - j));
                const auto t = detail::two_init_gap(solvers[j], p, max_iter, tol);
                gap[r][j] = t.gap;
                conv[r] = conv[r] && t.converged;
                euler[j] = solvers[j].euler(p).values;
                if (j == 0) control_gap[r] = detail::two_init_gap(control_solver, p, max_iter, tol).gap;
            }
            for (std::size_t j = 0; j < halvings; ++j) ref[r][j] = detail::sup_diff_common(euler[j], euler[j + 1], 2);
        },
        1);

    SmoothProbeResult out;
    for (std::size_t j = 0; j < n_levels; ++j) {
        SmoothProbeLevel lv;
        lv.n_steps = base.n_steps << j;
        mc::MomentStats rs;
        for (std::size_t r = 0; r < n_rep; ++r) {
            lv.two_init_gap_max = std::max(lv.two_init_gap_max, gap[r][j]);
            if (j < halvings) rs.add(ref[r][j]);
        }
        lv.refinement_gap_mean = rs.mean;
        lv.refinement_gap_stderr = rs.stderr_mean();
        out.levels.push_back(lv);
    }
    for (double g : control_gap) out.control_gap_max = std::max(out.control_gap_max, g);
    for (char ok : conv) out.converged = out.converged && ok;
    out.trend_ok = true;
    for (std::size_t j = 1; j < halvings; ++j) {
        const auto& a = out.levels[j - 1];
        const auto& b = out.levels[j];
        if (b.refinement_gap_mean > a.refinement_gap_mean + 2.0 * (a.refinement_gap_stderr + b.refinement_gap_stderr))
            out.trend_ok = false;
    }
    return out;
}

inline std::vector<ReportRow> run_smooth_probe(const ExperimentConfig& c) {
    RowSink rows(c);
    const SieProblem problem = problem_from_config(c);
    check_threshold(c, problem);
    const double tol = c.real("tol");
    const std::size_t halvings = c.count("halvings");
    const auto r = smooth_kernel_probe(problem, grid_from_config(c), halvings, c.count("n_rep"), c.seed(),
                                       c.count("max_iter"), tol, c.threads);
    for (std::size_t j = 0; j < r.levels.size(); ++j) {
        const auto& lv = r.levels[j];
        const std::string tag = "(n=" + std::to_string(lv.n_steps) + ")";
        rows.add("two_init_gap_max" + tag, lv.two_init_gap_max, std::nullopt, lv.two_init_gap_max < 10.0 * tol);
        if (j < halvings)
            rows.add("refinement_gap_mean" + tag, lv.refinement_gap_mean, lv.refinement_gap_stderr);
    }
    rows.add("refinement_trend", r.trend_ok ? 1.0 : 0.0, std::nullopt, r.trend_ok);
    rows.add("control_two_init_gap_max", r.control_gap_max, std::nullopt, r.control_gap_max < 10.0 * tol);
    rows.add("picard_all_converged", r.converged ? 1.0 : 0.0, std::nullopt, r.converged);
    return rows.take();
}

/// One row per (alpha, gamma) cell: Picard two-initialization gap max, the ξ
/// window (or SUBCRITICAL), and the Hölder exponent of one sample path.
inline std::vector<ReportRow> run_sweep(const ExperimentConfig& c) {
    RowSink rows(c);
    const auto alphas = c.list("alpha_grid");
    const auto gammas = c.list("gamma_grid");
    const TimeGrid grid = grid_from_config(c);
    const std::size_t n_rep = c.count("n_rep");
    const double tol = c.real("tol");
    const std::size_t n_cells = alphas.size() * gammas.size();

    struct Cell {
        double gap = 0.0;
        double holder = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<Cell> cells(n_cells);
    mc::block_reduce<detail::NoReduction>(
        n_cells, c.threads, [] { return detail::NoReduction{}; },
        [&](detail::NoReduction&, std::size_t idx) {
            SieProblem p;
            p.kernel = SingularPower{alphas[idx / gammas.size()]};
            p.sigma = sigma_preset("holder", gammas[idx % gammas.size()]);
            p.x0 = c.real("x0");
            p.g_forcing = g_preset(c.text("g"));
            p.lambda_scale = c.real("lambda");
            p.label = "sweep";
            const SieSolver solver(p, grid);
            for (std::size_t r = 0; r < n_rep; ++r) {
                const auto path = sample_brownian_increments(grid, derive_path_seed(c.seed(), r));
                cells[idx].gap = std::max(cells[idx].gap, detail::two_init_gap(solver, path, c.count("max_iter"), tol).gap);
                if (r == 0) {
                    auto x = solver.euler(path);
                    for (std::size_t k = 0; k <= grid.n_steps; ++k) x.values[k] -= solver.forcing()[k];
                    try {
                        cells[idx].holder = holder_estimate(x.values, grid, 1, grid.n_steps / 4).exponent;
                    } catch (const UndefinedEstimate&) {
                    }
                }
            }
        },
        1);

    for (std::size_t idx = 0; idx < n_cells; ++idx) {
        const double a = alphas[idx / gammas.size()];
        const double g = gammas[idx % gammas.size()];
        json pj = c.params;
        pj["alpha"] = a;
        pj["gamma"] = g;
        pj["threshold"] = gamma_threshold(a);
        pj["holder_exponent"] = std::isnan(cells[idx].holder) ? json(nullptr) : json(cells[idx].holder);
        const bool super = g > gamma_threshold(a);
        if (super) {
            const auto [lo, hi] = xi_admissible_range(a, g);
            pj["xi_lower"] = lo;
            pj["xi_upper"] = hi;
            rows.add_with_params(pj, "pathwise_gap_max", cells[idx].gap, cells[idx].gap < 10.0 * tol);
        } else {
            pj["xi_lower"] = nullptr;
            pj["xi_upper"] = nullptr;
            rows.add_with_params(pj, "pathwise_gap_max:SUBCRITICAL", cells[idx].gap);
        }
    }
    return rows.take();
}

inline std::vector<ReportRow> run_experiment(const ExperimentConfig& c) {
    const std::string& e = c.experiment;
    if (e == "simulate") return run_simulate(c);
    if (e == "picard") return run_picard(c);
    if (e == "duality-check") return run_duality_check(c);
    if (e == "moments-check") return run_moments_check(c);
    if (e == "holder") return run_holder(c);
    if (e == "yw-check") return run_yw_check(c);
    if (e == "pathwise-probe") return run_pathwise_probe(c);
    if (e == "smooth-probe") return run_smooth_probe(c);
    if (e == "sweep") return run_sweep(c);
    throw ParameterError("unknown experiment '" + e + "'");
}

}  // namespace volterra_lab
