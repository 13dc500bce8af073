#pragma once

// volterra-lab <subcommand> [--config file.json] [--seed N] [--out file.csv]
//              [--threads N] [--allow-subcritical] [--<parameter> value ...]
//
// Exit codes: 0 success, 1 parameter error, 2 numerical failure.

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "volterra_lab/errors.hpp"
#include "volterra_lab/experiments.hpp"

namespace volterra_lab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitParameter = 1;
inline constexpr int kExitNumerical = 2;

inline std::string usage_text() {
    std::ostringstream os;
    os << "usage: volterra-lab <subcommand> [--config file.json] [--seed N] [--out file.csv] [--threads N]\n"
          "                    [--allow-subcritical] [--<parameter> value ...]\n\nsubcommands:";
    for (const auto& e : experiment_names()) os << ' ' << e;
    os << "\n\nparameters:\n";
    for (const auto& p : parameter_table()) {
        if (p.key == "seed" || p.key == "allow_subcritical") continue;
        os << "  --" << p.key << std::string(p.key.size() < 18 ? 18 - p.key.size() : 1, ' ') << p.help << '\n';
    }
    return os.str();
}

inline ExperimentConfig config_from_args(const std::vector<std::string>& args, bool* help_requested = nullptr) {
    CLI::App app{"volterra-lab", "volterra-lab"};
    app.set_help_flag();
    bool help = false;
    app.add_flag("-h,--help", help);
    std::string experiment, config_path, out, seed;
    std::size_t threads = 0;
    bool allow_subcritical = false;
    app.add_option("subcommand", experiment);
    app.add_option("--config", config_path);
    app.add_option("--seed", seed);
    app.add_option("--out", out);
    app.add_option("--threads", threads);
    app.add_flag("--allow-subcritical", allow_subcritical);
    std::map<std::string, std::string> raw;
    for (const auto& p : parameter_table())
        if (p.key != "seed" && p.key != "allow_subcritical") app.add_option("--" + p.key, raw[p.key]);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        throw ParameterError(std::string("command line: ") + e.what());
    }
    if (help) {
        if (help_requested) *help_requested = true;
        return {};
    }
    detail::require(!experiment.empty(), "missing subcommand");

    std::map<std::string, std::string> overrides;
    for (const auto& [key, value] : raw)
        if (app.count("--" + key)) overrides[key] = value;
    if (app.count("--seed")) overrides["seed"] = seed;
    if (allow_subcritical) overrides["allow_subcritical"] = "true";

    json file;
    const json* file_ptr = nullptr;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        detail::require(static_cast<bool>(in), "cannot open config file '" + config_path + "'");
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ParameterError("config file '" + config_path + "' is not valid JSON: " + e.what());
        }
        file_ptr = &file;
    }
    ExperimentConfig cfg = make_config(experiment, file_ptr, overrides);
    cfg.out = out;
    cfg.threads = threads;
    return cfg;
}

/// Full CLI: parse, run, write CSV. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (args.empty()) {
        err << usage_text();
        return kExitParameter;
    }
    try {
        bool help = false;
        const ExperimentConfig cfg = config_from_args(args, &help);
        if (help) {
            out << usage_text();
            return kExitOk;
        }
        const auto rows = run_experiment(cfg);
        std::ostringstream csv;
        write_csv(csv, rows);
        if (cfg.out.empty()) {
            out << csv.str();
        } else {
            std::ofstream f(cfg.out, std::ios::binary | std::ios::trunc);
            detail::require(static_cast<bool>(f), "cannot open output file '" + cfg.out + "'");
            f << csv.str();
            if (!f) throw std::runtime_error("failed to write '" + cfg.out + "'");
        }
        return kExitOk;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParameter;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParameter;
    } catch (const ConstructionError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParameter;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const UndefinedEstimate& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace volterra_lab
