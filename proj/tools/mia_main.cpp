#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mia/config.hpp"
#include "mia/error.hpp"
#include "mia/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string sigma;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
    auto* opt = cmd->add_option("--config", flags.config_path,
                                "run configuration JSON");
    if (config_required) opt->required();
    cmd->add_option("--out", flags.out_dir, "output directory override");
    cmd->add_option("--sigma", flags.sigma,
                    "noise scale override: a number or \"auto\"");
    cmd->add_option("--seed", flags.seed, "master seed override")
        ->each([&flags](const std::string&) { flags.seed_given = true; });
}

mia::RunConfig resolve_config(const CommonFlags& flags) {
    mia::RunConfig cfg = mia::load_run_config(flags.config_path);
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (flags.seed_given) cfg.master_seed = flags.seed;
    if (!flags.sigma.empty()) {
        if (flags.sigma == "auto") {
            cfg.sigma_auto = true;
        } else {
            try {
                cfg.sigma = std::stod(flags.sigma);
            } catch (const std::exception&) {
                throw mia::UsageError(mia::Errc::config_bad_value,
                                      "--sigma expects a number or \"auto\"");
            }
            cfg.sigma_auto = false;
        }
    }
    cfg.validate();
    return cfg;
}

std::vector<mia::StrategyKind> parse_strategies(const std::string& csv) {
    std::vector<mia::StrategyKind> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t comma = csv.find(',', pos);
        std::string name = csv.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!name.empty()) {
            try {
                out.push_back(mia::strategy_from_name(name));
            } catch (const mia::Error&) {
                throw mia::UsageError(mia::Errc::bad_strategy,
                                      "unknown strategy \"" + name +
                                          "\" (expected loss, shadow, noisy)");
            }
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) {
        throw mia::UsageError(mia::Errc::bad_strategy,
                              "--strategies parsed to an empty list");
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mia: membership-inference privacy audit for a built-in LM"};
    app.require_subcommand(1);

    CommonFlags train_flags, shadows_flags, sigma_flags, audit_flags;
    std::string strategies_csv = "loss,shadow,noisy";
    std::vector<std::string> report_paths;
    std::string report_config;

    auto* train_cmd =
        app.add_subcommand("train", "train the target model and write the split plan");
    add_common(train_cmd, train_flags);

    auto* shadows_cmd =
        app.add_subcommand("shadows", "train one shadow model per partition");
    add_common(shadows_cmd, shadows_flags);

    auto* sigma_cmd = app.add_subcommand(
        "sigma-search", "search the noise scale that maximizes calibration AUC");
    add_common(sigma_cmd, sigma_flags);

    auto* audit_cmd = app.add_subcommand(
        "audit", "score the evaluation split and emit the report and plots");
    add_common(audit_cmd, audit_flags);
    audit_cmd->add_option("--strategies", strategies_csv,
                          "comma-separated subset of loss,shadow,noisy");

    auto* report_cmd =
        app.add_subcommand("report", "print a human-readable summary of a report");
    report_cmd->add_option("paths", report_paths, "report JSON file(s)");
    report_cmd->add_option("--config", report_config,
                           "derive the report path from a run config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (train_cmd->parsed()) {
            mia::cmd_train(resolve_config(train_flags), std::cout);
        } else if (shadows_cmd->parsed()) {
            mia::cmd_shadows(resolve_config(shadows_flags), std::cout);
        } else if (sigma_cmd->parsed()) {
            mia::cmd_sigma_search(resolve_config(sigma_flags), std::cout);
        } else if (audit_cmd->parsed()) {
            mia::cmd_audit(resolve_config(audit_flags),
                           parse_strategies(strategies_csv), std::cout);
        } else if (report_cmd->parsed()) {
            if (report_paths.empty()) {
                if (report_config.empty()) {
                    throw mia::UsageError(
                        mia::Errc::missing_resource,
                        "report needs a report path or --config");
                }
                mia::RunConfig cfg = mia::load_run_config(report_config);
                report_paths.push_back(
                    (std::filesystem::path(cfg.out_dir) / "report.json").string());
            }
            for (const auto& p : report_paths) {
                mia::cmd_report(p, std::cout);
            }
        }
    } catch (const mia::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const mia::NumericError& e) {
        std::cerr << "numeric failure (" << mia::errc_name(e.code())
                  << "): " << e.what() << "\n";
        return 3;
    } catch (const mia::Error& e) {
        std::cerr << "error (" << mia::errc_name(e.code()) << "): " << e.what()
                  << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
