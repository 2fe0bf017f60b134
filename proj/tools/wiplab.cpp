#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wiplab/runner.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"wiplab: invariance-principle rate experiments"};
    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string out_dir;
    std::vector<std::string> overrides;

    app.add_option("--config", config_path, "key = value config file");
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--set", overrides, "extra key=value entries")->take_all();

    std::string subcommand;
    for (const char* kind : {"clt", "wip-rate", "decomp-check", "vnk-scaling", "fastslow-rate", "prokhorov-selftest",
                             "rate-table"}) {
        app.add_subcommand(kind, std::string("run the ") + kind + " experiment")->fallthrough()->callback([&subcommand, kind] {
            subcommand = kind;
        });
    }
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        wiplab::Config cfg = config_path.empty() ? wiplab::Config{} : wiplab::Config::load(config_path);
        for (const auto& kv : overrides) {
            const auto line = wiplab::Config::parse(kv);
            for (const auto& [k, v] : line.entries()) {
                cfg.set(k, v);
            }
        }
        if (!subcommand.empty()) {
            if (cfg.has("experiment") && cfg.get("experiment", "") != subcommand) {
                throw wiplab::Error(wiplab::ErrorCode::ConfigError,
                                    "experiment: config says '" + cfg.get("experiment", "") + "' but subcommand is '" +
                                        subcommand + "'");
            }
            cfg.set("experiment", subcommand);
        }
        if (*seed_opt) {
            cfg.set("seed", std::to_string(seed));
        }
        const auto exp = wiplab::ExperimentConfig::from(cfg);
        const auto violations = wiplab::validate(exp);
        if (!violations.empty()) {
            for (const auto& v : violations) {
                std::cerr << wiplab::error_record("ConfigError", v) << '\n';
            }
            return exit_config;
        }
        wiplab::RunOptions opts;
        opts.workers = workers;
        opts.keep_text = false;
        if (!out_dir.empty()) {
            opts.out_dir = out_dir;
        } else if (const char* env = std::getenv("WIPLAB_OUT"); env != nullptr && *env != '\0') {
            opts.out_dir = env;
        } else {
            opts.out_dir = exp.output;
        }
        const auto manifest = wiplab::run(exp, opts);
        std::cout << manifest.experiment << ": " << manifest.row_counts.at("distances.csv") << " distance rows, "
                  << manifest.row_counts.at("fits.csv") << " fit rows, " << manifest.row_counts.at("rates.csv")
                  << " rate rows -> " << opts.out_dir.string() << '\n';
        for (const auto& note : manifest.notes) {
            std::cout << "note: " << note << '\n';
        }
        return 0;
    } catch (const wiplab::Error& e) {
        std::cerr << wiplab::error_record(std::string(wiplab::to_string(e.code())), e.what()) << '\n';
        return e.code() == wiplab::ErrorCode::ConfigError ? exit_config : exit_runtime;
    } catch (const std::exception& e) {
        std::cerr << wiplab::error_record("InternalError", e.what()) << '\n';
        return exit_runtime;
    }
}
