#include "cimnas/commands.hpp"
#include "cimnas/error.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

int main(int argc, char** argv) {
    CLI::App app{"Compute-in-memory architecture, quantization and device co-search"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    bool resume = false;
    auto* search = app.add_subcommand("search", "run the configured search pipeline");
    search->add_option("--config", config_path, "run configuration (JSON)");
    search->add_option("--seed", seed, "master seed");
    search->add_option("--workers", workers, "parallel child evaluations");
    search->add_option("--out", out, "run directory");
    search->add_flag("--resume", resume, "continue the run in --out from its checkpoint");

    std::string run_dir;
    std::size_t episode = 0;
    auto* evaluate = app.add_subcommand("evaluate", "replay one logged episode");
    evaluate->add_option("run_dir", run_dir)->required();
    evaluate->add_option("episode", episode)->required();

    std::string arch_file, quant = "from-arch", device, preset;
    auto* cost = app.add_subcommand("cost", "map and cost an architecture file");
    cost->add_option("arch", arch_file, "architecture JSON")->required();
    cost->add_option("--quant", quant, "from-arch | none | <weight>,<activation> e.g. s1.4,u3.5");
    cost->add_option("--device", device, "device name");
    cost->add_option("--preset", preset, "cost coefficient file");

    std::string objectives;
    auto* pareto = app.add_subcommand("pareto", "non-dominated records of a run");
    pareto->add_option("run_dir", run_dir)->required();
    pareto->add_option("--objectives", objectives, "e.g. alpha_noisy:max,latency:min");

    auto* report = app.add_subcommand("report", "regenerate CSV reports from the history log");
    report->add_option("run_dir", run_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*search) {
            cimnas::RunConfig cfg;
            if (!config_path.empty()) {
                cfg = cimnas::load_run_config(config_path);
                // A relative preset path may also be given relative to the config file.
                cfg.technology = cimnas::resolve_technology(cfg, std::filesystem::path(config_path).parent_path());
                cfg.technology_preset.clear();
            }
            cimnas::apply_env_overrides(cfg, [](const char* k) { return std::getenv(k); });
            if (seed) cfg.seed = *seed;
            if (workers) cfg.workers = *workers;
            if (out) cfg.out = *out;
            cfg.validate();
            cimnas::search_command(cfg, resume, std::cerr);
        } else if (*evaluate) {
            cimnas::evaluate_command(run_dir, episode, std::cout);
        } else if (*cost) {
            cimnas::cost_command(arch_file, quant, device, preset, std::cout);
        } else if (*pareto) {
            cimnas::pareto_command(run_dir, objectives, std::cout);
        } else if (*report) {
            cimnas::report_command(run_dir, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cimnas::exit_code_for(e);
    }
    return 0;
}
