#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "degforge/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"degforge: degradation synthesis and restoration pipeline"};
    app.require_subcommand(1);
    app.fallthrough(true);  // accept global flags after the subcommand name

    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    bool dry_run = false;
    bool overwrite = false;

    app.add_option("--config", config_path, "Run configuration file (JSON)");
    app.add_option("--seed", seed, "Master seed (overrides config)");
    app.add_option("--workers", workers, "Worker count (overrides config)");
    app.add_option("--out", out, "Output directory (overrides config)");
    app.add_flag("--dry-run", dry_run, "Print the resolved plan without side effects");
    app.add_flag("--overwrite", overwrite, "Replace existing outputs");

    const char* commands[] = {"toyworld",      "stats", "train-gen", "train-scm",
                              "synth",         "mix",   "train-restore", "eval"};
    const char* descriptions[] = {
        "Generate a paired synthetic toy corpus",
        "Build per-degradation (mu, sigma) histograms",
        "Train the conditional degradation generator",
        "Train the structure-correction module on a frozen generator",
        "Synthesize degraded datasets with filtering",
        "Merge existing and generated manifests into three training regimes",
        "Train the baseline restoration model",
        "Score datasets and emit CSV/JSON reports"};
    for (size_t i = 0; i < std::size(commands); ++i)
        app.add_subcommand(commands[i], descriptions[i]);

    CLI11_PARSE(app, argc, argv);

    degforge::pipeline::Overrides ov;
    ov.seed = seed;
    ov.workers = workers;
    ov.out = out;
    ov.dry_run = dry_run;
    ov.overwrite = overwrite;

    degforge::pipeline::RunConfig cfg;
    try {
        cfg = config_path.empty()
                  ? degforge::pipeline::RunConfig::from_json(nlohmann::ordered_json::object(), ov)
                  : degforge::pipeline::RunConfig::load(config_path, ov);
    } catch (const degforge::pipeline::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return degforge::pipeline::kConfigError;
    }

    std::string name = app.get_subcommands().front()->get_name();
    return degforge::pipeline::run_command(name, cfg, std::cout, std::cerr);
}
