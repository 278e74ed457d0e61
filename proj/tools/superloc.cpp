// superloc: run experiments, synthesise datasets, solve stored measurements.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "superloc/cli.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Joint mobile and scatterer localisation by atomic-norm de-mixing"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::string data;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;

    CLI::App* run = app.add_subcommand("run", "Monte Carlo experiment over the configured SNR grid");
    run->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    run->add_option("--threads", threads, "parallel trials (results do not depend on it)");
    run->add_option("--out", out, "results file, overrides output.path");
    run->add_option("--seed", seed, "overrides SUPERLOC_SEED and experiment.seed");

    CLI::App* synth = app.add_subcommand("synth", "write one synthetic dataset with ground truth");
    synth->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", out, "dataset path")->required();
    synth->add_option("--seed", seed, "overrides SUPERLOC_SEED and experiment.seed");

    CLI::App* solve = app.add_subcommand("solve", "solve a stored dataset");
    solve->add_option("--data", data, "dataset written by synth")->required()->check(CLI::ExistingFile);
    solve->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    solve->add_option("--out", out, "solution JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : superloc::kExitConfigError;
    }

    superloc::CliOverrides overrides;
    overrides.seed = seed;
    overrides.threads = threads;
    if (!out.empty())
        overrides.out = out;

    if (*run)
        return superloc::cmd_run(config, overrides, std::cout, std::cerr);
    if (*synth)
        return superloc::cmd_synth(config, out, overrides, std::cout, std::cerr);
    return superloc::cmd_solve(data, config, out, std::cout, std::cerr);
}
