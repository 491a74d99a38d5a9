#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mlhc/error.hpp"
#include "mlhc/pipeline.hpp"

using namespace mlhc;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_other = 1;
constexpr int exit_config = 2;
constexpr int exit_missing = 3;
constexpr int exit_numerical = 4;

int run(const std::string& command, const std::filesystem::path& config_path, const std::string& out,
        const std::optional<std::uint64_t>& seed)
{
    RunConfig cfg = RunConfig::load(config_path);
    if (!out.empty())
        cfg.out_dir = out;
    if (seed)
        cfg.synth.master_seed = *seed;
    cfg.out_dir = std::filesystem::absolute(cfg.out_dir).lexically_normal();
    cfg.validate();

    const Log log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
    if (command == "all") {
        run_through(Command::diagnose, cfg, log);
        run_stage(Command::retro, cfg, log);
        return exit_ok;
    }
    run_stage(parse_command(command), cfg, log);
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Concept-bottleneck forecaster for mixed-layer heat content"};
    std::string command;
    std::filesystem::path config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    app.add_option("command", command,
                   "synth, derive, preprocess, train, eval, diagnose, retro, or all for every stage")
        ->required();
    app.add_option("--config", config_path, "configuration file")->required();
    app.add_option("--out", out, "output directory (overrides run.out_dir)");
    app.add_option("--seed", seed, "master seed of the synthetic data (overrides synth.master_seed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    try {
        return run(command, config_path, out, seed);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return exit_config;
    } catch (const MissingInputError& e) {
        std::fprintf(stderr, "missing input: %s\n", e.what());
        return exit_missing;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return exit_numerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_other;
    }
}
