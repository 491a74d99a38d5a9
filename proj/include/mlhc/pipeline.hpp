/**
 * @file pipeline.hpp
 * @brief The batch stages behind the command-line tool and their manifests.
 *
 * Every stage writes into `<out>/<stage>/` and finishes with a manifest that
 * echoes the configuration it depends on, the checksums of its inputs and of
 * every file it wrote. A stage whose manifest still matches is skipped; a
 * stage whose upstream manifest is absent or stale throws MissingInputError
 * naming the command to run first.
 */
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlhc/config.hpp"

namespace mlhc {

enum class Command { synth, derive, preprocess, train, eval, diagnose, retro };
inline constexpr std::array<Command, 7> all_commands = {Command::synth,    Command::derive, Command::preprocess,
                                                        Command::train,    Command::eval,   Command::diagnose,
                                                        Command::retro};

std::string_view command_name(Command c) noexcept;
/// Throws ConfigError for unknown names.
Command parse_command(std::string_view name);

/// Ordered `key = value` text file.
class Manifest {
public:
    void set(const std::string& key, std::string value);
    std::optional<std::string> get(std::string_view key) const;
    const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
    /// Entries whose key starts with `prefix`, with the prefix removed.
    std::vector<std::pair<std::string, std::string>> with_prefix(std::string_view prefix) const;

    std::string to_text() const;
    static Manifest parse(std::string_view text);
    static Manifest read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::filesystem::path stage_dir(const RunConfig& cfg, Command c);
std::filesystem::path manifest_path(const RunConfig& cfg, Command c);
/// Checksum of the configuration sections a stage depends on.
std::string stage_config_hash(const RunConfig& cfg, Command c);

struct StageResult {
    bool skipped = false;  // outputs were already up to date
    std::vector<std::filesystem::path> outputs;  // relative to the output directory
};

using Log = std::function<void(const std::string&)>;

/// Runs one stage, or skips it when its manifest is current.
StageResult run_stage(Command c, const RunConfig& cfg, const Log& log = {});
/// Runs synth through `last` in order.
void run_through(Command last, const RunConfig& cfg, const Log& log = {});

/// Normalised data as written by the preprocess stage.
std::shared_ptr<const PreparedData> load_prepared(const RunConfig& cfg);
/// Checkpoints of one configuration written by the train stage, v1 first.
std::vector<nn::Network<float>> load_members(const RunConfig& cfg, nn::Mode mode);
/// Series written by the eval stage: `<config>/<variable>_mean` or
/// `target/<variable>`.
FieldSeries load_eval_series(const RunConfig& cfg, const std::string& name);

/// Copy in which ocean cells holding NaN at any step become land.
FieldSeries nan_as_land(const FieldSeries& s);

} // namespace mlhc
