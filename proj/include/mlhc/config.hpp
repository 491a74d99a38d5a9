/**
 * @file config.hpp
 * @brief Run configuration read from `section.key = value` text.
 *
 * Lines starting with `#` (after optional blanks) and blank lines are
 * ignored; a `#` after a value starts a comment. Lists are comma separated.
 * Unknown keys, repeated keys and unparsable values are all collected and
 * reported together in one ConfigError.
 */
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mlhc/concepts.hpp"
#include "mlhc/diagnostics.hpp"
#include "mlhc/ensemble.hpp"
#include "mlhc/nn/network.hpp"
#include "mlhc/nn/train.hpp"
#include "mlhc/preprocess.hpp"
#include "mlhc/synth.hpp"

namespace mlhc {

struct EvalOptions {
    int member = 0;  // data member whose out-of-sample months are verified
    int batch_size = 8;
};

struct DiagOptions {
    RegionBox region{40.0, 46.0, -71.0, -64.0};
    /// Event month of the retrospective; year 0 picks the month with the
    /// largest region-mean target anomaly.
    YearMonth event{0, 1};
    int window = 6;
    int max_lag = 3;
    int ppm_scale = 4;
};

struct RunConfig {
    std::filesystem::path out_dir = "run";
    int jobs = 0;  // concurrent member trainings; 0 uses every hardware thread
    SynthConfig synth;
    PhysConstants physics;
    PreprocConfig preprocess;
    std::array<int, 4> widths{8, 16, 32, 64};
    nn::TrainConfig train;
    EnsembleSpec ensemble;
    EvalOptions eval;
    DiagOptions diagnostics;

    /// Network configuration for `mode` implied by the settings.
    nn::NetConfig net_config(nn::Mode mode = nn::Mode::mixed) const;
    int resolved_jobs() const;

    /// Throws ConfigError listing every violated invariant.
    void validate() const;

    /// Every key with its current value, one `key = value` line each, in a
    /// fixed order. Only keys of the given sections when `sections` is non-empty.
    std::string to_text(const std::vector<std::string>& sections = {}) const;

    /// Applies assignments on top of the defaults, then validates.
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
};

/// Sorted list of every accepted key.
std::vector<std::string> config_keys();

} // namespace mlhc
