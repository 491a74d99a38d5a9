/**
 * @file ensemble.hpp
 * @brief Seed-controlled member training and ensemble aggregation.
 *
 * Member i of every configuration is initialised from seeds[i], so layers of
 * equal shape start bitwise equal across configurations.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mlhc/nn/train.hpp"

namespace mlhc {

struct EnsembleSpec {
    std::vector<std::uint64_t> seeds{1001, 1002, 1003, 1004, 1005};
    std::vector<nn::Mode> configurations{nn::all_modes.begin(), nn::all_modes.end()};

    int n_members() const noexcept { return static_cast<int>(seeds.size()); }
    /// Throws ConfigError: no seed, repeated seeds, no or repeated configuration.
    void validate() const;
};

/// Member name v1..vN for index 0..N-1.
std::string member_name(int member);
/// `<run>/<config>/v<i>.ckpt` for member index i (0-based).
std::filesystem::path member_checkpoint(const std::filesystem::path& run, nn::Mode mode, int member);

struct EnsembleMembers {
    nn::Mode mode = nn::Mode::mixed;
    std::vector<nn::TrainResult> members;  // index i trained from seeds[i]
};

using MemberEpochCallback = std::function<void(nn::Mode, int member, const nn::EpochRecord&)>;

/// Trains every (configuration, member) pair, up to `jobs` at a time. Each
/// training is deterministic on its own, so results do not depend on `jobs`.
/// `base.mode` is replaced by each configuration. A failure is rethrown with
/// the same error type, its message prefixed by "[<config> v<i>]". The
/// callback may run on worker threads but never concurrently with itself.
std::vector<EnsembleMembers> train_ensemble(const EnsembleSpec& spec, const nn::NetConfig& base,
                                            const SampleSet& train_set, const SampleSet* val_set,
                                            const nn::TrainConfig& cfg, int jobs = 1,
                                            const MemberEpochCallback& on_epoch = {});

/// Per sample-cell moments over members, computed in double with two passes.
/// Layout follows nn::Prediction: y [sample][cell], z [sample][K][cell].
struct EnsemblePrediction {
    int channels = 0;
    std::size_t samples = 0;
    std::size_t cells = 0;
    std::vector<nn::Prediction> members;
    std::vector<double> mean_y, std_y;
    std::vector<double> mean_z, std_z;

    int n_members() const noexcept { return static_cast<int>(members.size()); }
    bool has_spread() const noexcept { return !std_y.empty(); }
};

/// Mean and, when `with_spread`, population std across members. Members must
/// share shape. Requesting spread from a single member throws.
EnsemblePrediction aggregate(std::vector<nn::Prediction> members, bool with_spread = true);
/// Runs every network over `set` in eval mode and aggregates.
EnsemblePrediction predict_ensemble(std::vector<nn::Network<float>*> nets, const SampleSet& set,
                                    bool with_spread = true, int batch_size = 8);

/// Lower and upper band edges mean -/+ 2 std.
std::vector<double> band_lower(const std::vector<double>& mean, const std::vector<double>& std);
std::vector<double> band_upper(const std::vector<double>& mean, const std::vector<double>& std);

} // namespace mlhc
