/**
 * @file network.hpp
 * @brief U-Net with a concept bottleneck, free-concept head and linear
 *        combination layer, in one of three configurations.
 */
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mlhc/nn/layers.hpp"

namespace mlhc::nn {

enum class Mode { mixed, prediction_only, prescription_only };

std::string_view mode_name(Mode m) noexcept;
/// Throws ConfigError for unknown names.
Mode parse_mode(std::string_view name);
inline constexpr std::array<Mode, 3> all_modes = {Mode::mixed, Mode::prediction_only, Mode::prescription_only};

struct NetConfig {
    int in_channels = 72;
    std::array<int, 4> widths{8, 16, 32, 64};
    int n_prescribed = 4;
    Mode mode = Mode::mixed;

    int n_free() const noexcept { return mode == Mode::mixed ? 1 : 0; }
    /// Channels fed to the combine layer.
    int bottleneck_channels() const noexcept;
    /// Leading bottleneck channels that receive concept supervision.
    int supervised_channels() const noexcept { return mode == Mode::prediction_only ? 0 : n_prescribed; }
    /// Channel labels: concept names then "free", or latent-1..5.
    std::vector<std::string> channel_labels() const;
    void validate() const;

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

template <class T>
struct NetOutput {
    Tensor<T> bottleneck;  // [K][N][H][W]
    Tensor<T> y;           // [1][N][H][W]
};

template <class T>
class Network {
public:
    /// Parameters are drawn from one random stream per layer, keyed by the
    /// seed and the layer name, so layers of the same name and shape start
    /// identical in every configuration.
    Network(const NetConfig& cfg, std::uint64_t seed);
    ~Network();
    Network(Network&&) noexcept;
    Network& operator=(Network&&) noexcept;

    const NetConfig& config() const noexcept { return cfg_; }

    /// x is [in_channels][N][H][W]; inputs are edge-padded to multiples of 16
    /// internally and outputs cropped back to H x W.
    NetOutput<T> forward(const Tensor<T>& x, bool train);

    /// Accumulates parameter gradients. d_bottleneck is the gradient reaching
    /// the bottleneck directly (concept supervision); dy the gradient of the
    /// prediction. Requires a preceding training-mode forward.
    void backward(const Tensor<T>& d_bottleneck, const Tensor<T>& dy);

    void zero_grad();
    /// All trainable parameters in declaration order.
    std::vector<Param<T>*> params();
    std::vector<BatchNorm2d<T>*> batchnorms();
    Combine<T>& combine();
    Conv2d<T>& concept_head();
    Conv2d<T>* free_head();
    std::size_t parameter_count();

private:
    struct Impl;
    NetConfig cfg_;
    std::unique_ptr<Impl> impl_;
};

/// Copies parameters and running statistics between precisions (same config).
template <class From, class To>
void copy_state(Network<From>& from, Network<To>& to);

} // namespace mlhc::nn
