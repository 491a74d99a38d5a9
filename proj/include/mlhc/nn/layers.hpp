/**
 * @file layers.hpp
 * @brief Differentiable building blocks of the U-Net.
 *
 * Each layer keeps the cache of its most recent training-mode forward pass;
 * backward consumes that cache and accumulates into the parameter gradients.
 * Calling backward after an eval-mode forward throws.
 *
 * Subgradient conventions: ReLU passes no gradient at exactly 0; max pooling
 * routes the gradient to the first maximum in row-major window order.
 */
#pragma once

#include <cstdint>
#include <vector>

#include "mlhc/nn/tensor.hpp"

namespace mlhc::nn {

template <class T>
class Conv2d {
public:
    /// k must be 1 or 3; padding is k/2 so spatial size is preserved.
    Conv2d(std::string name, int in_ch, int out_ch, int k, bool bias);

    /// Takes x by value: a training-mode pass keeps it for backward.
    Tensor<T> forward(Tensor<T> x, bool train);
    /// Returns dL/dx, or an empty tensor when input gradients are disabled.
    Tensor<T> backward(const Tensor<T>& dy);

    /// The first layer of the network does not need dL/dx.
    void set_input_grad(bool on) noexcept { input_grad_ = on; }

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int kernel() const noexcept { return k_; }
    bool has_bias() const noexcept { return has_bias_; }
    Param<T>& weight() noexcept { return weight_; }  // [out][in][k][k]
    Param<T>& bias() noexcept { return bias_; }
    std::vector<Param<T>*> params();

private:
    /// Weights regrouped as [tap][out][in].
    Buffer<T> stacked_weights() const;

    int in_, out_, k_;
    bool has_bias_;
    bool input_grad_ = true;
    Param<T> weight_, bias_;
    Tensor<T> x_;
    bool cached_ = false;
};

template <class T>
class BatchNorm2d {
public:
    /// With `relu` the layer outputs max(0, BN(x)); the ReLU mask is recomputed
    /// from the cached normalised input instead of being stored.
    BatchNorm2d(std::string name, int channels, bool relu = false, double momentum = 0.1, double eps = 1e-5);

    /// Train mode normalises with batch statistics (biased variance) and
    /// updates the running statistics (unbiased variance); eval mode uses the
    /// running statistics.
    Tensor<T> forward(const Tensor<T>& x, bool train);
    Tensor<T> backward(const Tensor<T>& dy);

    int channels() const noexcept { return ch_; }
    Param<T>& gamma() noexcept { return gamma_; }
    Param<T>& beta() noexcept { return beta_; }
    std::vector<T>& running_mean() noexcept { return run_mean_; }
    std::vector<T>& running_var() noexcept { return run_var_; }
    const std::string& name() const noexcept { return name_; }
    std::vector<Param<T>*> params() { return {&gamma_, &beta_}; }

private:
    std::string name_;
    int ch_;
    bool relu_;
    double momentum_, eps_;
    Param<T> gamma_, beta_;
    std::vector<T> run_mean_, run_var_;
    Tensor<T> xhat_;
    std::vector<double> inv_std_;
    bool cached_ = false;
};

template <class T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x, bool train);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Tensor<T> y_;
    bool cached_ = false;
};

/// 2x2 max pooling with stride 2; H and W must be even.
template <class T>
class MaxPool2 {
public:
    Tensor<T> forward(const Tensor<T>& x, bool train);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    int in_h_ = 0, in_w_ = 0;
    std::vector<std::uint8_t> arg_;
    bool cached_ = false;
};

/// 2x2 transposed convolution with stride 2 (doubles H and W), with bias.
template <class T>
class ConvTranspose2 {
public:
    ConvTranspose2(std::string name, int in_ch, int out_ch);

    Tensor<T> forward(Tensor<T> x, bool train);
    Tensor<T> backward(const Tensor<T>& dy);

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    Param<T>& weight() noexcept { return weight_; }  // [in][out][2][2]
    Param<T>& bias() noexcept { return bias_; }
    std::vector<Param<T>*> params() { return {&weight_, &bias_}; }

private:
    int in_, out_;
    Param<T> weight_, bias_;
    Tensor<T> x_;
    bool cached_ = false;
};

/// Per-pixel affine map of K channels to one: y = sum_k w_k z_k + b.
template <class T>
class Combine {
public:
    Combine(std::string name, int channels);

    Tensor<T> forward(Tensor<T> z, bool train);
    Tensor<T> backward(const Tensor<T>& dy);

    int channels() const noexcept { return k_; }
    Param<T>& weight() noexcept { return weight_; }
    Param<T>& bias() noexcept { return bias_; }
    std::vector<Param<T>*> params() { return {&weight_, &bias_}; }

private:
    int k_;
    Param<T> weight_, bias_;
    Tensor<T> z_;
    bool cached_ = false;
};

/// Stacks a then b along the channel axis.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Splits a gradient of concat_channels(a, b) back into its two parts.
template <class T>
void split_channels(const Tensor<T>& d, int a_channels, Tensor<T>& da, Tensor<T>& db);

/// Edge-replication padding to (H', W') and its adjoint crop.
template <class T>
Tensor<T> pad_replicate(const Tensor<T>& x, int h, int w);
template <class T>
Tensor<T> crop(const Tensor<T>& x, int h, int w);
/// Adjoint of crop: places d in the top-left corner of a zero tensor.
template <class T>
Tensor<T> uncrop(const Tensor<T>& d, int h, int w);

} // namespace mlhc::nn
