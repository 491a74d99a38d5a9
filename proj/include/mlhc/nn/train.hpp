/**
 * @file train.hpp
 * @brief Mixed-supervision loss, lambda schedule, AdamW, the training loop,
 *        batched inference and the checkpoint format.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mlhc/nn/network.hpp"
#include "mlhc/preprocess.hpp"

namespace mlhc::nn {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 30;
    int batch_size = 8;
    double lambda0 = 0.8;
    double lambda1 = 0.2;

    void validate() const;
};

/// lambda(e) = lambda0 (lambda1 / lambda0)^(e / (E - 1)).
double lambda_schedule(int epoch, int epochs, double lambda0, double lambda1);

struct LossValue {
    double conc = 0.0;  // concept term
    double pred = 0.0;
    double total = 0.0;
};

/// l1 loss over ocean cells (mask[cell] != 0). The first `n_supervised`
/// bottleneck channels are compared with `concepts`; other channels are free.
/// When d_bottleneck / dy are non-null they receive dL/d(output), with the
/// subgradient of |e| taken as 0 at e = 0.
template <class T>
LossValue l1_loss(const Tensor<T>& bottleneck, const Tensor<T>& y_hat, const Tensor<T>& concepts,
                  const Tensor<T>& y, std::span<const std::uint8_t> mask, int n_supervised, double lambda,
                  Tensor<T>* d_bottleneck = nullptr, Tensor<T>* dy = nullptr);

/// Decoupled weight decay Adam, applied to every parameter.
template <class T>
class AdamW {
public:
    explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}

    /// Throws NumericalError if any gradient is not finite; nothing is
    /// updated in that case.
    void step(const std::vector<Param<T>*>& params);
    long steps() const noexcept { return t_; }

private:
    TrainConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Batch tensors for samples idx of a SampleSet.
struct Batch {
    Tensor<float> x, concepts, y;
};
Batch make_batch(const SampleSet& set, std::span<const std::size_t> idx);

struct EpochRecord {
    int epoch = 0;
    double lambda = 0.0;
    LossValue train;
    LossValue val;  // evaluated in eval mode with the same lambda
};

struct TrainResult {
    Network<float> net;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Deterministic given `seed`: initialisation and batch order come from
/// seeded streams. prediction_only always trains with lambda = 0. Throws
/// NumericalError naming the epoch if the loss turns non-finite.
TrainResult train(const NetConfig& net_cfg, const SampleSet& train_set, const SampleSet* val_set,
                  const TrainConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Eval-mode loss over a whole sample set (sample-weighted batch means).
LossValue evaluate_loss(Network<float>& net, const SampleSet& set, double lambda, int batch_size = 8);

/// Eval-mode outputs per sample: y [sample][cell], bottleneck [sample][K][cell].
struct Prediction {
    int channels = 0;
    std::size_t cells = 0;
    std::vector<float> y;
    std::vector<float> bottleneck;

    std::span<const float> y_of(std::size_t i) const { return {y.data() + i * cells, cells}; }
    std::span<const float> channel_of(std::size_t i, int k) const
    {
        return {bottleneck.data() + (i * std::size_t(channels) + std::size_t(k)) * cells, cells};
    }
};
Prediction predict(Network<float>& net, const SampleSet& set, int batch_size = 8);

/// Checkpoint: "MCK1", version, config text, parameters in declaration order
/// as f32, batch-norm running statistics, CRC32 trailer.
std::vector<std::uint8_t> checkpoint_encode(Network<float>& net, std::uint64_t seed);
Network<float> checkpoint_decode(std::span<const std::uint8_t> bytes, std::uint64_t* seed = nullptr);
void checkpoint_write(const std::filesystem::path& path, Network<float>& net, std::uint64_t seed);
Network<float> checkpoint_read(const std::filesystem::path& path, std::uint64_t* seed = nullptr);

} // namespace mlhc::nn
