#pragma once

#include "cimnas/architecture.hpp"
#include "cimnas/dataset.hpp"
#include "cimnas/quantization.hpp"
#include "cimnas/random.hpp"
#include "cimnas/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cimnas {

/// Weights and biases of one parametric layer.
/// Conv weights are (filters, channels, fh, fw); dense/output weights are (fan_in, fan_out).
struct LayerParams {
    Tensor weight;
    Tensor bias;
    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct Network {
    ArchitectureSpec arch;
    FeatureShape input_shape;
    std::vector<FeatureShape> shapes; ///< input shape of each layer, then the output shape
    std::vector<LayerParams> params;  ///< one per layer

    int classes() const { return arch.classes(); }
    std::size_t layers() const noexcept { return params.size(); }

    friend bool operator==(const Network&, const Network&) = default;
};

/// Gaussian weight-domain perturbation applied on top of (quantized) weights.
struct NoiseSpec {
    bool enabled = false;
    std::vector<double> per_layer_sigma;
    bool resample_per_batch = true;

    /// Enabled with at least one positive sigma.
    bool active() const noexcept;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 30;
    int batch_size = 32;
    std::uint64_t rng_seed = 0;
};

/// One offset tensor per layer (empty tensor = no offset on that layer).
using WeightPerturbation = std::vector<Tensor>;

Network build_network(const ArchitectureSpec& arch, FeatureShape input_shape, std::uint64_t seed);

/// Draw one perturbation for every weight element; layers with sigma 0 get no entry.
WeightPerturbation sample_weight_noise(const Network& net, const NoiseSpec& noise, Rng& rng);

/// Logits (batch, classes). `quant` and `noise` may be null. Stored weights are never touched.
Tensor forward(const Network& net, const Tensor& batch, const QuantizationScheme* quant, const NoiseSpec* noise,
               Rng& rng);

/// Forward with an explicit, already-sampled perturbation.
Tensor forward_perturbed(const Network& net, const Tensor& batch, const QuantizationScheme* quant,
                         const WeightPerturbation& perturbation);

/// Mean softmax cross-entropy; writes d(loss)/d(logits) into `grad` when non-null.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad);

/// Loss and gradients w.r.t. the master weights through the quantized/perturbed
/// path (straight-through estimator on both quantizers).
double loss_and_gradients(const Network& net, const Tensor& batch, std::span<const int> labels,
                          const QuantizationScheme* quant, const WeightPerturbation& perturbation,
                          std::vector<LayerParams>* grads);

/// One SGD step on the clean master weights. Throws TrainingDiverged on a
/// non-finite loss or gradient.
double train_step(Network& net, const Tensor& batch, std::span<const int> labels, const TrainConfig& cfg,
                  const QuantizationScheme* quant, const NoiseSpec* noise, Rng& rng);

struct TrainResult {
    Network net;
    double heldout_accuracy = 0.0;
};

/// cfg.epochs epochs of shuffled mini-batch SGD; held-out accuracy is measured
/// with quantization but without noise.
TrainResult train(Network net, const Dataset& train_set, const Dataset& heldout, const TrainConfig& cfg,
                  const QuantizationScheme* quant, const NoiseSpec* noise);

/// Mean accuracy over `n_trials` independent perturbation draws (one draw per
/// trial for the whole dataset). Without active noise a single trial is run.
double evaluate_accuracy(const Network& net, const Dataset& data, const QuantizationScheme* quant,
                         const NoiseSpec* noise, int n_trials, Rng& rng);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy_of(const Tensor& logits, std::span<const int> labels);

} // namespace cimnas
