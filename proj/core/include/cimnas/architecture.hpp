#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace cimnas {

/// Convolution with odd filter sides, same zero padding, optional 2x2 max-pool after ReLU.
struct ConvLayer {
    int filter_h = 3;
    int filter_w = 3;
    int filters = 1;
    bool pool = false;
    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct DenseLayer {
    int neurons = 1;
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Final linear classifier; produces logits.
struct OutputLayer {
    int classes = 2;
    friend bool operator==(const OutputLayer&, const OutputLayer&) = default;
};

using LayerKind = std::variant<ConvLayer, DenseLayer, OutputLayer>;

/// Linear chain of parametric layers ending in exactly one OutputLayer.
struct ArchitectureSpec {
    std::vector<LayerKind> layers;

    std::size_t size() const noexcept { return layers.size(); }
    int classes() const;

    friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

struct FeatureShape {
    int channels = 1;
    int height = 1;
    int width = 1;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// Throws ShapeError (with index) for invalid per-layer hyperparameters.
void validate_layer(const LayerKind& layer, std::size_t index);

/// Input shape of every layer plus the network output shape at the back
/// (result has arch.size() + 1 entries). Throws ShapeError on incompatibility.
std::vector<FeatureShape> infer_shapes(const ArchitectureSpec& arch, FeatureShape input);

/// Multiply-accumulate count of one layer for one input sample.
std::size_t layer_macs(const LayerKind& layer, FeatureShape in);

std::string describe(const LayerKind& layer);

} // namespace cimnas
