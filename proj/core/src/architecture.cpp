#include "cimnas/architecture.hpp"

#include "cimnas/error.hpp"

namespace cimnas {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

} // namespace

int ArchitectureSpec::classes() const {
    if (layers.empty() || !std::holds_alternative<OutputLayer>(layers.back())) {
        throw ConfigError("architecture must end with an output layer");
    }
    return std::get<OutputLayer>(layers.back()).classes;
}

void validate_layer(const LayerKind& layer, std::size_t index) {
    std::visit(Overloaded{
                   [&](const ConvLayer& c) {
                       if (c.filter_h < 1 || c.filter_w < 1 || c.filter_h % 2 == 0 || c.filter_w % 2 == 0) {
                           throw ShapeError(index, "filter sides must be odd and >= 1, got " +
                                                       std::to_string(c.filter_h) + "x" + std::to_string(c.filter_w));
                       }
                       if (c.filters < 1) throw ShapeError(index, "conv needs at least one filter");
                   },
                   [&](const DenseLayer& d) {
                       if (d.neurons < 1) throw ShapeError(index, "dense layer needs at least one neuron");
                   },
                   [&](const OutputLayer& o) {
                       if (o.classes < 2) throw ShapeError(index, "output layer needs at least two classes");
                   },
               },
               layer);
}

std::vector<FeatureShape> infer_shapes(const ArchitectureSpec& arch, FeatureShape input) {
    if (input.channels < 1 || input.height < 1 || input.width < 1) {
        throw ConfigError("input shape must be positive");
    }
    if (arch.layers.empty()) throw ConfigError("architecture has no layers");

    std::vector<FeatureShape> shapes;
    shapes.reserve(arch.size() + 1);
    shapes.push_back(input);
    bool flattened = false;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const auto& layer = arch.layers[i];
        validate_layer(layer, i);
        const FeatureShape in = shapes.back();
        const bool last = i + 1 == arch.size();
        FeatureShape out = std::visit(
            Overloaded{
                [&](const ConvLayer& c) {
                    if (flattened) throw ShapeError(i, "convolution after a dense layer");
                    if (c.filter_h > in.height || c.filter_w > in.width) {
                        throw ShapeError(i, "spatial size " + std::to_string(in.height) + "x" +
                                                std::to_string(in.width) + " is below filter size " +
                                                std::to_string(c.filter_h) + "x" + std::to_string(c.filter_w));
                    }
                    FeatureShape s{c.filters, in.height, in.width};
                    if (c.pool) {
                        if (in.height < 2 || in.width < 2) {
                            throw ShapeError(i, "pooling collapses " + std::to_string(in.height) + "x" +
                                                    std::to_string(in.width) + " feature map");
                        }
                        s.height /= 2;
                        s.width /= 2;
                    }
                    return s;
                },
                [&](const DenseLayer& d) {
                    flattened = true;
                    return FeatureShape{d.neurons, 1, 1};
                },
                [&](const OutputLayer& o) {
                    if (!last) throw ShapeError(i, "output layer must be the last layer");
                    return FeatureShape{o.classes, 1, 1};
                },
            },
            layer);
        if (last && !std::holds_alternative<OutputLayer>(layer)) {
            throw ShapeError(i, "architecture must end with an output layer");
        }
        shapes.push_back(out);
    }
    return shapes;
}

std::size_t layer_macs(const LayerKind& layer, FeatureShape in) {
    return std::visit(Overloaded{
                          [&](const ConvLayer& c) {
                              return static_cast<std::size_t>(c.filter_h) * c.filter_w * in.channels * c.filters *
                                     in.height * in.width;
                          },
                          [&](const DenseLayer& d) { return in.size() * static_cast<std::size_t>(d.neurons); },
                          [&](const OutputLayer& o) { return in.size() * static_cast<std::size_t>(o.classes); },
                      },
                      layer);
}

std::string describe(const LayerKind& layer) {
    return std::visit(Overloaded{
                          [](const ConvLayer& c) {
                              return "conv(" + std::to_string(c.filter_h) + "x" + std::to_string(c.filter_w) + "," +
                                     std::to_string(c.filters) + (c.pool ? ",pool)" : ")");
                          },
                          [](const DenseLayer& d) { return "fc(" + std::to_string(d.neurons) + ")"; },
                          [](const OutputLayer& o) { return "out(" + std::to_string(o.classes) + ")"; },
                      },
                      layer);
}

} // namespace cimnas
