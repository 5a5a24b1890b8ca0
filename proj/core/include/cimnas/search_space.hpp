#pragma once

// Joint search space over architecture, quantization and device choices, and
// the bijection between controller action sequences and candidates.
//
// Decision order is layer-major. For every layer the architecture fields come
// first (conv: filter_h, filter_w, filters, pool; dense: neurons), then the
// quantization fields (weight int, weight frac, activation int, activation
// frac). The device index is the last decision.

#include "cimnas/architecture.hpp"
#include "cimnas/quantization.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cimnas {

using BigCount = boost::multiprecision::cpp_int;
using ActionSequence = std::vector<int>;

/// Raw bit widths of one layer. A width pair summing to zero is expressible
/// here but makes the candidate infeasible.
struct LayerQuantBits {
    int weight_int = 0;
    int weight_frac = 0;
    int act_int = 0;
    int act_frac = 0;
    friend bool operator==(const LayerQuantBits&, const LayerQuantBits&) = default;
};

struct Candidate {
    ArchitectureSpec arch;
    std::optional<std::vector<LayerQuantBits>> quant; ///< nullopt: full precision
    std::size_t device = 0;

    /// Signed weights, unsigned activations. nullopt for full precision.
    /// Throws ConfigError when some layer has a zero-width format.
    std::optional<QuantizationScheme> scheme() const;
    friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Empty when the candidate can be built for `input`, otherwise the reason.
std::string infeasibility(const Candidate& c, FeatureShape input);

enum class DecisionGroup { Architecture, Quantization, Device };
enum class DecisionKind { FilterH, FilterW, Filters, Pool, Neurons, WeightInt, WeightFrac, ActInt, ActFrac, Device };

const char* to_string(DecisionKind kind);
DecisionGroup group_of(DecisionKind kind);

struct Decision {
    DecisionKind kind;
    std::size_t layer = 0; ///< ignored for the device decision
    std::vector<int> choices;
    friend bool operator==(const Decision&, const Decision&) = default;
};

struct ConvChoices {
    std::vector<int> filter_h;
    std::vector<int> filter_w;
    std::vector<int> filters;
    std::vector<int> pool;
    friend bool operator==(const ConvChoices&, const ConvChoices&) = default;
};
struct DenseChoices {
    std::vector<int> neurons;
    friend bool operator==(const DenseChoices&, const DenseChoices&) = default;
};
struct OutputChoice {
    int classes = 10;
    friend bool operator==(const OutputChoice&, const OutputChoice&) = default;
};
using LayerChoices = std::variant<ConvChoices, DenseChoices, OutputChoice>;

struct QuantChoices {
    std::vector<int> int_bits;
    std::vector<int> frac_bits;
    friend bool operator==(const QuantChoices&, const QuantChoices&) = default;
};

/// Declarative space description; the last layer must be an OutputChoice.
struct SpaceDefinition {
    std::string name;
    std::vector<LayerChoices> layers;
    std::optional<QuantChoices> quant; ///< nullopt: no quantization decisions
    /// When false the output layer reuses the formats of the layer before it.
    bool search_output_quant = false;
    std::size_t devices = 1;
    friend bool operator==(const SpaceDefinition&, const SpaceDefinition&) = default;
};

class SearchSpace {
public:
    explicit SearchSpace(SpaceDefinition def);

    const SpaceDefinition& definition() const noexcept { return def_; }
    const std::string& name() const noexcept { return def_.name; }
    const std::vector<Decision>& decisions() const noexcept { return decisions_; }
    std::size_t steps() const noexcept { return decisions_.size(); }
    std::vector<int> choice_counts() const;
    /// Values used for decisions that are not searched.
    const Candidate& base() const noexcept { return base_; }

    /// Drop the decisions of disabled groups; their values come from `pin`.
    /// `pin` must have the same layer skeleton. A pin without quantization
    /// makes every candidate full precision.
    SearchSpace restricted(bool architecture, bool quantization, bool device, const Candidate& pin) const;

    /// Throws ConfigError naming the step on a bad length or out-of-range index.
    Candidate decode(const ActionSequence& actions) const;
    /// Throws ConfigError when a value of `c` is not among the choices.
    ActionSequence encode(const Candidate& c) const;

    bool has_group(DecisionGroup g) const;

private:
    void apply(Candidate& c, const Decision& d, int value) const;
    int value_of(const Candidate& c, const Decision& d) const;
    void sync_output_quant(Candidate& c) const;

    SpaceDefinition def_;
    std::vector<Decision> decisions_;
    Candidate base_;
};

/// Product of every choice-list length.
BigCount space_size(const SearchSpace& space);

/// 6 conv + 2 dense + 10-class output over 3x32x32 inputs.
SearchSpace rls_space(std::size_t devices = 2);
/// 8 conv + 3 dense + 10-class output.
SearchSpace vls_space(std::size_t devices = 2);

} // namespace cimnas
