#include "cimnas/search_space.hpp"

#include "cimnas/error.hpp"

#include <algorithm>

namespace cimnas {

std::optional<QuantizationScheme> Candidate::scheme() const {
    if (!quant) return std::nullopt;
    if (quant->size() != arch.size()) {
        throw ConfigError("candidate has " + std::to_string(quant->size()) + " quantization entries for " +
                          std::to_string(arch.size()) + " layers");
    }
    QuantizationScheme s;
    for (const auto& q : *quant) {
        s.weights.emplace_back(q.weight_int, q.weight_frac, true);
        s.activations.emplace_back(q.act_int, q.act_frac, false);
    }
    return s;
}

std::string infeasibility(const Candidate& c, FeatureShape input) {
    try {
        infer_shapes(c.arch, input);
        c.arch.classes();
        (void)c.scheme();
    } catch (const Error& e) {
        if (e.category() != ErrorCategory::Config) throw;
        return e.what();
    }
    return {};
}

const char* to_string(DecisionKind kind) {
    switch (kind) {
    case DecisionKind::FilterH: return "filter_h";
    case DecisionKind::FilterW: return "filter_w";
    case DecisionKind::Filters: return "filters";
    case DecisionKind::Pool: return "pool";
    case DecisionKind::Neurons: return "neurons";
    case DecisionKind::WeightInt: return "weight_int";
    case DecisionKind::WeightFrac: return "weight_frac";
    case DecisionKind::ActInt: return "act_int";
    case DecisionKind::ActFrac: return "act_frac";
    case DecisionKind::Device: return "device";
    }
    return "?";
}

DecisionGroup group_of(DecisionKind kind) {
    switch (kind) {
    case DecisionKind::WeightInt:
    case DecisionKind::WeightFrac:
    case DecisionKind::ActInt:
    case DecisionKind::ActFrac: return DecisionGroup::Quantization;
    case DecisionKind::Device: return DecisionGroup::Device;
    default: return DecisionGroup::Architecture;
    }
}

namespace {

void require_choices(const std::vector<int>& v, const std::string& what) {
    if (v.empty()) throw ConfigError(what + " has an empty choice list");
}

} // namespace

SearchSpace::SearchSpace(SpaceDefinition def) : def_(std::move(def)) {
    if (def_.layers.empty() || !std::holds_alternative<OutputChoice>(def_.layers.back())) {
        throw ConfigError("space '" + def_.name + "' must end with an output layer");
    }
    if (def_.devices < 1) throw ConfigError("space '" + def_.name + "' needs at least one device");
    const std::size_t n = def_.layers.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string where = "space '" + def_.name + "' layer " + std::to_string(i);
        if (const auto* c = std::get_if<ConvChoices>(&def_.layers[i])) {
            require_choices(c->filter_h, where + " filter_h");
            require_choices(c->filter_w, where + " filter_w");
            require_choices(c->filters, where + " filters");
            require_choices(c->pool, where + " pool");
            for (int p : c->pool) {
                if (p != 0 && p != 1) throw ConfigError(where + " pool choices must be 0 or 1");
            }
            decisions_.push_back({DecisionKind::FilterH, i, c->filter_h});
            decisions_.push_back({DecisionKind::FilterW, i, c->filter_w});
            decisions_.push_back({DecisionKind::Filters, i, c->filters});
            decisions_.push_back({DecisionKind::Pool, i, c->pool});
        } else if (const auto* d = std::get_if<DenseChoices>(&def_.layers[i])) {
            require_choices(d->neurons, where + " neurons");
            decisions_.push_back({DecisionKind::Neurons, i, d->neurons});
        } else if (i + 1 != n) {
            throw ConfigError(where + ": output layer must be last");
        }
        const bool is_output = i + 1 == n;
        if (def_.quant && (!is_output || def_.search_output_quant || n == 1)) {
            require_choices(def_.quant->int_bits, "space '" + def_.name + "' quant int");
            require_choices(def_.quant->frac_bits, "space '" + def_.name + "' quant frac");
            decisions_.push_back({DecisionKind::WeightInt, i, def_.quant->int_bits});
            decisions_.push_back({DecisionKind::WeightFrac, i, def_.quant->frac_bits});
            decisions_.push_back({DecisionKind::ActInt, i, def_.quant->int_bits});
            decisions_.push_back({DecisionKind::ActFrac, i, def_.quant->frac_bits});
        }
    }
    std::vector<int> devices(def_.devices);
    for (std::size_t i = 0; i < def_.devices; ++i) devices[i] = static_cast<int>(i);
    decisions_.push_back({DecisionKind::Device, 0, devices});

    // Base candidate: first choice everywhere.
    for (const auto& l : def_.layers) {
        if (std::holds_alternative<ConvChoices>(l)) {
            base_.arch.layers.emplace_back(ConvLayer{});
        } else if (std::holds_alternative<DenseChoices>(l)) {
            base_.arch.layers.emplace_back(DenseLayer{});
        } else {
            base_.arch.layers.emplace_back(OutputLayer{std::get<OutputChoice>(l).classes});
        }
    }
    if (def_.quant) base_.quant = std::vector<LayerQuantBits>(n);
    for (const auto& d : decisions_) apply(base_, d, d.choices.front());
    sync_output_quant(base_);
}

std::vector<int> SearchSpace::choice_counts() const {
    std::vector<int> out;
    out.reserve(decisions_.size());
    for (const auto& d : decisions_) out.push_back(static_cast<int>(d.choices.size()));
    return out;
}

bool SearchSpace::has_group(DecisionGroup g) const {
    return std::any_of(decisions_.begin(), decisions_.end(), [&](const Decision& d) { return group_of(d.kind) == g; });
}

SearchSpace SearchSpace::restricted(bool architecture, bool quantization, bool device, const Candidate& pin) const {
    if (pin.arch.size() != base_.arch.size()) {
        throw ConfigError("pinned candidate has " + std::to_string(pin.arch.size()) + " layers, space '" + def_.name +
                          "' has " + std::to_string(base_.arch.size()));
    }
    for (std::size_t i = 0; i < pin.arch.size(); ++i) {
        if (pin.arch.layers[i].index() != base_.arch.layers[i].index()) {
            throw ConfigError("pinned candidate layer " + std::to_string(i) + " has a different kind");
        }
    }
    if (pin.device >= def_.devices) throw ConfigError("pinned device index out of range");
    SearchSpace out = *this;
    out.base_ = pin;
    if (quantization && !out.base_.quant && def_.quant) {
        out.base_.quant = std::vector<LayerQuantBits>(pin.arch.size());
        for (const auto& d : decisions_) {
            if (group_of(d.kind) == DecisionGroup::Quantization) out.apply(out.base_, d, d.choices.front());
        }
    }
    out.decisions_.clear();
    for (const auto& d : decisions_) {
        const auto g = group_of(d.kind);
        const bool keep = (g == DecisionGroup::Architecture && architecture) ||
                          (g == DecisionGroup::Quantization && quantization && out.base_.quant) ||
                          (g == DecisionGroup::Device && device);
        if (keep) out.decisions_.push_back(d);
    }
    out.sync_output_quant(out.base_);
    return out;
}

void SearchSpace::apply(Candidate& c, const Decision& d, int value) const {
    if (d.kind == DecisionKind::Device) {
        c.device = static_cast<std::size_t>(value);
        return;
    }
    auto& layer = c.arch.layers[d.layer];
    switch (d.kind) {
    case DecisionKind::FilterH: std::get<ConvLayer>(layer).filter_h = value; break;
    case DecisionKind::FilterW: std::get<ConvLayer>(layer).filter_w = value; break;
    case DecisionKind::Filters: std::get<ConvLayer>(layer).filters = value; break;
    case DecisionKind::Pool: std::get<ConvLayer>(layer).pool = value != 0; break;
    case DecisionKind::Neurons: std::get<DenseLayer>(layer).neurons = value; break;
    case DecisionKind::WeightInt: (*c.quant)[d.layer].weight_int = value; break;
    case DecisionKind::WeightFrac: (*c.quant)[d.layer].weight_frac = value; break;
    case DecisionKind::ActInt: (*c.quant)[d.layer].act_int = value; break;
    case DecisionKind::ActFrac: (*c.quant)[d.layer].act_frac = value; break;
    case DecisionKind::Device: break;
    }
}

int SearchSpace::value_of(const Candidate& c, const Decision& d) const {
    if (d.kind == DecisionKind::Device) return static_cast<int>(c.device);
    const auto& layer = c.arch.layers.at(d.layer);
    const auto quant = [&]() -> const LayerQuantBits& {
        if (!c.quant) throw ConfigError("candidate has no quantization but the space searches it");
        return c.quant->at(d.layer);
    };
    const auto conv = [&]() -> const ConvLayer& {
        if (const auto* p = std::get_if<ConvLayer>(&layer)) return *p;
        throw ConfigError("candidate layer " + std::to_string(d.layer) + " is not a convolution");
    };
    switch (d.kind) {
    case DecisionKind::FilterH: return conv().filter_h;
    case DecisionKind::FilterW: return conv().filter_w;
    case DecisionKind::Filters: return conv().filters;
    case DecisionKind::Pool: return conv().pool ? 1 : 0;
    case DecisionKind::Neurons:
        if (const auto* p = std::get_if<DenseLayer>(&layer)) return p->neurons;
        throw ConfigError("candidate layer " + std::to_string(d.layer) + " is not a dense layer");
    case DecisionKind::WeightInt: return quant().weight_int;
    case DecisionKind::WeightFrac: return quant().weight_frac;
    case DecisionKind::ActInt: return quant().act_int;
    case DecisionKind::ActFrac: return quant().act_frac;
    case DecisionKind::Device: break;
    }
    return 0;
}

void SearchSpace::sync_output_quant(Candidate& c) const {
    if (!c.quant || def_.search_output_quant || c.quant->size() < 2) return;
    c.quant->back() = (*c.quant)[c.quant->size() - 2];
}

Candidate SearchSpace::decode(const ActionSequence& actions) const {
    if (actions.size() != decisions_.size()) {
        throw ConfigError("action sequence has " + std::to_string(actions.size()) + " steps, space '" + def_.name +
                          "' has " + std::to_string(decisions_.size()));
    }
    Candidate c = base_;
    for (std::size_t t = 0; t < actions.size(); ++t) {
        const auto& d = decisions_[t];
        if (actions[t] < 0 || static_cast<std::size_t>(actions[t]) >= d.choices.size()) {
            throw ConfigError("action " + std::to_string(actions[t]) + " at step " + std::to_string(t) + " (" +
                              to_string(d.kind) + ") outside [0, " + std::to_string(d.choices.size()) + ")");
        }
        apply(c, d, d.choices[static_cast<std::size_t>(actions[t])]);
    }
    sync_output_quant(c);
    return c;
}

ActionSequence SearchSpace::encode(const Candidate& c) const {
    if (c.arch.size() != base_.arch.size()) {
        throw ConfigError("candidate has " + std::to_string(c.arch.size()) + " layers, space '" + def_.name + "' has " +
                          std::to_string(base_.arch.size()));
    }
    ActionSequence out;
    out.reserve(decisions_.size());
    for (std::size_t t = 0; t < decisions_.size(); ++t) {
        const auto& d = decisions_[t];
        const int v = value_of(c, d);
        const auto it = std::find(d.choices.begin(), d.choices.end(), v);
        if (it == d.choices.end()) {
            throw ConfigError("value " + std::to_string(v) + " at step " + std::to_string(t) + " (" + to_string(d.kind) +
                              ", layer " + std::to_string(d.layer) + ") is not a choice of space '" + def_.name + "'");
        }
        out.push_back(static_cast<int>(it - d.choices.begin()));
    }
    return out;
}

BigCount space_size(const SearchSpace& space) {
    BigCount n = 1;
    for (const auto& d : space.decisions()) n *= d.choices.size();
    return n;
}

namespace {

QuantChoices searchable_quant() { return {{0, 1, 2, 3}, {0, 1, 2, 3, 4, 5, 6}}; }

} // namespace

SearchSpace rls_space(std::size_t devices) {
    SpaceDefinition def;
    def.name = "rls";
    const ConvChoices conv{{1, 3, 5, 7}, {1, 3, 5, 7}, {24, 36, 48, 64}, {0, 1}};
    for (int i = 0; i < 6; ++i) def.layers.emplace_back(conv);
    for (int i = 0; i < 2; ++i) def.layers.emplace_back(DenseChoices{{64, 128, 256, 512}});
    def.layers.emplace_back(OutputChoice{10});
    def.quant = searchable_quant();
    def.devices = devices;
    return SearchSpace(std::move(def));
}

SearchSpace vls_space(std::size_t devices) {
    SpaceDefinition def;
    def.name = "vls";
    const ConvChoices conv{{1, 3, 5, 7}, {1, 3, 5, 7}, {128, 256, 512, 1024}, {0, 1}};
    for (int i = 0; i < 8; ++i) def.layers.emplace_back(conv);
    for (int i = 0; i < 3; ++i) def.layers.emplace_back(DenseChoices{{256, 512, 1024, 2048}});
    def.layers.emplace_back(OutputChoice{10});
    def.quant = searchable_quant();
    def.devices = devices;
    return SearchSpace(std::move(def));
}

} // namespace cimnas
