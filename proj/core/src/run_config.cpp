#include "cimnas/run_config.hpp"

#include "cimnas/error.hpp"
#include "cimnas/serialization.hpp"

#include <json.hpp>

#include <set>
#include <type_traits>

namespace cimnas {

using Json = nlohmann::ordered_json;

namespace {

// Object reader that rejects keys nobody asked for.
class Obj {
public:
    Obj(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
    }

    template <class T>
    void get(const char* key, T& dst) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        dst = convert<T>(*it, path(key));
    }

    const Json* child(const char* key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown key '" + path(k) + "'");
        }
    }

    template <class T>
    static T convert(const Json& v, const std::string& where) {
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>) {
            ok = v.is_boolean();
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            ok = v.is_number_unsigned();
        } else if constexpr (std::is_integral_v<T>) {
            ok = v.is_number_integer();
        } else if constexpr (std::is_floating_point_v<T>) {
            ok = v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            ok = v.is_string();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number_integer(); });
        }
        if (!ok) throw ConfigError(where + " has the wrong type");
        return v.get<T>();
    }

private:
    const Json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

Json space_to(const SpaceDefinition& d) {
    Json layers = Json::array();
    for (const auto& l : d.layers) {
        if (const auto* c = std::get_if<ConvChoices>(&l)) {
            layers.push_back(
                {{"conv", {{"filter_h", c->filter_h}, {"filter_w", c->filter_w}, {"filters", c->filters}, {"pool", c->pool}}}});
        } else if (const auto* f = std::get_if<DenseChoices>(&l)) {
            layers.push_back({{"fc", {{"neurons", f->neurons}}}});
        } else {
            layers.push_back({{"output", std::get<OutputChoice>(l).classes}});
        }
    }
    Json j;
    j["name"] = d.name;
    j["layers"] = std::move(layers);
    j["quant"] = d.quant ? Json{{"int_bits", d.quant->int_bits}, {"frac_bits", d.quant->frac_bits}} : Json(nullptr);
    j["search_output_quant"] = d.search_output_quant;
    j["devices"] = d.devices;
    return j;
}

SpaceDefinition space_from(const Json& j) {
    Obj o(j, "custom_space");
    SpaceDefinition d;
    o.get("name", d.name);
    o.get("search_output_quant", d.search_output_quant);
    o.get("devices", d.devices);
    if (const Json* q = o.child("quant"); q && !q->is_null()) {
        Obj qo(*q, "custom_space.quant");
        QuantChoices qc;
        qo.get("int_bits", qc.int_bits);
        qo.get("frac_bits", qc.frac_bits);
        qo.finish();
        d.quant = qc;
    }
    const Json* layers = o.child("layers");
    if (!layers || !layers->is_array()) throw ConfigError("custom_space.layers must be an array");
    for (std::size_t i = 0; i < layers->size(); ++i) {
        const Json& l = (*layers)[i];
        const std::string where = "custom_space.layers[" + std::to_string(i) + "]";
        if (!l.is_object() || l.size() != 1) throw ConfigError(where + " must be a one-key object");
        const auto first = l.cbegin();
        const std::string key = first.key();
        const Json& val = first.value();
        if (key == "conv") {
            Obj c(val, where + ".conv");
            ConvChoices cc;
            c.get("filter_h", cc.filter_h);
            c.get("filter_w", cc.filter_w);
            c.get("filters", cc.filters);
            c.get("pool", cc.pool);
            c.finish();
            d.layers.emplace_back(std::move(cc));
        } else if (key == "fc") {
            Obj f(val, where + ".fc");
            DenseChoices dc;
            f.get("neurons", dc.neurons);
            f.finish();
            d.layers.emplace_back(std::move(dc));
        } else if (key == "output") {
            d.layers.emplace_back(OutputChoice{Obj::convert<int>(val, where + ".output")});
        } else {
            throw ConfigError(where + ": unknown layer type '" + key + "'");
        }
    }
    o.finish();
    return d;
}

Json device_to(const DeviceModel& d) {
    return {{"name", d.name},
            {"bits_per_cell", d.bits_per_cell},
            {"current_min_ua", d.current_min_ua},
            {"current_max_ua", d.current_max_ua},
            {"level_sigma_na", d.level_sigma_na}};
}

DeviceModel device_from(const Json& j, const std::string& where) {
    Obj o(j, where);
    DeviceModel d;
    o.get("name", d.name);
    o.get("bits_per_cell", d.bits_per_cell);
    o.get("current_min_ua", d.current_min_ua);
    o.get("current_max_ua", d.current_max_ua);
    o.get("level_sigma_na", d.level_sigma_na);
    o.finish();
    return d;
}

const std::set<std::string> kModes{"nas", "quantnas", "ptbnas", "rnas", "full"};

} // namespace

void RunConfig::validate() const {
    if (!kModes.count(mode)) throw ConfigError("mode must be one of nas, quantnas, ptbnas, rnas, full; got '" + mode + "'");
    if (space != "rls" && space != "vls" && space != "custom") {
        throw ConfigError("space must be rls, vls or custom; got '" + space + "'");
    }
    if (space == "custom" && !custom_space) throw ConfigError("space 'custom' needs a custom_space definition");
    if (space != "custom" && custom_space) throw ConfigError("custom_space is only allowed with space 'custom'");
    if (evaluator != "train" && evaluator != "synthetic") {
        throw ConfigError("evaluator must be train or synthetic; got '" + evaluator + "'");
    }
    make_devices(*this);
    (void)make_space(*this);
    phase.validate();
    controller.validate();
    reward.validate();
    if (technology_preset.empty()) technology.validate();
    if (array.rows < 1 || array.cols < 1) throw ConfigError("array dimensions must be positive");
    if (dataset.source != "synthetic" && dataset.source != "cifar10") {
        throw ConfigError("dataset.source must be synthetic or cifar10; got '" + dataset.source + "'");
    }
    if (dataset.source == "cifar10" && dataset.path.empty()) throw ConfigError("dataset.path is required for cifar10");
    if (dataset.train < 1 || dataset.test < 1) throw ConfigError("dataset split sizes must be positive");
    if (dataset.classes < 2) throw ConfigError("dataset.classes must be at least 2");
    if (dataset.image.channels < 1 || dataset.image.height < 1 || dataset.image.width < 1) {
        throw ConfigError("dataset.image must be positive");
    }
    if (!(dataset.separation >= 0.0)) throw ConfigError("dataset.separation must be non-negative");
    if (!(training.learning_rate > 0.0) || training.batch_size < 1) {
        throw ConfigError("training needs a positive learning rate and batch size");
    }
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (out.empty()) throw ConfigError("out must name a directory");
    if (mode == "rnas" && !incumbent) throw ConfigError("mode rnas needs an incumbent candidate");
}

RunConfig parse_run_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Obj o(j, "config");
    o.get("mode", c.mode);
    o.get("space", c.space);
    o.get("evaluator", c.evaluator);
    o.get("technology_preset", c.technology_preset);
    o.get("seed", c.seed);
    o.get("workers", c.workers);
    o.get("out", c.out);
    if (const Json* s = o.child("custom_space"); s && !s->is_null()) c.custom_space = space_from(*s);
    if (const Json* d = o.child("devices")) {
        if (!d->is_array()) throw ConfigError("config.devices must be an array");
        c.devices.clear();
        for (std::size_t i = 0; i < d->size(); ++i) {
            c.devices.push_back(device_from((*d)[i], "config.devices[" + std::to_string(i) + "]"));
        }
    }
    if (const Json* p = o.child("phase")) {
        Obj po(*p, "config.phase");
        po.get("episodes", c.phase.episodes);
        po.get("child_epochs", c.phase.child_epochs);
        po.get("top_k", c.phase.top_k);
        po.get("fine_tune_epochs", c.phase.fine_tune_epochs);
        po.get("rnas_steps", c.phase.rnas_steps);
        po.get("noise_trials", c.phase.noise_trials);
        po.get("hardware_reward_in_search", c.phase.hardware_reward_in_search);
        po.get("rnas_noise_aware", c.phase.rnas_noise_aware);
        po.finish();
    }
    if (const Json* p = o.child("controller")) {
        Obj co(*p, "config.controller");
        co.get("hidden_size", c.controller.hidden_size);
        co.get("embedding_size", c.controller.embedding_size);
        co.get("learning_rate", c.controller.learning_rate);
        co.get("baseline_decay", c.controller.baseline_decay);
        co.get("gamma", c.controller.gamma);
        co.get("batch_size", c.controller.batch_size);
        co.get("init_scale", c.controller.init_scale);
        co.get("zero_heads", c.controller.zero_heads);
        co.finish();
    }
    if (const Json* p = o.child("reward")) {
        Obj ro(*p, "config.reward");
        ro.get("beta", c.reward.beta);
        ro.get("w_latency", c.reward.w_latency);
        ro.get("w_energy", c.reward.w_energy);
        ro.get("w_area", c.reward.w_area);
        ro.get("latency_ref_ns", c.reward.latency_ref_ns);
        ro.get("energy_ref_pj", c.reward.energy_ref_pj);
        ro.get("area_ref_um2", c.reward.area_ref_um2);
        ro.finish();
    }
    if (const Json* p = o.child("technology")) {
        if (!p->is_object()) throw ConfigError("config.technology must be an object");
        for (const auto& [k, v] : p->items()) {
            set_technology_value(c.technology, k, Obj::convert<double>(v, "config.technology." + k));
        }
    }
    if (const Json* p = o.child("array")) {
        Obj ao(*p, "config.array");
        ao.get("rows", c.array.rows);
        ao.get("cols", c.array.cols);
        ao.finish();
    }
    if (const Json* p = o.child("dataset")) {
        Obj d(*p, "config.dataset");
        d.get("source", c.dataset.source);
        d.get("path", c.dataset.path);
        d.get("train", c.dataset.train);
        d.get("test", c.dataset.test);
        d.get("classes", c.dataset.classes);
        d.get("separation", c.dataset.separation);
        if (const Json* img = d.child("image")) {
            const auto v = Obj::convert<std::vector<int>>(*img, "config.dataset.image");
            if (v.size() != 3) throw ConfigError("config.dataset.image must be [channels, height, width]");
            c.dataset.image = {v[0], v[1], v[2]};
        }
        d.finish();
    }
    if (const Json* p = o.child("training")) {
        Obj t(*p, "config.training");
        t.get("learning_rate", c.training.learning_rate);
        t.get("batch_size", c.training.batch_size);
        t.finish();
    }
    if (const Json* p = o.child("incumbent"); p && !p->is_null()) {
        try {
            c.incumbent = parse_candidate_json(p->dump());
        } catch (const DataError& e) {
            throw ConfigError(std::string("config.incumbent: ") + e.what());
        }
    }
    o.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const DataError&) {
        throw ConfigError("cannot read config " + path.string());
    }
    return parse_run_config(text);
}

std::string emit_run_config(const RunConfig& c) {
    Json j;
    j["mode"] = c.mode;
    j["space"] = c.space;
    j["custom_space"] = c.custom_space ? space_to(*c.custom_space) : Json(nullptr);
    Json devices = Json::array();
    for (const auto& d : c.devices) devices.push_back(device_to(d));
    j["devices"] = std::move(devices);
    j["evaluator"] = c.evaluator;
    j["phase"] = {{"episodes", c.phase.episodes},
                  {"child_epochs", c.phase.child_epochs},
                  {"top_k", c.phase.top_k},
                  {"fine_tune_epochs", c.phase.fine_tune_epochs},
                  {"rnas_steps", c.phase.rnas_steps},
                  {"noise_trials", c.phase.noise_trials},
                  {"hardware_reward_in_search", c.phase.hardware_reward_in_search},
                  {"rnas_noise_aware", c.phase.rnas_noise_aware}};
    j["controller"] = {{"hidden_size", c.controller.hidden_size},
                       {"embedding_size", c.controller.embedding_size},
                       {"learning_rate", c.controller.learning_rate},
                       {"baseline_decay", c.controller.baseline_decay},
                       {"gamma", c.controller.gamma},
                       {"batch_size", c.controller.batch_size},
                       {"init_scale", c.controller.init_scale},
                       {"zero_heads", c.controller.zero_heads}};
    j["reward"] = {{"beta", c.reward.beta},
                   {"w_latency", c.reward.w_latency},
                   {"w_energy", c.reward.w_energy},
                   {"w_area", c.reward.w_area},
                   {"latency_ref_ns", c.reward.latency_ref_ns},
                   {"energy_ref_pj", c.reward.energy_ref_pj},
                   {"area_ref_um2", c.reward.area_ref_um2}};
    Json tech = Json::object();
    for (const auto& k : technology_keys()) {
        const double v = technology_value(c.technology, k);
        if (v == std::floor(v) && std::abs(v) < 1e9 && (k == "adc_bits" || k == "dac_bits" || k == "arrays_per_pe" ||
                                                        k == "columns_per_adc")) {
            tech[k] = static_cast<int>(v);
        } else {
            tech[k] = v;
        }
    }
    j["technology"] = std::move(tech);
    j["technology_preset"] = c.technology_preset;
    j["array"] = {{"rows", c.array.rows}, {"cols", c.array.cols}};
    j["dataset"] = {{"source", c.dataset.source},
                    {"path", c.dataset.path},
                    {"train", c.dataset.train},
                    {"test", c.dataset.test},
                    {"classes", c.dataset.classes},
                    {"image", {c.dataset.image.channels, c.dataset.image.height, c.dataset.image.width}},
                    {"separation", c.dataset.separation}};
    j["training"] = {{"learning_rate", c.training.learning_rate}, {"batch_size", c.training.batch_size}};
    j["incumbent"] = c.incumbent ? Json::parse(candidate_json(*c.incumbent)) : Json(nullptr);
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["out"] = c.out;
    return j.dump(2) + "\n";
}

void apply_env_overrides(RunConfig& cfg, const std::function<const char*(const char*)>& getenv) {
    const auto number = [&](const char* name, auto& dst, long long lo) {
        const char* v = getenv(name);
        if (!v) return;
        try {
            std::size_t used = 0;
            const long long x = std::stoll(v, &used);
            if (used != std::string(v).size() || x < lo) throw std::invalid_argument(name);
            dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
        } catch (const std::exception&) {
            throw ConfigError(std::string(name) + " must be an integer >= " + std::to_string(lo) + ", got '" + v + "'");
        }
    };
    number("CIMNAS_SEED", cfg.seed, 0);
    number("CIMNAS_WORKERS", cfg.workers, 1);
    number("CIMNAS_EPISODES", cfg.phase.episodes, 1);
    if (const char* v = getenv("CIMNAS_OUT"); v && *v) cfg.out = v;
}

DeviceLibrary make_devices(const RunConfig& cfg) {
    if (cfg.devices.empty()) throw ConfigError("the device library is empty");
    for (const auto& d : cfg.devices) d.validate();
    return DeviceLibrary(cfg.devices);
}

SearchSpace make_space(const RunConfig& cfg) {
    const std::size_t n = cfg.devices.size();
    if (cfg.space == "rls") return rls_space(n);
    if (cfg.space == "vls") return vls_space(n);
    if (!cfg.custom_space) throw ConfigError("space 'custom' needs a custom_space definition");
    if (cfg.custom_space->devices > n) {
        throw ConfigError("custom space searches " + std::to_string(cfg.custom_space->devices) +
                          " devices but the library has " + std::to_string(n));
    }
    return SearchSpace(*cfg.custom_space);
}

TechnologyParams resolve_technology(const RunConfig& cfg, const std::filesystem::path& base_dir) {
    if (cfg.technology_preset.empty()) return cfg.technology;
    std::filesystem::path p = cfg.technology_preset;
    if (p.is_relative() && !base_dir.empty() && !std::filesystem::exists(p)) p = base_dir / p;
    return load_cost_preset(p);
}

DatasetSplits load_dataset(const RunConfig& cfg) {
    const std::uint64_t seed = derive_seed(cfg.seed, {0xDA7A});
    if (cfg.dataset.source == "cifar10") {
        return ingest_cifar10(cfg.dataset.path, cfg.dataset.train, cfg.dataset.test, seed);
    }
    const std::size_t n = cfg.dataset.train + cfg.dataset.test;
    Dataset all = synth_dataset(cfg.dataset.classes, n, cfg.dataset.image, cfg.dataset.separation, seed);
    std::vector<std::size_t> train_idx(cfg.dataset.train);
    std::vector<std::size_t> test_idx(cfg.dataset.test);
    for (std::size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = i;
    for (std::size_t i = 0; i < test_idx.size(); ++i) test_idx[i] = cfg.dataset.train + i;
    return {all.subset(train_idx), all.subset(test_idx)};
}

} // namespace cimnas
