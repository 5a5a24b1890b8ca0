#include "cimnas/serialization.hpp"

#include "cimnas/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace cimnas {

using Json = nlohmann::ordered_json;

namespace {

Json candidate_to(const Candidate& c) {
    Json layers = Json::array();
    for (const auto& l : c.arch.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&l)) {
            layers.push_back({{"conv", {conv->filter_h, conv->filter_w, conv->filters, conv->pool ? 1 : 0}}});
        } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
            layers.push_back({{"fc", {d->neurons}}});
        } else {
            layers.push_back({{"output", std::get<OutputLayer>(l).classes}});
        }
    }
    Json j;
    j["layers"] = std::move(layers);
    if (c.quant) {
        Json q = Json::array();
        for (const auto& b : *c.quant) q.push_back({b.weight_int, b.weight_frac, b.act_int, b.act_frac});
        j["quant"] = std::move(q);
    } else {
        j["quant"] = nullptr;
    }
    j["device"] = c.device;
    return j;
}

std::vector<int> int_list(const Json& j, const std::string& what) {
    if (!j.is_array()) throw DataError(what + " must be an array");
    std::vector<int> out;
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw DataError(what + " must hold integers");
        out.push_back(v.get<int>());
    }
    return out;
}

Candidate candidate_from(const Json& j) {
    Candidate c;
    for (const auto& l : j.at("layers")) {
        if (!l.is_object() || l.size() != 1) throw DataError("each layer must be a one-key object");
        const auto first = l.cbegin();
        const std::string key = first.key();
        const Json& val = first.value();
        if (key == "conv") {
            const auto v = int_list(val, "conv tuple");
            if (v.size() != 4) throw DataError("conv tuple needs 4 values");
            c.arch.layers.emplace_back(ConvLayer{v[0], v[1], v[2], v[3] != 0});
        } else if (key == "fc") {
            const auto v = int_list(val, "fc tuple");
            if (v.size() != 1) throw DataError("fc tuple needs 1 value");
            c.arch.layers.emplace_back(DenseLayer{v[0]});
        } else if (key == "output") {
            c.arch.layers.emplace_back(OutputLayer{val.get<int>()});
        } else {
            throw DataError("unknown layer type '" + key + "'");
        }
    }
    const auto& q = j.at("quant");
    if (!q.is_null()) {
        std::vector<LayerQuantBits> bits;
        for (const auto& e : q) {
            const auto v = int_list(e, "quant tuple");
            if (v.size() != 4) throw DataError("quant tuple needs 4 values");
            bits.push_back({v[0], v[1], v[2], v[3]});
        }
        c.quant = std::move(bits);
    }
    c.device = j.at("device").get<std::size_t>();
    return c;
}

Json metrics_to(const HardwareMetrics& m) {
    return {{"latency_ns", m.latency_ns},       {"energy_pj", m.energy_pj},
            {"area_um2", m.area_um2},           {"edp_pj_ns", m.edp_pj_ns},
            {"throughput_tops", m.throughput_tops}, {"efficiency_tops_per_w", m.efficiency_tops_per_w}};
}

HardwareMetrics metrics_from(const Json& j) {
    HardwareMetrics m;
    m.latency_ns = j.at("latency_ns").get<double>();
    m.energy_pj = j.at("energy_pj").get<double>();
    m.area_um2 = j.at("area_um2").get<double>();
    m.edp_pj_ns = j.at("edp_pj_ns").get<double>();
    m.throughput_tops = j.at("throughput_tops").get<double>();
    m.efficiency_tops_per_w = j.at("efficiency_tops_per_w").get<double>();
    return m;
}

template <class F>
auto parse_or_throw(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw DataError(what + ": " + e.what());
    }
}

} // namespace

std::string candidate_json(const Candidate& c) { return candidate_to(c).dump(); }

Candidate parse_candidate_json(const std::string& text) {
    return parse_or_throw("candidate", [&] { return candidate_from(Json::parse(text)); });
}

std::string metrics_json(const HardwareMetrics& m) { return metrics_to(m).dump(); }

std::string history_line(const HistoryRecord& r) {
    Json j;
    j["episode"] = r.episode;
    j["phase"] = r.phase;
    j["batch"] = r.batch ? Json(*r.batch) : Json(nullptr);
    j["actions"] = r.actions;
    j["candidate"] = candidate_to(r.candidate);
    j["feasible"] = r.eval.feasible;
    j["failed"] = r.eval.failed;
    j["error"] = r.eval.error;
    j["alpha_clean"] = r.eval.alpha_clean;
    j["alpha_noisy"] = r.eval.alpha_noisy;
    j["alpha_std"] = r.eval.alpha_std;
    j["metrics"] = r.eval.metrics ? metrics_to(*r.eval.metrics) : Json(nullptr);
    j["reward"] = r.reward;
    j["seed"] = r.seed;
    j["parent"] = r.parent ? Json(*r.parent) : Json(nullptr);
    return j.dump();
}

HistoryRecord parse_history_line(const std::string& line) {
    return parse_or_throw("history record", [&] {
        const Json j = Json::parse(line);
        HistoryRecord r;
        r.episode = j.at("episode").get<std::size_t>();
        r.phase = j.at("phase").get<std::string>();
        if (!j.at("batch").is_null()) r.batch = j.at("batch").get<std::size_t>();
        r.actions = j.at("actions").get<std::vector<int>>();
        r.candidate = candidate_from(j.at("candidate"));
        r.eval.feasible = j.at("feasible").get<bool>();
        r.eval.failed = j.at("failed").get<bool>();
        r.eval.error = j.at("error").get<std::string>();
        r.eval.alpha_clean = j.at("alpha_clean").get<double>();
        r.eval.alpha_noisy = j.at("alpha_noisy").get<double>();
        r.eval.alpha_std = j.at("alpha_std").get<double>();
        if (!j.at("metrics").is_null()) r.eval.metrics = metrics_from(j.at("metrics"));
        r.reward = j.at("reward").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        if (!j.at("parent").is_null()) r.parent = j.at("parent").get<std::size_t>();
        return r;
    });
}

SearchHistory read_history(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open history " + path.string());
    SearchHistory h;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            h.push_back(parse_history_line(line));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return h;
}

std::string checkpoint_json(const ControllerCheckpoint& ck) {
    Json j;
    j["version"] = ControllerCheckpoint::kVersion;
    j["phase"] = ck.phase;
    j["completed"] = ck.completed;
    j["baseline"] = ck.baseline;
    j["baseline_set"] = ck.baseline_set;
    j["theta"] = ck.theta;
    return j.dump();
}

ControllerCheckpoint parse_checkpoint(const std::string& text) {
    return parse_or_throw("checkpoint", [&] {
        const Json j = Json::parse(text);
        const int version = j.at("version").get<int>();
        if (version != ControllerCheckpoint::kVersion) {
            throw DataError("unsupported checkpoint version " + std::to_string(version));
        }
        ControllerCheckpoint ck;
        ck.phase = j.at("phase").get<std::string>();
        ck.completed = j.at("completed").get<std::size_t>();
        ck.baseline = j.at("baseline").get<double>();
        ck.baseline_set = j.at("baseline_set").get<bool>();
        ck.theta = j.at("theta").get<std::vector<double>>();
        return ck;
    });
}

ArchFile parse_arch_file(const std::string& text) {
    return parse_or_throw("architecture file", [&] {
        const Json j = Json::parse(text);
        for (const auto& [key, _] : j.items()) {
            if (key != "input" && key != "device" && key != "layers") {
                throw DataError("unknown key '" + key + "' in architecture file");
            }
        }
        ArchFile f;
        if (j.contains("input")) {
            const auto v = int_list(j["input"], "input");
            if (v.size() != 3) throw DataError("input must be [channels, height, width]");
            f.input = {v[0], v[1], v[2]};
        }
        if (j.contains("device")) f.device = j["device"].get<std::string>();
        std::vector<LayerQuantBits> bits;
        std::size_t with_quant = 0;
        const auto take_quant = [&](const std::vector<int>& v, std::size_t from) {
            if (v.size() == from) {
                bits.push_back({});
                return;
            }
            if (v.size() != from + 4) throw DataError("layer tuple has " + std::to_string(v.size()) + " values");
            bits.push_back({v[from], v[from + 1], v[from + 2], v[from + 3]});
            ++with_quant;
        };
        bool has_output = false;
        for (const auto& l : j.at("layers")) {
            if (!l.is_object() || l.size() != 1) throw DataError("each layer must be a one-key object");
            const auto first = l.cbegin();
            const std::string key = first.key();
            const Json& val = first.value();
            if (has_output) throw DataError("output layer must be last");
            if (key == "conv") {
                const auto v = int_list(val, "conv tuple");
                if (v.size() < 4) throw DataError("conv tuple needs at least (FH, FW, #F, P)");
                f.candidate.arch.layers.emplace_back(ConvLayer{v[0], v[1], v[2], v[3] != 0});
                take_quant(v, 4);
            } else if (key == "fc") {
                const auto v = int_list(val, "fc tuple");
                if (v.empty()) throw DataError("fc tuple needs the neuron count");
                f.candidate.arch.layers.emplace_back(DenseLayer{v[0]});
                take_quant(v, 1);
            } else if (key == "output") {
                f.candidate.arch.layers.emplace_back(OutputLayer{val.get<int>()});
                has_output = true;
            } else {
                throw DataError("unknown layer type '" + key + "'");
            }
        }
        if (!has_output) f.candidate.arch.layers.emplace_back(OutputLayer{10});
        if (with_quant > 0) {
            if (with_quant != bits.size()) throw DataError("either every layer tuple carries quantization or none does");
            if (bits.empty()) throw DataError("quantized architecture needs a layer before the output");
            bits.push_back(bits.back());
            f.candidate.quant = std::move(bits);
        }
        return f;
    });
}

ArchFile load_arch_file(const std::filesystem::path& path) { return parse_arch_file(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeError("cannot write " + tmp.string());
        out << text;
        if (!out) throw RuntimeError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace cimnas
