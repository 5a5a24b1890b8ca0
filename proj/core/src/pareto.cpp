#include "cimnas/pareto.hpp"

#include "cimnas/error.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace cimnas {

namespace {

constexpr Metric kMetrics[] = {Metric::AlphaNoisy, Metric::AlphaClean, Metric::Reward, Metric::Latency,
                               Metric::Energy,     Metric::Area,       Metric::Edp};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

} // namespace

const char* to_string(Metric m) {
    switch (m) {
    case Metric::AlphaNoisy: return "alpha_noisy";
    case Metric::AlphaClean: return "alpha_clean";
    case Metric::Reward: return "reward";
    case Metric::Latency: return "latency";
    case Metric::Energy: return "energy";
    case Metric::Area: return "area";
    case Metric::Edp: return "edp";
    }
    return "?";
}

std::vector<Objective> parse_objectives(const std::string& text) {
    std::vector<Objective> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("objective '" + item + "' must be metric:max or metric:min");
        const std::string name = trim(item.substr(0, colon));
        const std::string sense = trim(item.substr(colon + 1));
        const auto it = std::find_if(std::begin(kMetrics), std::end(kMetrics),
                                     [&](Metric m) { return name == to_string(m); });
        if (it == std::end(kMetrics)) throw ConfigError("unknown objective metric '" + name + "'");
        if (sense != "max" && sense != "min") throw ConfigError("objective sense must be max or min, got '" + sense + "'");
        out.push_back({*it, sense == "max" ? Sense::Maximize : Sense::Minimize});
    }
    if (out.empty()) throw ConfigError("at least one objective is required");
    return out;
}

std::string format_objectives(const std::vector<Objective>& objectives) {
    std::string s;
    for (const auto& o : objectives) {
        if (!s.empty()) s += ',';
        s += to_string(o.metric);
        s += o.sense == Sense::Maximize ? ":max" : ":min";
    }
    return s;
}

std::optional<double> metric_value(const HistoryRecord& r, Metric m) {
    if (!r.eval.feasible || r.eval.failed) return std::nullopt;
    switch (m) {
    case Metric::AlphaNoisy: return r.eval.alpha_noisy;
    case Metric::AlphaClean: return r.eval.alpha_clean;
    case Metric::Reward: return r.reward;
    default: break;
    }
    if (!r.eval.metrics) return std::nullopt;
    const auto& hw = *r.eval.metrics;
    switch (m) {
    case Metric::Latency: return hw.latency_ns;
    case Metric::Energy: return hw.energy_pj;
    case Metric::Area: return hw.area_um2;
    case Metric::Edp: return hw.edp_pj_ns;
    default: return std::nullopt;
    }
}

bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

std::vector<std::size_t> nondominated(const std::vector<std::vector<double>>& points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // A dominator is lexicographically smaller, so it is always visited first.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    std::vector<std::size_t> front;
    for (auto i : order) {
        const bool beaten =
            std::any_of(front.begin(), front.end(), [&](std::size_t f) { return dominates(points[f], points[i]); });
        if (!beaten) front.push_back(i);
    }
    std::sort(front.begin(), front.end());
    return front;
}

SearchHistory pareto_front(const SearchHistory& history, const std::vector<Objective>& objectives) {
    if (objectives.empty()) throw ConfigError("at least one objective is required");
    std::vector<std::size_t> owners;
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < history.size(); ++i) {
        std::vector<double> p;
        for (const auto& o : objectives) {
            const auto v = metric_value(history[i], o.metric);
            if (!v) break;
            p.push_back(o.sense == Sense::Maximize ? -*v : *v);
        }
        if (p.size() != objectives.size()) continue;
        owners.push_back(i);
        points.push_back(std::move(p));
    }
    SearchHistory out;
    for (auto k : nondominated(points)) out.push_back(history[owners[k]]);
    std::stable_sort(out.begin(), out.end(),
                     [](const HistoryRecord& a, const HistoryRecord& b) { return a.episode < b.episode; });
    return out;
}

} // namespace cimnas
