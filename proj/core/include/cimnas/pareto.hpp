#pragma once

#include "cimnas/history.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cimnas {

enum class Metric { AlphaNoisy, AlphaClean, Reward, Latency, Energy, Area, Edp };
enum class Sense { Maximize, Minimize };

struct Objective {
    Metric metric;
    Sense sense;
    friend bool operator==(const Objective&, const Objective&) = default;
};

const char* to_string(Metric m);
/// "alpha_noisy:max,latency:min". Metric names: alpha_noisy, alpha_clean,
/// reward, latency, energy, area, edp. Throws ConfigError.
std::vector<Objective> parse_objectives(const std::string& text);
std::string format_objectives(const std::vector<Objective>& objectives);

/// Value of `m` for a record; nullopt for infeasible or failed records and
/// for hardware metrics that were not computed.
std::optional<double> metric_value(const HistoryRecord& r, Metric m);

/// True when `a` is no worse than `b` everywhere and strictly better somewhere;
/// both points are to be minimized.
bool dominates(const std::vector<double>& a, const std::vector<double>& b);

/// Indices of the nondominated points (all coordinates minimized), ascending.
/// Lexicographic sort, then each point is kept unless a kept point dominates it.
std::vector<std::size_t> nondominated(const std::vector<std::vector<double>>& points);

/// Nondominated records among those with every objective defined, in episode order.
SearchHistory pareto_front(const SearchHistory& history, const std::vector<Objective>& objectives);

} // namespace cimnas
