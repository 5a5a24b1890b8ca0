#pragma once

#include "cimnas/evaluator.hpp"
#include "cimnas/search_space.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cimnas {

/// One evaluated episode. Replayable: evaluating `candidate` with `seed`
/// reproduces `eval` exactly.
struct HistoryRecord {
    std::size_t episode = 0;
    std::string phase;
    std::optional<std::size_t> batch; ///< controller batch; empty for the rNAS incumbent
    ActionSequence actions;
    Candidate candidate;
    Evaluation eval;
    double reward = 0.0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> parent; ///< episode the phase started from

    friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

using SearchHistory = std::vector<HistoryRecord>;

} // namespace cimnas
