#pragma once

#include "cimnas/controller.hpp"
#include "cimnas/evaluator.hpp"
#include "cimnas/history.hpp"
#include "cimnas/search_space.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cimnas {

struct SelectorSwitches {
    bool sa = true; ///< architecture
    bool sq = false; ///< quantization
    bool sd = false; ///< device variation
    bool sc = false; ///< circuit
    friend bool operator==(const SelectorSwitches&, const SelectorSwitches&) = default;
};

enum class SearchMode { Nas, QuantNas, PtbNas, RNas };

const char* to_string(SearchMode mode);
SearchMode parse_search_mode(const std::string& name);

struct PipelineDescriptor {
    SearchMode mode;
    bool search_architecture;
    bool search_quantization;
    bool search_device;
    bool noise_aware;        ///< train and evaluate under device variation
    bool hardware_in_reward; ///< cost model enters the reward by default
};

/// Accepts (1,0,0,0) nas, (1,1,0,0) quantnas, (1,1,1,0) ptbnas, (0,1,0,1) rnas.
/// Throws ConfigError for every other combination.
PipelineDescriptor select_mode(const SelectorSwitches& sw);
SelectorSwitches switches_for(SearchMode mode);

struct PhaseConfig {
    int episodes = 500;
    int child_epochs = 30;
    int top_k = 40;
    int fine_tune_epochs = 200;
    int rnas_steps = 100;
    int noise_trials = 20;
    /// Use the full reward (with hardware) during the architecture phase; by
    /// default that phase is rewarded by accuracy alone.
    bool hardware_reward_in_search = false;
    /// rNAS scores accuracy under device variation (otherwise noiseless).
    bool rnas_noise_aware = true;

    void validate() const;
    friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

struct ControllerCheckpoint {
    static constexpr int kVersion = 1;
    std::string phase;
    std::size_t completed = 0; ///< episodes of this phase already in the history
    std::vector<double> theta;
    double baseline = 0.0;
    bool baseline_set = false;
    friend bool operator==(const ControllerCheckpoint&, const ControllerCheckpoint&) = default;
};

struct SearchSettings {
    std::string phase = "search";
    std::size_t episodes = 0;
    std::size_t first_episode_id = 0;
    ControllerConfig controller;
    RewardConfig reward;
    std::uint64_t seed = 0;
    int workers = 1;
    std::optional<std::size_t> parent;
    /// Every episode is evaluated with this seed instead of a per-episode one.
    std::optional<std::uint64_t> shared_eval_seed;
};

struct SearchHooks {
    std::function<void(const HistoryRecord&)> on_record;
    std::function<void(const ControllerCheckpoint&)> on_checkpoint;
    std::function<void(const std::string&)> on_event;
};

struct SearchOutcome {
    SearchHistory history;
    std::vector<double> theta;
    ActionSequence greedy;
    std::vector<UpdateResult> updates;
};

/// Reward of an evaluation: 0 for infeasible or failed candidates and for
/// candidates that lack the metrics a beta < 1 reward needs.
double episode_reward(const Evaluation& e, const RewardConfig& reward);

std::uint64_t phase_tag(const std::string& phase);
std::uint64_t episode_sample_seed(std::uint64_t master, const std::string& phase, std::size_t episode);
std::uint64_t episode_eval_seed(std::uint64_t master, const std::string& phase, std::size_t episode);

/// Sample, evaluate (on up to `workers` threads), reward and update every
/// controller batch. `resume` continues from a checkpoint; its history must
/// hold exactly the checkpointed episodes of this phase.
SearchOutcome run_controller_search(const SearchSpace& space, const CandidateEvaluator& evaluator,
                                    const SearchSettings& settings, const SearchHooks& hooks = {},
                                    const ControllerCheckpoint* resume = nullptr,
                                    const SearchHistory* resume_history = nullptr);

/// Restrict `space` to the decisions `mode` searches. Unsearched values come
/// from the space base; `nas` pins full precision and device 0.
SearchSpace space_for_mode(const SearchSpace& space, SearchMode mode);

/// Architecture-phase search: the reward is accuracy under variation alone
/// unless `hardware_in_reward`.
SearchOutcome run_ptbnas(const SearchSpace& space, SearchMode mode, const CandidateEvaluator& evaluator,
                         SearchSettings settings, bool hardware_in_reward, const SearchHooks& hooks = {},
                         const ControllerCheckpoint* resume = nullptr, const SearchHistory* resume_history = nullptr);

/// Quantization refinement on a fixed architecture and device. The incumbent
/// is evaluated first (its record has no batch), then settings.episodes
/// controller episodes over the quantization decisions only. All episodes
/// share one evaluation seed.
SearchOutcome run_rnas(const SearchSpace& space, const Candidate& incumbent, const CandidateEvaluator& evaluator,
                       SearchSettings settings, const SearchHooks& hooks = {});

/// Indices of the top min(k, n) evaluated records by alpha_noisy, ties by episode id.
std::vector<std::size_t> select_top_k(const SearchHistory& history, std::size_t k);

struct FineTuned {
    HistoryRecord record;
    Network net;
    Evaluation before;
    Evaluation after;
};

/// Replays each selected record's training from its seed and continues for `epochs` more.
std::vector<FineTuned> fine_tune_top_k(const SearchHistory& history, std::size_t k, int epochs,
                                       const TrainingEvaluator& evaluator, int workers = 1);

/// Index of the highest-reward record (lowest episode id on ties); nullopt when empty.
std::optional<std::size_t> best_record(const SearchHistory& history);

} // namespace cimnas
