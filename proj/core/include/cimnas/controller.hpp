#pragma once

// Recurrent stochastic policy over action sequences and its REINFORCE update.
//
// A single gated recurrent cell runs one step per decision. The input at step
// t is a learned embedding of the action taken at step t-1 (a learned start
// vector at t = 0); a per-step linear head turns the hidden state into logits
// over that step's choices.

#include "cimnas/cost_model.hpp"
#include "cimnas/random.hpp"
#include "cimnas/search_space.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cimnas {

struct ControllerConfig {
    int hidden_size = 64;
    int embedding_size = 32;
    double learning_rate = 0.01;
    double baseline_decay = 0.2;
    double gamma = 1.0;
    int batch_size = 5; ///< m, episodes per update
    /// Scale of the uniform init of recurrent weights and embeddings.
    double init_scale = 0.1;
    /// Zero output heads give an exactly uniform initial policy.
    bool zero_heads = true;

    void validate() const;
    friend bool operator==(const ControllerConfig&, const ControllerConfig&) = default;
};

struct EpisodeRecord {
    ActionSequence actions;
    std::vector<double> log_probs;
    double reward = 0.0;
};

struct UpdateResult {
    bool applied = false;
    double baseline_used = 0.0;
    double gradient_norm = 0.0;
    std::string event; ///< reason when not applied
};

class Controller {
public:
    Controller(std::vector<int> choice_counts, ControllerConfig cfg, std::uint64_t seed);

    const ControllerConfig& config() const noexcept { return cfg_; }
    const std::vector<int>& choice_counts() const noexcept { return counts_; }
    std::size_t steps() const noexcept { return counts_.size(); }

    std::span<const double> parameters() const noexcept { return theta_; }
    std::span<double> parameters() noexcept { return theta_; }
    void set_parameters(std::vector<double> theta);

    double baseline() const noexcept { return baseline_; }
    bool baseline_initialized() const noexcept { return baseline_set_; }
    void set_baseline(double b, bool initialized);
    /// b <- (1 - decay) b + decay * batch_mean; the first call sets b = batch_mean.
    void update_baseline(double batch_mean);

    /// Sequential sampling; each step draws uniform01 against the cumulative distribution.
    EpisodeRecord sample(Rng& rng) const;
    /// Argmax at every step, lowest index on ties.
    ActionSequence greedy() const;
    /// Per-step distributions along a fixed action sequence.
    std::vector<std::vector<double>> distributions(const ActionSequence& actions) const;
    double log_prob(const ActionSequence& actions) const;

    /// (1/m) sum_k sum_t gamma^(T-t) log pi(a_t | a_<t) (R_k - b).
    double surrogate(std::span<const EpisodeRecord> episodes, double baseline) const;
    /// Analytic gradient of surrogate() by backpropagation through time.
    std::vector<double> surrogate_gradient(std::span<const EpisodeRecord> episodes, double baseline) const;

    /// One ascent step with the current baseline, then the baseline update.
    /// A non-finite gradient skips the step (the baseline is still updated).
    UpdateResult update(std::span<const EpisodeRecord> episodes);

private:
    struct Layout {
        std::size_t start = 0;     // E
        std::vector<std::size_t> embed; // per step t >= 1: counts[t-1] x E
        std::size_t wx = 0;        // 3 gates x H x E  (z, r, n)
        std::size_t uh = 0;        // 3 gates x H x H
        std::size_t bias = 0;      // 3 gates x H
        std::vector<std::size_t> head_w; // counts[t] x H
        std::vector<std::size_t> head_b; // counts[t]
        std::size_t total = 0;
    };
    struct StepCache;

    void forward(const ActionSequence* actions, Rng* rng, bool greedy, std::vector<StepCache>& cache,
                 ActionSequence& taken) const;

    std::vector<int> counts_;
    ControllerConfig cfg_;
    Layout layout_;
    std::vector<double> theta_;
    double baseline_ = 0.0;
    bool baseline_set_ = false;
};

struct RewardConfig {
    double beta = 0.5;
    double w_latency = 1.0 / 3.0;
    double w_energy = 1.0 / 3.0;
    double w_area = 1.0 / 3.0;
    double latency_ref_ns = 1e6;
    double energy_ref_pj = 1e8;
    double area_ref_um2 = 1e7;

    void validate() const;
    friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

/// sum_i w_i max(0, 1 - metric_i / ref_i); higher is better, in [0, 1].
double hardware_score(const HardwareMetrics& metrics, const RewardConfig& cfg);
/// beta * alpha + (1 - beta) * hardware_score. `metrics` may be null only when beta == 1.
double compute_reward(double alpha, const HardwareMetrics* metrics, const RewardConfig& cfg);

} // namespace cimnas
