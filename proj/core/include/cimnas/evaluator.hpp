#pragma once

#include "cimnas/cost_model.hpp"
#include "cimnas/dataset.hpp"
#include "cimnas/device.hpp"
#include "cimnas/network.hpp"
#include "cimnas/search_space.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

namespace cimnas {

struct Evaluation {
    bool feasible = true;
    bool failed = false;
    std::string error;
    double alpha_clean = 0.0; ///< accuracy without device variation
    double alpha_noisy = 0.0; ///< mean accuracy over noisy trials
    double alpha_std = 0.0;   ///< std-dev of accuracy across noisy trials
    std::optional<HardwareMetrics> metrics;

    friend bool operator==(const Evaluation&, const Evaluation&) = default;
};

/// Turns a candidate into accuracy and hardware figures. Implementations are
/// called concurrently from worker threads and must be deterministic in
/// (candidate, seed).
class CandidateEvaluator {
public:
    virtual ~CandidateEvaluator() = default;
    virtual Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) const = 0;
    virtual FeatureShape input_shape() const = 0;
};

struct HardwareContext {
    DeviceLibrary devices = DeviceLibrary::defaults();
    TechnologyParams tech;
    SynapticArray array;
    bool compute_metrics = true;
};

/// Hardware metrics for a candidate, or nullopt when it does not fit on the chip grid.
std::optional<HardwareMetrics> candidate_metrics(const Candidate& c, FeatureShape input, const HardwareContext& hw);

struct ChildTraining {
    TrainConfig train{0.05, 30, 32, 0};
    bool noise_aware = true;
    int noise_trials = 20;
};

/// Trains each candidate from scratch on the training split and measures it on the test split.
class TrainingEvaluator : public CandidateEvaluator {
public:
    TrainingEvaluator(DatasetSplits data, HardwareContext hw, ChildTraining cfg);

    Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) const override;
    FeatureShape input_shape() const override { return data_.train.image_shape(); }

    struct Trained {
        Network net;
        Evaluation eval;
    };
    /// Same run as evaluate() continued for `extra_epochs` more epochs.
    /// nullopt for infeasible candidates or diverged training.
    std::optional<Trained> train_candidate(const Candidate& candidate, std::uint64_t seed, int extra_epochs = 0) const;
    /// Accuracy of already-trained weights under the candidate's quantization and
    /// device. Without noise, alpha_noisy repeats alpha_clean.
    Evaluation assess(const Network& net, const Candidate& candidate, std::uint64_t seed,
                      bool with_noise = true) const;

    const DatasetSplits& data() const noexcept { return data_; }
    const HardwareContext& hardware() const noexcept { return hw_; }
    const ChildTraining& config() const noexcept { return cfg_; }

private:
    DatasetSplits data_;
    HardwareContext hw_;
    ChildTraining cfg_;
};

/// Re-quantizes fixed trained weights for every candidate (no retraining).
/// Candidates must share the trained architecture. Results are memoized by
/// (quantization, device, seed).
class RequantizingEvaluator : public CandidateEvaluator {
public:
    RequantizingEvaluator(const TrainingEvaluator& base, Network trained, bool noise_aware);

    Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) const override;
    FeatureShape input_shape() const override { return base_.input_shape(); }
    std::size_t cache_size() const;

private:
    const TrainingEvaluator& base_;
    Network net_;
    bool noise_aware_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, Evaluation> cache_;
};

/// Closed-form accuracy proxy plus the real cost model. Deterministic and
/// seed-independent; used for dry runs, benchmarks and controller tests.
///   alpha_clean = 0.1 + 0.85 * (1 - exp(-params / capacity_scale)) * mean_l q_l
///   q_l = (1 - 2^-weight_bits_l) * (1 - 2^-act_bits_l)   (1 at full precision)
///   alpha_noisy = alpha_clean * max(0, 1 - noise_gain * mean_l sigma_l / fmt_max_l)
class SyntheticEvaluator : public CandidateEvaluator {
public:
    SyntheticEvaluator(FeatureShape input, HardwareContext hw, double capacity_scale = 2e4, double noise_gain = 2.0);

    Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) const override;
    FeatureShape input_shape() const override { return input_; }

private:
    FeatureShape input_;
    HardwareContext hw_;
    double capacity_scale_;
    double noise_gain_;
};

/// Wraps a callable; handy for toy objectives.
class FunctionEvaluator : public CandidateEvaluator {
public:
    using Fn = std::function<Evaluation(const Candidate&, std::uint64_t)>;
    FunctionEvaluator(FeatureShape input, Fn fn) : input_(input), fn_(std::move(fn)) {}
    Evaluation evaluate(const Candidate& candidate, std::uint64_t seed) const override { return fn_(candidate, seed); }
    FeatureShape input_shape() const override { return input_; }

private:
    FeatureShape input_;
    Fn fn_;
};

} // namespace cimnas
