#include "cimnas/evaluator.hpp"

#include "cimnas/error.hpp"

#include <cmath>
#include <sstream>

namespace cimnas {

std::optional<HardwareMetrics> candidate_metrics(const Candidate& c, FeatureShape input, const HardwareContext& hw) {
    const auto scheme = c.scheme();
    try {
        return evaluate_hardware(c.arch, input, scheme ? &*scheme : nullptr, hw.devices.at(c.device), hw.tech,
                                 hw.array);
    } catch (const RuntimeError&) {
        return std::nullopt;
    }
}

namespace {

std::string check_candidate(const Candidate& c, FeatureShape input, const HardwareContext& hw) {
    if (c.device >= hw.devices.size()) {
        return "device index " + std::to_string(c.device) + " outside the library of " +
               std::to_string(hw.devices.size());
    }
    return infeasibility(c, input);
}

Evaluation infeasible(std::string reason) {
    Evaluation e;
    e.feasible = false;
    e.error = std::move(reason);
    return e;
}

} // namespace

TrainingEvaluator::TrainingEvaluator(DatasetSplits data, HardwareContext hw, ChildTraining cfg)
    : data_(std::move(data)), hw_(std::move(hw)), cfg_(cfg) {
    data_.train.validate();
    data_.test.validate();
    if (data_.train.size() == 0) throw DataError("training split is empty");
    if (data_.test.size() == 0) throw DataError("test split is empty");
    if (cfg_.noise_trials < 1) throw ConfigError("noise trials must be at least 1");
}

Evaluation TrainingEvaluator::assess(const Network& net, const Candidate& candidate, std::uint64_t seed,
                                     bool with_noise) const {
    const auto scheme = candidate.scheme();
    const QuantizationScheme* q = scheme ? &*scheme : nullptr;
    const DeviceModel& device = hw_.devices.at(candidate.device);

    Evaluation e;
    Rng clean_rng(derive_seed(seed, {2}));
    e.alpha_clean = evaluate_accuracy(net, data_.test, q, nullptr, 1, clean_rng);
    if (with_noise) {
        const NoiseSpec noise = make_noise_spec(device, q, net.layers());
        Rng noise_rng(derive_seed(seed, {3}));
        double sum = 0.0;
        double sum2 = 0.0;
        for (int t = 0; t < cfg_.noise_trials; ++t) {
            const double a = evaluate_accuracy(net, data_.test, q, &noise, 1, noise_rng);
            sum += a;
            sum2 += a * a;
        }
        const double n = cfg_.noise_trials;
        e.alpha_noisy = sum / n;
        e.alpha_std = std::sqrt(std::max(0.0, sum2 / n - e.alpha_noisy * e.alpha_noisy));
    } else {
        e.alpha_noisy = e.alpha_clean;
    }
    if (hw_.compute_metrics) e.metrics = candidate_metrics(candidate, input_shape(), hw_);
    return e;
}

std::optional<TrainingEvaluator::Trained> TrainingEvaluator::train_candidate(const Candidate& candidate,
                                                                             std::uint64_t seed,
                                                                             int extra_epochs) const {
    if (!check_candidate(candidate, input_shape(), hw_).empty()) return std::nullopt;
    const auto scheme = candidate.scheme();
    const QuantizationScheme* q = scheme ? &*scheme : nullptr;
    NoiseSpec noise;
    if (cfg_.noise_aware) noise = make_noise_spec(hw_.devices.at(candidate.device), q, candidate.arch.size());

    TrainConfig tc = cfg_.train;
    tc.rng_seed = derive_seed(seed, {1});
    tc.epochs += extra_epochs;
    Network net = build_network(candidate.arch, input_shape(), derive_seed(seed, {0}));
    try {
        TrainResult r = train(std::move(net), data_.train, Dataset{}, tc, q, cfg_.noise_aware ? &noise : nullptr);
        Evaluation e = assess(r.net, candidate, seed);
        return Trained{std::move(r.net), std::move(e)};
    } catch (const TrainingDiverged&) {
        return std::nullopt;
    }
}

Evaluation TrainingEvaluator::evaluate(const Candidate& candidate, std::uint64_t seed) const {
    if (auto reason = check_candidate(candidate, input_shape(), hw_); !reason.empty()) {
        return infeasible(std::move(reason));
    }
    const auto scheme = candidate.scheme();
    const QuantizationScheme* q = scheme ? &*scheme : nullptr;
    NoiseSpec noise;
    if (cfg_.noise_aware) noise = make_noise_spec(hw_.devices.at(candidate.device), q, candidate.arch.size());

    TrainConfig tc = cfg_.train;
    tc.rng_seed = derive_seed(seed, {1});
    try {
        Network net = build_network(candidate.arch, input_shape(), derive_seed(seed, {0}));
        TrainResult r = train(std::move(net), data_.train, Dataset{}, tc, q, cfg_.noise_aware ? &noise : nullptr);
        return assess(r.net, candidate, seed);
    } catch (const TrainingDiverged& e) {
        Evaluation out;
        out.failed = true;
        out.error = e.what();
        return out;
    }
}

RequantizingEvaluator::RequantizingEvaluator(const TrainingEvaluator& base, Network trained, bool noise_aware)
    : base_(base), net_(std::move(trained)), noise_aware_(noise_aware) {}

std::size_t RequantizingEvaluator::cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

Evaluation RequantizingEvaluator::evaluate(const Candidate& candidate, std::uint64_t seed) const {
    if (!(candidate.arch == net_.arch)) return infeasible("candidate architecture differs from the trained network");
    if (auto reason = check_candidate(candidate, input_shape(), base_.hardware()); !reason.empty()) {
        return infeasible(std::move(reason));
    }
    std::ostringstream key;
    key << candidate.device << '/' << seed;
    if (candidate.quant) {
        for (const auto& q : *candidate.quant) {
            key << '/' << q.weight_int << ',' << q.weight_frac << ',' << q.act_int << ',' << q.act_frac;
        }
    }
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key.str()); it != cache_.end()) return it->second;
    }
    Evaluation e = base_.assess(net_, candidate, seed, noise_aware_);
    std::lock_guard lock(mutex_);
    cache_.emplace(key.str(), e);
    return e;
}

SyntheticEvaluator::SyntheticEvaluator(FeatureShape input, HardwareContext hw, double capacity_scale,
                                       double noise_gain)
    : input_(input), hw_(std::move(hw)), capacity_scale_(capacity_scale), noise_gain_(noise_gain) {
    if (!(capacity_scale_ > 0.0)) throw ConfigError("capacity scale must be positive");
    if (!(noise_gain_ >= 0.0)) throw ConfigError("noise gain must be non-negative");
}

Evaluation SyntheticEvaluator::evaluate(const Candidate& candidate, std::uint64_t) const {
    if (auto reason = check_candidate(candidate, input_, hw_); !reason.empty()) return infeasible(std::move(reason));
    const auto shapes = infer_shapes(candidate.arch, input_);
    double params = 0.0;
    for (std::size_t i = 0; i < candidate.arch.size(); ++i) {
        params += static_cast<double>(layer_macs(candidate.arch.layers[i], shapes[i])) /
                  static_cast<double>(std::holds_alternative<ConvLayer>(candidate.arch.layers[i])
                                          ? static_cast<std::size_t>(shapes[i].height) * shapes[i].width
                                          : 1);
    }
    const auto scheme = candidate.scheme();
    const DeviceModel& device = hw_.devices.at(candidate.device);
    const std::size_t L = candidate.arch.size();
    double q_mean = 0.0;
    double noise_mean = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
        const FixedPointFormat wf = scheme ? scheme->weights[i] : default_weight_format();
        if (scheme) {
            const auto& af = scheme->activations[i];
            q_mean += (1.0 - std::exp2(-(wf.int_bits() + wf.frac_bits()))) *
                      (1.0 - std::exp2(-(af.int_bits() + af.frac_bits())));
        } else {
            q_mean += 1.0;
        }
        noise_mean += weight_noise_sigma(device, wf) / wf.max();
    }
    q_mean /= static_cast<double>(L);
    noise_mean /= static_cast<double>(L);

    Evaluation e;
    e.alpha_clean = 0.1 + 0.85 * (1.0 - std::exp(-params / capacity_scale_)) * q_mean;
    e.alpha_noisy = e.alpha_clean * std::max(0.0, 1.0 - noise_gain_ * noise_mean);
    if (hw_.compute_metrics) e.metrics = candidate_metrics(candidate, input_, hw_);
    return e;
}

} // namespace cimnas
