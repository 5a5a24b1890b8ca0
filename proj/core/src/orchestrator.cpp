#include "cimnas/orchestrator.hpp"

#include "cimnas/error.hpp"
#include "cimnas/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace cimnas {

const char* to_string(SearchMode mode) {
    switch (mode) {
    case SearchMode::Nas: return "nas";
    case SearchMode::QuantNas: return "quantnas";
    case SearchMode::PtbNas: return "ptbnas";
    case SearchMode::RNas: return "rnas";
    }
    return "?";
}

SearchMode parse_search_mode(const std::string& name) {
    for (auto m : {SearchMode::Nas, SearchMode::QuantNas, SearchMode::PtbNas, SearchMode::RNas}) {
        if (name == to_string(m)) return m;
    }
    throw ConfigError("unknown search mode '" + name + "' (expected nas, quantnas, ptbnas or rnas)");
}

PipelineDescriptor select_mode(const SelectorSwitches& sw) {
    const auto is = [&](bool a, bool q, bool d, bool c) { return sw.sa == a && sw.sq == q && sw.sd == d && sw.sc == c; };
    if (is(true, false, false, false)) return {SearchMode::Nas, true, false, false, false, false};
    if (is(true, true, false, false)) return {SearchMode::QuantNas, true, true, false, false, false};
    if (is(true, true, true, false)) return {SearchMode::PtbNas, true, true, true, true, false};
    if (is(false, true, false, true)) return {SearchMode::RNas, false, true, false, true, true};
    const auto b = [](bool v) { return v ? "1" : "0"; };
    throw ConfigError(std::string("unsupported selector switches (SA,SQ,SD,SC) = (") + b(sw.sa) + "," + b(sw.sq) + "," +
                      b(sw.sd) + "," + b(sw.sc) +
                      "); legal combinations are (1,0,0,0) nas, (1,1,0,0) quantnas, (1,1,1,0) ptbnas, (0,1,0,1) rnas");
}

SelectorSwitches switches_for(SearchMode mode) {
    switch (mode) {
    case SearchMode::Nas: return {true, false, false, false};
    case SearchMode::QuantNas: return {true, true, false, false};
    case SearchMode::PtbNas: return {true, true, true, false};
    case SearchMode::RNas: return {false, true, false, true};
    }
    return {};
}

void PhaseConfig::validate() const {
    if (episodes < 1 || child_epochs < 1 || top_k < 1 || fine_tune_epochs < 0 || rnas_steps < 1 || noise_trials < 1) {
        throw ConfigError("phase counts must be positive");
    }
}

double episode_reward(const Evaluation& e, const RewardConfig& reward) {
    if (!e.feasible || e.failed) return 0.0;
    if (reward.beta < 1.0 && !e.metrics) return 0.0;
    return compute_reward(std::clamp(e.alpha_noisy, 0.0, 1.0), e.metrics ? &*e.metrics : nullptr, reward);
}

std::uint64_t phase_tag(const std::string& phase) {
    // FNV-1a, stable across platforms.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : phase) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t episode_sample_seed(std::uint64_t master, const std::string& phase, std::size_t episode) {
    return derive_seed(master, {phase_tag(phase), static_cast<std::uint64_t>(episode), 0});
}

std::uint64_t episode_eval_seed(std::uint64_t master, const std::string& phase, std::size_t episode) {
    return derive_seed(master, {phase_tag(phase), static_cast<std::uint64_t>(episode), 1});
}

namespace {

template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
    const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < w; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        f(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

Evaluation guarded_evaluate(const CandidateEvaluator& evaluator, const Candidate& c, std::uint64_t seed) {
    try {
        return evaluator.evaluate(c, seed);
    } catch (const RuntimeError& e) {
        Evaluation out;
        out.failed = true;
        out.error = e.what();
        return out;
    }
}

void emit(const SearchHooks& hooks, const std::string& msg) {
    if (hooks.on_event) hooks.on_event(msg);
}

} // namespace

SearchOutcome run_controller_search(const SearchSpace& space, const CandidateEvaluator& evaluator,
                                    const SearchSettings& settings, const SearchHooks& hooks,
                                    const ControllerCheckpoint* resume, const SearchHistory* resume_history) {
    settings.reward.validate();
    if (space.steps() == 0) throw ConfigError("search space '" + space.name() + "' has no decisions to search");
    Controller ctrl(space.choice_counts(), settings.controller,
                    derive_seed(settings.seed, {phase_tag(settings.phase), 0xC0}));
    SearchOutcome out;
    std::size_t done = 0;
    if (resume) {
        if (resume->phase != settings.phase) {
            throw ConfigError("checkpoint belongs to phase '" + resume->phase + "', not '" + settings.phase + "'");
        }
        if (!resume_history || resume_history->size() != resume->completed) {
            throw DataError("resume history does not match the checkpoint (" + std::to_string(resume->completed) +
                            " episodes)");
        }
        ctrl.set_parameters(resume->theta);
        ctrl.set_baseline(resume->baseline, resume->baseline_set);
        out.history = *resume_history;
        done = resume->completed;
    }

    const std::size_t m = static_cast<std::size_t>(settings.controller.batch_size);
    while (done < settings.episodes) {
        const std::size_t n = std::min(m, settings.episodes - done);
        std::vector<EpisodeRecord> eps(n);
        std::vector<HistoryRecord> recs(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t id = settings.first_episode_id + done + i;
            Rng rng(episode_sample_seed(settings.seed, settings.phase, id));
            eps[i] = ctrl.sample(rng);
            auto& r = recs[i];
            r.episode = id;
            r.phase = settings.phase;
            r.batch = done / m;
            r.actions = eps[i].actions;
            r.candidate = space.decode(eps[i].actions);
            r.seed = settings.shared_eval_seed ? *settings.shared_eval_seed
                                               : episode_eval_seed(settings.seed, settings.phase, id);
            r.parent = settings.parent;
        }
        parallel_for(n, settings.workers,
                     [&](std::size_t i) { recs[i].eval = guarded_evaluate(evaluator, recs[i].candidate, recs[i].seed); });
        for (std::size_t i = 0; i < n; ++i) {
            recs[i].reward = episode_reward(recs[i].eval, settings.reward);
            eps[i].reward = recs[i].reward;
            if (hooks.on_record) hooks.on_record(recs[i]);
            out.history.push_back(std::move(recs[i]));
        }
        UpdateResult u = ctrl.update(eps);
        if (!u.applied) emit(hooks, settings.phase + " batch " + std::to_string(done / m) + ": " + u.event);
        out.updates.push_back(std::move(u));
        done += n;
        if (hooks.on_checkpoint) {
            ControllerCheckpoint ck;
            ck.phase = settings.phase;
            ck.completed = done;
            ck.theta.assign(ctrl.parameters().begin(), ctrl.parameters().end());
            ck.baseline = ctrl.baseline();
            ck.baseline_set = ctrl.baseline_initialized();
            hooks.on_checkpoint(ck);
        }
    }
    out.theta.assign(ctrl.parameters().begin(), ctrl.parameters().end());
    out.greedy = ctrl.greedy();
    return out;
}

SearchSpace space_for_mode(const SearchSpace& space, SearchMode mode) {
    const PipelineDescriptor d = select_mode(switches_for(mode));
    Candidate pin = space.base();
    if (!d.search_quantization) pin.quant.reset();
    if (!d.search_device) pin.device = 0;
    return space.restricted(d.search_architecture, d.search_quantization, d.search_device, pin);
}

SearchOutcome run_ptbnas(const SearchSpace& space, SearchMode mode, const CandidateEvaluator& evaluator,
                         SearchSettings settings, bool hardware_in_reward, const SearchHooks& hooks,
                         const ControllerCheckpoint* resume, const SearchHistory* resume_history) {
    if (mode == SearchMode::RNas) throw ConfigError("rnas is a refinement phase; use run_rnas");
    if (!hardware_in_reward) settings.reward.beta = 1.0;
    return run_controller_search(space_for_mode(space, mode), evaluator, settings, hooks, resume, resume_history);
}

SearchOutcome run_rnas(const SearchSpace& space, const Candidate& incumbent, const CandidateEvaluator& evaluator,
                       SearchSettings settings, const SearchHooks& hooks) {
    const SearchSpace quant_space = space.restricted(false, true, false, incumbent);
    if (!quant_space.has_group(DecisionGroup::Quantization)) {
        throw ConfigError("space '" + space.name() + "' has no quantization decisions to refine");
    }
    if (!settings.shared_eval_seed) {
        settings.shared_eval_seed = derive_seed(settings.seed, {phase_tag(settings.phase), 0xE7});
    }

    HistoryRecord first;
    first.episode = settings.first_episode_id;
    first.phase = settings.phase;
    first.candidate = incumbent;
    try {
        first.actions = quant_space.encode(incumbent);
    } catch (const ConfigError&) {
        first.actions.clear(); // incumbent outside the searched choice lists
    }
    first.seed = *settings.shared_eval_seed;
    first.parent = settings.parent;
    first.eval = guarded_evaluate(evaluator, incumbent, first.seed);
    first.reward = episode_reward(first.eval, settings.reward);
    if (hooks.on_record) hooks.on_record(first);

    settings.first_episode_id += 1;
    SearchOutcome out = run_controller_search(quant_space, evaluator, settings, hooks);
    out.history.insert(out.history.begin(), std::move(first));
    return out;
}

std::vector<std::size_t> select_top_k(const SearchHistory& history, std::size_t k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].eval.feasible && !history[i].eval.failed) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = history[a];
        const auto& rb = history[b];
        if (ra.eval.alpha_noisy != rb.eval.alpha_noisy) return ra.eval.alpha_noisy > rb.eval.alpha_noisy;
        return ra.episode < rb.episode;
    });
    if (idx.size() > k) idx.resize(k);
    return idx;
}

std::vector<FineTuned> fine_tune_top_k(const SearchHistory& history, std::size_t k, int epochs,
                                       const TrainingEvaluator& evaluator, int workers) {
    const auto idx = select_top_k(history, k);
    std::vector<std::optional<FineTuned>> slots(idx.size());
    parallel_for(idx.size(), workers, [&](std::size_t i) {
        const HistoryRecord& rec = history[idx[i]];
        auto trained = evaluator.train_candidate(rec.candidate, rec.seed, epochs);
        if (trained) slots[i] = FineTuned{rec, std::move(trained->net), rec.eval, std::move(trained->eval)};
    });
    std::vector<FineTuned> out;
    for (auto& s : slots) {
        if (s) out.push_back(std::move(*s));
    }
    return out;
}

std::optional<std::size_t> best_record(const SearchHistory& history) {
    if (history.empty()) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        const auto& r = history[i];
        const auto& b = history[best];
        if (r.reward > b.reward || (r.reward == b.reward && r.episode < b.episode)) best = i;
    }
    return best;
}

} // namespace cimnas
