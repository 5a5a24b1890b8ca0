#include "cimnas/commands.hpp"

#include "cimnas/error.hpp"
#include "cimnas/evaluator.hpp"
#include "cimnas/orchestrator.hpp"
#include "cimnas/pareto.hpp"
#include "cimnas/report.hpp"
#include "cimnas/serialization.hpp"

#include <json.hpp>

#include <fstream>
#include <memory>

namespace cimnas {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kSearchPhase = "search";
constexpr const char* kFineTunePhase = "finetune";
constexpr const char* kTrainPhase = "train";
constexpr const char* kRnasPhase = "rnas";
constexpr const char* kDefaultObjectives = "alpha_noisy:max,latency:min";

bool is_noise_aware(const RunConfig& cfg) {
    if (cfg.mode == "full" || cfg.mode == "rnas") return true;
    return select_mode(switches_for(parse_search_mode(cfg.mode))).noise_aware;
}

struct Pipeline {
    RunConfig cfg;
    SearchSpace space;
    HardwareContext hw;
    std::unique_ptr<TrainingEvaluator> trainer;
    std::unique_ptr<SyntheticEvaluator> synthetic;

    explicit Pipeline(const RunConfig& c) : cfg(c), space(make_space(c)) {
        hw.devices = make_devices(cfg);
        hw.tech = resolve_technology(cfg);
        hw.array = cfg.array;
        hw.compute_metrics = true;
        if (cfg.evaluator == "train") {
            ChildTraining ct;
            ct.train = TrainConfig{cfg.training.learning_rate, cfg.phase.child_epochs, cfg.training.batch_size, 0};
            ct.noise_aware = is_noise_aware(cfg);
            ct.noise_trials = cfg.phase.noise_trials;
            trainer = std::make_unique<TrainingEvaluator>(load_dataset(cfg), hw, ct);
        } else {
            synthetic = std::make_unique<SyntheticEvaluator>(cfg.dataset.image, hw);
        }
    }

    const CandidateEvaluator& evaluator() const {
        if (trainer) return *trainer;
        return *synthetic;
    }

    RewardConfig search_reward() const {
        RewardConfig r = cfg.reward;
        if (!cfg.phase.hardware_reward_in_search) r.beta = 1.0;
        return r;
    }

    SearchSettings settings(const std::string& phase, std::size_t episodes, std::size_t first_id,
                            const RewardConfig& reward) const {
        SearchSettings s;
        s.phase = phase;
        s.episodes = episodes;
        s.first_episode_id = first_id;
        s.controller = cfg.controller;
        s.reward = reward;
        s.seed = cfg.seed;
        s.workers = cfg.workers;
        return s;
    }
};

class HistoryWriter {
public:
    HistoryWriter(const fs::path& path, bool append)
        : out_(path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary) {
        if (!out_) throw RuntimeError("cannot open " + path.string() + " for writing");
    }
    void append(const HistoryRecord& r) {
        out_ << history_line(r) << '\n';
        out_.flush();
        if (!out_) throw RuntimeError("failed to append to the history log");
    }

private:
    std::ofstream out_;
};

void log_record(std::ostream& log, const HistoryRecord& r) {
    log << "[" << r.phase << "] episode " << r.episode;
    if (!r.eval.feasible) {
        log << " infeasible: " << r.eval.error;
    } else if (r.eval.failed) {
        log << " failed: " << r.eval.error;
    } else {
        log << " alpha=" << r.eval.alpha_clean << " alpha_var=" << r.eval.alpha_noisy;
    }
    log << " reward=" << r.reward << '\n';
}

HistoryRecord record_from(const std::string& phase, std::size_t id, const HistoryRecord* origin, Candidate c,
                          Evaluation e, const RewardConfig& reward, std::uint64_t seed) {
    HistoryRecord r;
    r.episode = id;
    r.phase = phase;
    if (origin) {
        r.actions = origin->actions;
        r.parent = origin->episode;
    }
    r.candidate = std::move(c);
    r.eval = std::move(e);
    r.reward = episode_reward(r.eval, reward);
    r.seed = seed;
    return r;
}

void write_seeds(const fs::path& dir, const RunConfig& cfg) {
    Json j;
    j["master"] = cfg.seed;
    j["dataset"] = derive_seed(cfg.seed, {0xDA7A});
    Json phases = Json::object();
    for (const char* p : {kSearchPhase, kFineTunePhase, kTrainPhase, kRnasPhase}) phases[p] = phase_tag(p);
    j["phase_tags"] = std::move(phases);
    write_text_file(dir / "seeds.json", j.dump(2) + "\n");
}

fs::path checkpoint_path(const fs::path& dir, const std::string& phase) { return dir / ("checkpoint_" + phase + ".json"); }

} // namespace

void search_command(const RunConfig& input_cfg, bool resume, std::ostream& log) {
    RunConfig cfg = input_cfg;
    const fs::path dir = cfg.out;
    if (resume) {
        cfg = load_run_config(dir / "config.json");
        cfg.workers = input_cfg.workers;
        cfg.out = input_cfg.out;
    }
    cfg.validate();
    // The snapshot carries resolved coefficients so the directory stands alone.
    cfg.technology = resolve_technology(cfg);
    cfg.technology_preset.clear();
    Pipeline pipe(cfg);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw RuntimeError("cannot create run directory " + dir.string() + ": " + ec.message());

    std::optional<ControllerCheckpoint> ckpt;
    SearchHistory kept;
    if (resume && fs::exists(checkpoint_path(dir, kSearchPhase))) {
        ckpt = parse_checkpoint(read_text_file(checkpoint_path(dir, kSearchPhase)));
        const SearchHistory old = fs::exists(dir / "history.jsonl") ? read_history(dir / "history.jsonl") : SearchHistory{};
        for (const auto& r : old) {
            if (r.phase == kSearchPhase && r.episode < ckpt->completed) kept.push_back(r);
        }
        if (kept.size() != ckpt->completed) {
            throw DataError("history holds " + std::to_string(kept.size()) + " search records, checkpoint expects " +
                            std::to_string(ckpt->completed));
        }
        log << "resuming search after " << ckpt->completed << " episodes\n";
    }
    {
        std::string text;
        for (const auto& r : kept) text += history_line(r) + "\n";
        write_text_file(dir / "history.jsonl", text);
    }
    write_text_file(dir / "config.json", emit_run_config(cfg));
    write_seeds(dir, cfg);

    HistoryWriter writer(dir / "history.jsonl", true);
    SearchHooks hooks;
    hooks.on_record = [&](const HistoryRecord& r) {
        writer.append(r);
        log_record(log, r);
    };
    hooks.on_checkpoint = [&](const ControllerCheckpoint& ck) {
        write_text_file(checkpoint_path(dir, ck.phase), checkpoint_json(ck));
    };
    hooks.on_event = [&](const std::string& msg) { log << msg << '\n'; };

    std::size_t next_id = 0;
    std::optional<Candidate> incumbent;
    std::optional<std::size_t> incumbent_id;
    std::optional<Network> incumbent_net;

    if (cfg.mode != "rnas") {
        const SearchMode mode = cfg.mode == "full" ? SearchMode::PtbNas : parse_search_mode(cfg.mode);
        const auto s = pipe.settings(kSearchPhase, static_cast<std::size_t>(cfg.phase.episodes), 0, pipe.cfg.reward);
        SearchOutcome outcome = run_ptbnas(pipe.space, mode, pipe.evaluator(), s, cfg.phase.hardware_reward_in_search,
                                           hooks, ckpt ? &*ckpt : nullptr, ckpt ? &kept : nullptr);
        next_id = static_cast<std::size_t>(cfg.phase.episodes);

        if (cfg.mode == "full") {
            if (pipe.trainer) {
                auto tuned = fine_tune_top_k(outcome.history, static_cast<std::size_t>(cfg.phase.top_k),
                                             cfg.phase.fine_tune_epochs, *pipe.trainer, cfg.workers);
                std::optional<std::size_t> best;
                for (std::size_t i = 0; i < tuned.size(); ++i) {
                    auto rec = record_from(kFineTunePhase, next_id + i, &tuned[i].record, tuned[i].record.candidate,
                                           tuned[i].after, pipe.search_reward(), tuned[i].record.seed);
                    hooks.on_record(rec);
                    if (!best || tuned[i].after.alpha_noisy > tuned[*best].after.alpha_noisy) best = i;
                }
                if (best) {
                    incumbent = tuned[*best].record.candidate;
                    incumbent_id = next_id + *best;
                    incumbent_net = std::move(tuned[*best].net);
                }
                next_id += tuned.size();
            } else {
                const auto top = select_top_k(outcome.history, 1);
                if (!top.empty()) {
                    incumbent = outcome.history[top[0]].candidate;
                    incumbent_id = outcome.history[top[0]].episode;
                }
            }
            if (!incumbent) log << "no feasible candidate to refine; skipping rnas\n";
        }
    } else {
        incumbent = *cfg.incumbent;
        const std::uint64_t seed = episode_eval_seed(cfg.seed, kTrainPhase, 0);
        Evaluation e;
        if (pipe.trainer) {
            auto trained = pipe.trainer->train_candidate(*incumbent, seed);
            if (!trained) throw RuntimeError("the incumbent candidate cannot be trained");
            e = trained->eval;
            incumbent_net = std::move(trained->net);
        } else {
            e = pipe.synthetic->evaluate(*incumbent, seed);
        }
        if (!e.feasible) throw ConfigError("incumbent candidate is infeasible: " + e.error);
        hooks.on_record(record_from(kTrainPhase, 0, nullptr, *incumbent, e, cfg.reward, seed));
        incumbent_id = 0;
        next_id = 1;
    }

    if (incumbent && (cfg.mode == "full" || cfg.mode == "rnas")) {
        auto s = pipe.settings(kRnasPhase, static_cast<std::size_t>(cfg.phase.rnas_steps), next_id, cfg.reward);
        s.parent = incumbent_id;
        if (pipe.trainer) {
            RequantizingEvaluator requant(*pipe.trainer, std::move(*incumbent_net), cfg.phase.rnas_noise_aware);
            run_rnas(pipe.space, *incumbent, requant, s, hooks);
        } else {
            run_rnas(pipe.space, *incumbent, *pipe.synthetic, s, hooks);
        }
    }

    const SearchHistory all = read_history(dir / "history.jsonl");
    write_text_file(dir / "pareto.csv", pareto_csv(pareto_front(all, parse_objectives(kDefaultObjectives))));
    write_report(dir);
    log << "wrote " << all.size() << " records to " << (dir / "history.jsonl").string() << '\n';
}

void evaluate_command(const fs::path& run_dir, std::size_t episode, std::ostream& out) {
    const RunConfig cfg = load_run_config(run_dir / "config.json");
    const SearchHistory history = read_history(run_dir / "history.jsonl");
    const auto find = [&](std::size_t id) -> const HistoryRecord& {
        for (const auto& r : history) {
            if (r.episode == id) return r;
        }
        throw DataError("episode " + std::to_string(id) + " is not in " + run_dir.string());
    };
    const HistoryRecord& rec = find(episode);
    Pipeline pipe(cfg);

    const auto trained_net = [&](const HistoryRecord& r) {
        const int extra = r.phase == kFineTunePhase ? cfg.phase.fine_tune_epochs : 0;
        auto t = pipe.trainer->train_candidate(r.candidate, r.seed, extra);
        if (!t) throw RuntimeError("episode " + std::to_string(r.episode) + " cannot be retrained");
        return std::move(*t);
    };

    Evaluation replay;
    if (rec.phase == kRnasPhase && pipe.trainer) {
        if (!rec.parent) throw DataError("rnas record " + std::to_string(episode) + " has no parent");
        auto parent = trained_net(find(*rec.parent));
        RequantizingEvaluator requant(*pipe.trainer, std::move(parent.net), cfg.phase.rnas_noise_aware);
        replay = requant.evaluate(rec.candidate, rec.seed);
    } else if ((rec.phase == kFineTunePhase || rec.phase == kTrainPhase) && pipe.trainer) {
        replay = trained_net(rec).eval;
    } else {
        replay = pipe.evaluator().evaluate(rec.candidate, rec.seed);
    }

    HistoryRecord replayed = rec;
    replayed.eval = replay;
    const bool match = replay == rec.eval;
    Json j;
    j["episode"] = episode;
    j["phase"] = rec.phase;
    j["logged"] = Json::parse(history_line(rec));
    j["replayed"] = Json::parse(history_line(replayed));
    j["match"] = match;
    out << j.dump(2) << '\n';
    if (!match) throw RuntimeError("replay of episode " + std::to_string(episode) + " differs from the log");
}

void cost_command(const fs::path& arch_file, const std::string& quant, const std::string& device,
                  const std::string& preset, std::ostream& out) {
    const ArchFile f = load_arch_file(arch_file);
    const DeviceLibrary lib = DeviceLibrary::defaults();
    const std::string dev_name = !device.empty() ? device : f.device.value_or("reram4");
    const auto dev_index = lib.find(dev_name);
    if (!dev_index) throw ConfigError("unknown device '" + dev_name + "'");
    const DeviceModel& dev = lib.at(*dev_index);
    const TechnologyParams tech = preset.empty() ? TechnologyParams{} : load_cost_preset(preset);

    std::optional<QuantizationScheme> scheme;
    if (quant.empty() || quant == "from-arch") {
        scheme = f.candidate.scheme();
    } else if (quant != "none") {
        const auto comma = quant.find(',');
        if (comma == std::string::npos) throw ConfigError("--quant expects from-arch, none or <weight>,<activation>");
        scheme = uniform_scheme(f.candidate.arch.size(), FixedPointFormat::parse(quant.substr(0, comma)),
                                FixedPointFormat::parse(quant.substr(comma + 1)));
    }
    const QuantizationScheme* q = scheme ? &*scheme : nullptr;
    const SynapticArray array;
    ChipDesign design;
    const HardwareMetrics m = evaluate_hardware(f.candidate.arch, f.input, q, dev, tech, array, &design);

    Json j;
    j["device"] = dev.name;
    j["quantization"] = scheme ? "per-layer" : "default";
    j["arrays_required"] = arrays_required(f.candidate.arch, f.input, q, dev, array);
    j["design"] = {{"tiles", {design.tiles.m, design.tiles.n}},
                   {"pes", {design.pes.p, design.pes.q}},
                   {"arrays_per_pe", design.arrays_per_pe},
                   {"capacity", design.capacity()},
                   {"global_buffer_bytes", design.tiles.global_buffer_bytes},
                   {"pe_buffer_bytes", design.pes.buffer_bytes},
                   {"link_bandwidth_bits", design.tiles.link_bandwidth_bits},
                   {"pe_bandwidth_bits", design.pes.bandwidth_bits}};
    j["metrics"] = Json::parse(metrics_json(m));
    out << j.dump(2) << '\n';
}

void pareto_command(const fs::path& run_dir, const std::string& objectives, std::ostream& out) {
    const auto objs = parse_objectives(objectives.empty() ? kDefaultObjectives : objectives);
    const auto log = run_dir / "history.jsonl";
    if (!fs::exists(log)) throw DataError("no history.jsonl in " + run_dir.string());
    const SearchHistory h = read_history(log);
    if (h.empty()) throw DataError(log.string() + " has no records");
    const std::string csv = pareto_csv(pareto_front(h, objs));
    write_text_file(run_dir / "pareto.csv", csv);
    out << csv;
}

void report_command(const fs::path& run_dir, std::ostream& out) {
    for (const auto& p : write_report(run_dir)) out << p.string() << '\n';
}

int exit_code_for(const std::exception& e) {
    if (const auto* ce = dynamic_cast<const Error*>(&e)) {
        switch (ce->category()) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Data: return 3;
        case ErrorCategory::Runtime: return 4;
        }
    }
    return 4;
}

} // namespace cimnas
