#include "cimnas/dataset.hpp"
#include "cimnas/error.hpp"
#include "cimnas/report.hpp"
#include "cimnas/run_config.hpp"
#include "cimnas/serialization.hpp"

#include "generators.hpp"
#include "temp_dir.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <numeric>

using namespace cimnas;
using cimnas::testing::Gen;
using cimnas::testing::TempDir;
using cimnas::testing::random_history;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(CIMNAS_SOURCE_DIR) / "tests/data/cifar10_golden.bin";

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Balanced synthetic CIFAR payload: record i has label i % 10 and pixels from its index.
std::vector<std::uint8_t> cifar_records(std::size_t n) {
    std::vector<std::uint8_t> b;
    for (std::size_t i = 0; i < n; ++i) {
        b.push_back(static_cast<std::uint8_t>(i % 10));
        for (std::size_t p = 0; p < 3072; ++p) b.push_back(static_cast<std::uint8_t>((i * 31 + p) & 0xFF));
    }
    return b;
}

/// (record, channel, row, column) element of a CIFAR-shaped image tensor.
double pixel(const Dataset& d, std::size_t r, std::size_t c, std::size_t y, std::size_t x) {
    return d.images.data[((r * 3 + c) * 32 + y) * 32 + x];
}

Candidate random_candidate(Gen& g) {
    const SearchSpace s = rls_space();
    ActionSequence a;
    for (int k : s.choice_counts()) a.push_back(g.integer(0, k - 1));
    Candidate c = s.decode(a);
    if (g.coin(0.2)) c.quant.reset();
    return c;
}

HistoryRecord random_record(Gen& g, std::size_t episode) {
    HistoryRecord r;
    r.episode = episode;
    r.phase = g.pick(std::vector<std::string>{"search", "finetune", "train", "rnas"});
    if (g.coin(0.8)) r.batch = static_cast<std::size_t>(g.integer(0, 99));
    r.candidate = random_candidate(g);
    r.actions = rls_space().encode(r.candidate.quant ? r.candidate : rls_space().base());
    r.eval.feasible = g.coin(0.9);
    r.eval.failed = g.coin(0.1);
    if (r.eval.failed) r.eval.error = "loss is \"NaN\"\nat epoch 3";
    r.eval.alpha_clean = g.real(0, 1);
    r.eval.alpha_noisy = g.real(0, 1);
    r.eval.alpha_std = g.real(0, 0.1) / 3.0;
    if (g.coin(0.7)) {
        HardwareMetrics m;
        m.latency_ns = g.real(1, 1e7);
        m.energy_pj = g.real(1, 1e9) / 7.0;
        m.area_um2 = g.real(1, 1e8);
        m.edp_pj_ns = m.latency_ns * m.energy_pj;
        m.throughput_tops = g.real(0, 10);
        m.efficiency_tops_per_w = g.real(0, 100);
        r.eval.metrics = m;
    }
    r.reward = g.real(0, 1);
    r.seed = g.rng()();
    if (g.coin(0.3)) r.parent = static_cast<std::size_t>(g.integer(0, 500));
    return r;
}

RunConfig random_config(Gen& g) {
    RunConfig c;
    c.mode = g.pick(std::vector<std::string>{"nas", "quantnas", "ptbnas", "rnas", "full"});
    if (g.coin()) {
        c.space = "custom";
        SpaceDefinition def;
        def.name = "mine";
        def.layers = {ConvChoices{{1, 3}, {3, 5}, {4, 8}, {0, 1}}, DenseChoices{{16, 32}}, OutputChoice{4}};
        if (g.coin()) def.quant = QuantChoices{{0, 1}, {2, 3, 4}};
        def.search_output_quant = g.coin();
        def.devices = static_cast<std::size_t>(g.integer(1, 2));
        c.custom_space = def;
    } else {
        c.space = g.coin() ? "rls" : "vls";
    }
    c.devices[0].level_sigma_na = g.real(0, 2000);
    c.evaluator = g.coin() ? "train" : "synthetic";
    c.phase.episodes = g.integer(1, 1000);
    c.phase.noise_trials = g.integer(1, 30);
    c.phase.hardware_reward_in_search = g.coin();
    c.phase.rnas_noise_aware = g.coin();
    c.controller.learning_rate = g.real(1e-4, 1.0);
    c.controller.gamma = g.real(0.5, 1.0);
    c.controller.zero_heads = g.coin();
    c.reward.beta = g.real(0, 1);
    c.reward.w_latency = 0.25;
    c.reward.w_energy = 0.5;
    c.reward.w_area = 0.25;
    c.technology.clock_ghz = g.real(0.01, 2.0);
    c.technology.adc_bits = g.integer(1, 8);
    c.array = SynapticArray{g.integer(8, 256), g.integer(8, 256)};
    c.dataset.source = "synthetic";
    c.dataset.classes = g.integer(2, 10);
    c.dataset.image = FeatureShape{g.integer(1, 3), g.integer(4, 32), g.integer(4, 32)};
    c.dataset.separation = g.real(0, 8);
    c.training.learning_rate = g.real(0.001, 0.5);
    if (c.mode == "rnas") {
        c.incumbent = c.custom_space ? SearchSpace(*c.custom_space).base() : random_candidate(g);
    }
    c.seed = g.rng()();
    c.workers = g.integer(1, 8);
    c.out = "runs/x" + std::to_string(g.integer(0, 99));
    return c;
}

/// Nearest class mean fitted on the first half, scored on the second half.
double nearest_mean_accuracy(const Dataset& d) {
    const std::size_t dims = d.images.size() / d.size();
    const std::size_t half = d.size() / 2;
    std::vector<std::vector<double>> mean(static_cast<std::size_t>(d.classes), std::vector<double>(dims, 0.0));
    std::vector<double> count(static_cast<std::size_t>(d.classes), 0.0);
    for (std::size_t s = 0; s < half; ++s) {
        const auto l = static_cast<std::size_t>(d.labels[s]);
        for (std::size_t i = 0; i < dims; ++i) mean[l][i] += d.images.data[s * dims + i];
        count[l] += 1;
    }
    for (std::size_t l = 0; l < mean.size(); ++l) {
        for (double& v : mean[l]) v /= count[l];
    }
    std::size_t correct = 0;
    for (std::size_t s = half; s < d.size(); ++s) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t l = 0; l < mean.size(); ++l) {
            double dist = 0.0;
            for (std::size_t i = 0; i < dims; ++i) {
                const double e = d.images.data[s * dims + i] - mean[l][i];
                dist += e * e;
            }
            if (dist < best_d) {
                best_d = dist;
                best = l;
            }
        }
        correct += static_cast<int>(best) == d.labels[s];
    }
    return static_cast<double>(correct) / static_cast<double>(d.size() - half);
}

} // namespace

TEST(CandidateJson, RoundTrip) {
    Gen g(1);
    for (int t = 0; t < 500; ++t) {
        const Candidate c = random_candidate(g);
        EXPECT_EQ(parse_candidate_json(candidate_json(c)), c);
    }
    EXPECT_THROW(parse_candidate_json("{"), DataError);
    EXPECT_THROW(parse_candidate_json(R"({"layers":[{"pool":[1]}],"quant":null,"device":0})"), DataError);
}

TEST(HistoryLine, RoundTripIsExact) {
    Gen g(2);
    for (std::size_t t = 0; t < 500; ++t) {
        const HistoryRecord r = random_record(g, t);
        const std::string line = history_line(r);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        EXPECT_EQ(parse_history_line(line), r);
        EXPECT_EQ(history_line(parse_history_line(line)), line);
    }
}

TEST(HistoryLine, ReadHistoryNamesTheBadLine) {
    TempDir dir;
    Gen g(3);
    std::ofstream(dir / "h.jsonl") << history_line(random_record(g, 0)) << "\n"
                                   << "{not json}\n";
    try {
        read_history(dir / "h.jsonl");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(read_history(dir / "missing.jsonl"), DataError);
}

TEST(Checkpoint, RoundTripAndVersion) {
    ControllerCheckpoint ck;
    ck.phase = "rnas";
    ck.completed = 35;
    ck.theta = {0.1, -1.0 / 3.0, 1e-300, 12345.678};
    ck.baseline = 0.4321;
    ck.baseline_set = true;
    EXPECT_EQ(parse_checkpoint(checkpoint_json(ck)), ck);
    std::string text = checkpoint_json(ck);
    const auto pos = text.find("\"version\"");
    ASSERT_NE(pos, std::string::npos);
    text.replace(text.find('1', pos), 1, "9");
    EXPECT_THROW(parse_checkpoint(text), DataError);
}

TEST(RunConfig, EmitLoadRoundTrip) {
    EXPECT_EQ(parse_run_config(emit_run_config(RunConfig{})), RunConfig{});
    Gen g(4);
    for (int t = 0; t < 100; ++t) {
        const RunConfig c = random_config(g);
        ASSERT_NO_THROW(c.validate());
        EXPECT_EQ(parse_run_config(emit_run_config(c)), c) << emit_run_config(c);
    }
}

TEST(RunConfig, MissingKeysDefaultUnknownKeysFail) {
    const RunConfig c = parse_run_config(R"({"seed": 7, "phase": {"episodes": 3}})");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.phase.episodes, 3);
    EXPECT_EQ(c.phase.child_epochs, 30);
    EXPECT_THROW(parse_run_config(R"({"sed": 7})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"phase": {"epsiodes": 3}})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"seed": "seven"})"), ConfigError);
    EXPECT_THROW(parse_run_config("[1, 2"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"mode": "evolution"})").validate(), ConfigError);
    EXPECT_THROW(load_run_config("/nonexistent/cfg.json"), ConfigError);
}

TEST(RunConfig, EnvironmentOverrides) {
    std::map<std::string, std::string> env{{"CIMNAS_SEED", "99"}, {"CIMNAS_WORKERS", "3"}, {"CIMNAS_OUT", "o"}};
    const auto getenv = [&](const char* k) -> const char* {
        const auto it = env.find(k);
        return it == env.end() ? nullptr : it->second.c_str();
    };
    RunConfig c;
    apply_env_overrides(c, getenv);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.workers, 3);
    EXPECT_EQ(c.out, "o");
    EXPECT_EQ(c.phase.episodes, 500);
    env["CIMNAS_EPISODES"] = "12x";
    EXPECT_THROW(apply_env_overrides(c, getenv), ConfigError);
    env["CIMNAS_EPISODES"] = "0";
    EXPECT_THROW(apply_env_overrides(c, getenv), ConfigError);
}

TEST(Cifar10, GoldenFixtureMatchesByteLevelDecoder) {
    const auto bytes = read_bytes(kGolden);
    ASSERT_EQ(bytes.size(), 10 * kCifarRecordBytes);
    const Dataset d = read_cifar10_file(kGolden);
    ASSERT_EQ(d.size(), 10u);
    EXPECT_EQ(d.images.shape, (std::vector<std::size_t>{10, 3, 32, 32}));
    EXPECT_EQ(d.labels, (std::vector<int>{3, 8, 8, 0, 6, 6, 1, 6, 3, 1}));
    for (std::size_t r = 0; r < 10; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < 32; ++y) {
                for (std::size_t x = 0; x < 32; ++x) {
                    const double ref = bytes[r * 3073 + 1 + c * 1024 + y * 32 + x] / 255.0;
                    ASSERT_EQ(pixel(d, r, c, y, x), ref) << r << "," << c << "," << y << "," << x;
                }
            }
        }
    }
    EXPECT_EQ(pixel(d, 0, 0, 0, 0), 220 / 255.0);
    EXPECT_EQ(pixel(d, 0, 1, 0, 0), 107 / 255.0);
    EXPECT_EQ(pixel(d, 1, 2, 31, 31), 177 / 255.0);
}

TEST(Cifar10, SingleRecordAndRejections) {
    const auto one = cifar_records(1);
    const Dataset d = decode_cifar10(one);
    EXPECT_EQ(d.size(), 1u);
    EXPECT_EQ(d.image_shape(), (FeatureShape{3, 32, 32}));
    EXPECT_EQ(pixel(d, 0, 0, 0, 5), 5 / 255.0);

    const std::vector<std::uint8_t> truncated(one.begin(), one.begin() + 3072);
    EXPECT_THROW(decode_cifar10(truncated), DataError);
    auto bad = cifar_records(4);
    bad[2 * kCifarRecordBytes] = 10;
    try {
        decode_cifar10(bad);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(read_cifar10_file("/nonexistent.bin"), DataError);
}

TEST(Cifar10, IngestDirectoryWithStratifiedSubsets) {
    TempDir dir;
    write_bytes(dir / "data_batch_1.bin", cifar_records(150));
    write_bytes(dir / "data_batch_2.bin", cifar_records(150));
    write_bytes(dir / "test_batch.bin", cifar_records(60));
    const DatasetSplits s = ingest_cifar10(dir.path(), 100, 20, 5);
    ASSERT_EQ(s.train.size(), 100u);
    ASSERT_EQ(s.test.size(), 20u);
    std::vector<int> per_class(10, 0);
    for (int l : s.train.labels) ++per_class[static_cast<std::size_t>(l)];
    EXPECT_EQ(per_class, std::vector<int>(10, 10));
    const DatasetSplits again = ingest_cifar10(dir.path(), 100, 20, 5);
    EXPECT_EQ(again.train.images, s.train.images);
    EXPECT_EQ(again.test.labels, s.test.labels);
    const DatasetSplits single = ingest_cifar10(dir / "test_batch.bin", 30, 10, 1);
    EXPECT_EQ(single.train.size(), 30u);
    EXPECT_THROW(ingest_cifar10(dir / "nothing", 10, 10, 1), DataError);
}

TEST(StratifiedSubset, QuotasDeterminismAndTopUp) {
    std::vector<int> balanced(1000);
    for (std::size_t i = 0; i < balanced.size(); ++i) balanced[i] = static_cast<int>(i % 10);
    const auto idx = stratified_subset(balanced, 10, 100, 3);
    ASSERT_EQ(idx.size(), 100u);
    std::vector<int> per_class(10, 0);
    for (auto i : idx) ++per_class[static_cast<std::size_t>(balanced[i])];
    EXPECT_EQ(per_class, std::vector<int>(10, 10));
    EXPECT_EQ(stratified_subset(balanced, 10, 100, 3), idx);
    EXPECT_NE(stratified_subset(balanced, 10, 100, 4), idx);

    const auto odd = stratified_subset(balanced, 10, 23, 3);
    per_class.assign(10, 0);
    for (auto i : odd) ++per_class[static_cast<std::size_t>(balanced[i])];
    EXPECT_EQ(per_class, (std::vector<int>{3, 3, 3, 2, 2, 2, 2, 2, 2, 2}));

    // Class 0 has only two samples; the shortfall is topped up from the others.
    std::vector<int> skewed{0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
    const auto top = stratified_subset(skewed, 3, 9, 1);
    EXPECT_EQ(top.size(), 9u);
    std::set<std::size_t> unique(top.begin(), top.end());
    EXPECT_EQ(unique.size(), 9u);
    EXPECT_EQ(std::count_if(top.begin(), top.end(), [&](std::size_t i) { return skewed[i] == 0; }), 2);
}

TEST(SynthDataset, DeterministicInRangeAndBalanced) {
    const Dataset a = synth_dataset(4, 200, {1, 8, 8}, 3.0, 11);
    const Dataset b = synth_dataset(4, 200, {1, 8, 8}, 3.0, 11);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(synth_dataset(4, 200, {1, 8, 8}, 3.0, 12).images, a.images);
    for (double v : a.images.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 2), 50);
    EXPECT_NO_THROW(a.validate());
    EXPECT_THROW(synth_dataset(1, 10, {1, 4, 4}, 1.0, 1), ConfigError);
    EXPECT_THROW(synth_dataset(20, 10, {1, 4, 4}, 1.0, 1), ConfigError);
}

TEST(SynthDataset, SeparationControlsLinearSeparability) {
    // Means 4 sigma apart: the Bayes error of a linear rule is Phi(-2), about 2.3%.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EXPECT_GE(nearest_mean_accuracy(synth_dataset(2, 2000, {1, 8, 8}, 4.0, seed)), 0.95);
        const double chance = nearest_mean_accuracy(synth_dataset(4, 4000, {1, 8, 8}, 0.0, seed));
        EXPECT_NEAR(chance, 0.25, 0.05);
    }
}

TEST(ArchFile, ReferenceDesignAndDefaults) {
    const ArchFile f = load_arch_file(std::string(CIMNAS_PRESET_DIR) + "/arch_rls_hw.json");
    EXPECT_EQ(f.input, (FeatureShape{3, 32, 32}));
    EXPECT_EQ(f.device, std::optional<std::string>("reram4"));
    ASSERT_EQ(f.candidate.arch.size(), 9u);
    EXPECT_EQ(std::get<ConvLayer>(f.candidate.arch.layers[0]), (ConvLayer{3, 5, 64, false}));
    EXPECT_EQ(std::get<DenseLayer>(f.candidate.arch.layers[6]).neurons, 256);
    EXPECT_EQ((*f.candidate.quant)[6], (LayerQuantBits{3, 5, 1, 3}));
    EXPECT_EQ(f.candidate.quant->back(), (*f.candidate.quant)[7]);

    const ArchFile plain = parse_arch_file(R"({"layers":[{"conv":[3,3,8,1]},{"fc":[16]}]})");
    EXPECT_EQ(plain.candidate.arch.size(), 3u);
    EXPECT_EQ(std::get<OutputLayer>(plain.candidate.arch.layers[2]).classes, 10);
    EXPECT_FALSE(plain.candidate.quant.has_value());
    EXPECT_FALSE(plain.device.has_value());

    EXPECT_THROW(parse_arch_file(R"({"layers":[{"conv":[3,3,8]}]})"), DataError);
    EXPECT_THROW(parse_arch_file(R"({"layers":[{"conv":[3,3,8,0,1,2,1,2]},{"fc":[16]}]})"), DataError);
    EXPECT_THROW(parse_arch_file(R"({"layers":[], "colour":1})"), DataError);
    EXPECT_THROW(load_arch_file("/nonexistent.json"), DataError);
}

TEST(TextFiles, WriteReplacesAtomically) {
    TempDir dir;
    write_text_file(dir / "a.txt", "first");
    write_text_file(dir / "a.txt", "second");
    EXPECT_EQ(read_text_file(dir / "a.txt"), "second");
    EXPECT_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
}

TEST(Report, PureFunctionOfTheLog) {
    TempDir dir;
    Gen g(5);
    SearchHistory h = random_history(g, 60);
    {
        std::ofstream out(dir / "history.jsonl");
        for (const auto& r : h) out << history_line(r) << "\n";
    }
    const auto files = write_report(dir.path());
    ASSERT_EQ(files.size(), 4u);
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(read_text_file(f));
    write_report(dir.path());
    for (std::size_t i = 0; i < files.size(); ++i) EXPECT_EQ(read_text_file(files[i]), first[i]);

    const std::string csv = report_csv(h);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "episode,phase,batch,feasible,failed,alpha_clean,alpha_noisy,alpha_std,reward,latency_ns,energy_pj,"
              "area_um2,edp_pj_ns,throughput_tops,efficiency_tops_per_w,seed,parent,candidate");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 61);
    const std::string plot = plot_csv(h, Metric::Latency);
    EXPECT_EQ(plot.substr(0, plot.find('\n')), "episode,phase,error,latency");
    std::size_t with_latency = 0;
    for (const auto& r : h) with_latency += metric_value(r, Metric::Latency).has_value();
    EXPECT_EQ(static_cast<std::size_t>(std::count(plot.begin(), plot.end(), '\n')), with_latency + 1);

    TempDir empty;
    EXPECT_THROW(write_report(empty.path()), DataError);
    std::ofstream(empty / "history.jsonl") << "";
    EXPECT_THROW(write_report(empty.path()), DataError);
}

TEST(Report, CandidateSummary) {
    const ArchFile f = load_arch_file(std::string(CIMNAS_PRESET_DIR) + "/arch_rls_hw.json");
    const std::string s = candidate_summary(f.candidate);
    EXPECT_EQ(s.substr(0, s.find(';')), "conv3x5x64p0/w2.6/a2.6");
    EXPECT_EQ(s.substr(s.size() - 2), "@0");
}
