#include "cimnas/run_config.hpp"
#include "cimnas/serialization.hpp"

#include "temp_dir.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

using namespace cimnas;
using cimnas::testing::TempDir;
using Json = nlohmann::json;

namespace {

const std::string kPresets = CIMNAS_PRESET_DIR;

struct Result {
    int code = -1;
    std::string out;
};

/// Runs the CLI with `args` (already shell-quoted), stdout captured, stderr discarded.
Result run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + CIMNAS_CLI_PATH + "' " + args + " 2>/dev/null";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string quick_config(const TempDir& dir, int episodes = 10) {
    const auto path = dir / "cfg.json";
    std::ofstream(path) << R"({"mode": "full", "evaluator": "synthetic", "phase": {"episodes": )" << episodes
                        << R"(, "rnas_steps": 10}, "reward": {"beta": 0.5}, "seed": 3})";
    return path.string();
}

} // namespace

TEST(Cli, CostOnTheReferenceDesignWithCalibratedPreset) {
    const Result r = run("cost " + kPresets + "/arch_rls_hw.json --preset " + kPresets + "/rram_32nm.cost");
    ASSERT_EQ(r.code, 0);
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j.at("device"), "reram4");
    for (const char* k : {"latency_ns", "energy_pj", "area_um2", "edp_pj_ns", "throughput_tops", "efficiency_tops_per_w"}) {
        ASSERT_TRUE(j.at("metrics").contains(k)) << k;
        EXPECT_GT(j.at("metrics").at(k).get<double>(), 0.0) << k;
    }
    EXPECT_GT(j.at("arrays_required").get<int>(), 0);
    EXPECT_GE(j.at("design").at("capacity").get<int>(), j.at("arrays_required").get<int>());
}

TEST(Cli, CostQuantizationOverrides) {
    const std::string arch = kPresets + "/arch_rls_sw.json";
    const Result narrow = run("cost " + arch + " --quant s0.2,u0.2");
    const Result wide = run("cost " + arch + " --quant s3.6,u3.6");
    const Result none = run("cost " + arch + " --quant none --device binary1");
    ASSERT_EQ(narrow.code, 0);
    ASSERT_EQ(wide.code, 0);
    ASSERT_EQ(none.code, 0);
    EXPECT_LT(Json::parse(narrow.out)["metrics"]["latency_ns"].get<double>(),
              Json::parse(wide.out)["metrics"]["latency_ns"].get<double>());
    EXPECT_EQ(Json::parse(none.out)["device"], "binary1");
    EXPECT_EQ(run("cost " + arch + " --quant s9").code, 2);
    EXPECT_EQ(run("cost " + arch + " --device mram").code, 2);
    EXPECT_EQ(run("cost /nonexistent/arch.json").code, 3);
}

TEST(Cli, ExitCodesByCategory) {
    TempDir dir;
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("pareto " + dir.path().string()).code, 3);
    EXPECT_EQ(run("report " + dir.path().string()).code, 3);
    EXPECT_EQ(run("search --config /nonexistent/cfg.json").code, 2);
    std::ofstream(dir / "bad.json") << R"({"episodez": 3})";
    EXPECT_EQ(run("search --config " + (dir / "bad.json").string()).code, 2);
    std::ofstream(dir / "cifar.json") << R"({"evaluator": "train", "dataset": {"source": "cifar10", "path": "/nonexistent"}})";
    EXPECT_EQ(run("search --config " + (dir / "cifar.json").string() + " --out " + (dir / "run").string()).code, 3);
}

TEST(Cli, SearchReplayParetoAndReport) {
    TempDir dir;
    const std::string out = (dir / "run").string();
    ASSERT_EQ(run("search --config " + quick_config(dir) + " --out " + out).code, 0);
    for (const char* f : {"config.json", "seeds.json", "history.jsonl", "checkpoint_search.json", "pareto.csv",
                          "report.csv", "error_vs_latency.csv", "error_vs_area.csv", "error_vs_energy.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / f)) << f;
    }
    const SearchHistory h = read_history(std::filesystem::path(out) / "history.jsonl");
    ASSERT_EQ(h.size(), 21u);

    for (std::size_t ep : {std::size_t{0}, std::size_t{9}, std::size_t{10}, std::size_t{20}}) {
        const Result r = run("evaluate " + out + " " + std::to_string(ep));
        ASSERT_EQ(r.code, 0) << ep;
        EXPECT_TRUE(Json::parse(r.out).at("match").get<bool>()) << ep;
    }
    EXPECT_EQ(run("evaluate " + out + " 999").code, 3);

    const Result p = run("pareto " + out + " --objectives alpha_noisy:max,energy:min");
    ASSERT_EQ(p.code, 0);
    EXPECT_EQ(p.out.rfind("episode,phase,", 0), 0u);
    EXPECT_EQ(run("pareto " + out + " --objectives speed:min").code, 2);

    const std::string first = read_text_file(std::filesystem::path(out) / "report.csv");
    ASSERT_EQ(run("report " + out).code, 0);
    const std::string a = read_text_file(std::filesystem::path(out) / "report.csv");
    const std::string plot_a = read_text_file(std::filesystem::path(out) / "error_vs_area.csv");
    ASSERT_EQ(run("report " + out).code, 0);
    EXPECT_EQ(read_text_file(std::filesystem::path(out) / "report.csv"), a);
    EXPECT_EQ(read_text_file(std::filesystem::path(out) / "error_vs_area.csv"), plot_a);
    EXPECT_EQ(a, first);
}

TEST(Cli, FlagsAndEnvironmentOverrideTheConfig) {
    TempDir dir;
    const std::string cfg = quick_config(dir, 5);
    const std::string out = (dir / "env").string();
    ASSERT_EQ(run("search --config " + cfg, "CIMNAS_SEED=41 CIMNAS_OUT=" + out).code, 0);
    EXPECT_EQ(load_run_config(std::filesystem::path(out) / "config.json").seed, 41u);
    const Json seeds = Json::parse(read_text_file(std::filesystem::path(out) / "seeds.json"));
    EXPECT_EQ(seeds.at("master").get<std::uint64_t>(), 41u);

    const std::string flagged = (dir / "flag").string();
    ASSERT_EQ(run("search --config " + cfg + " --seed 5 --out " + flagged, "CIMNAS_SEED=41").code, 0);
    EXPECT_EQ(load_run_config(std::filesystem::path(flagged) / "config.json").seed, 5u);
    EXPECT_EQ(run("search --config " + cfg + " --out " + flagged, "CIMNAS_WORKERS=zero").code, 2);
}

TEST(Cli, ResumeReproducesTheHistory) {
    TempDir dir;
    const std::string cfg = quick_config(dir, 30);
    const std::string ref = (dir / "ref").string();
    ASSERT_EQ(run("search --config " + cfg + " --out " + ref).code, 0);
    const std::string full = read_text_file(std::filesystem::path(ref) / "history.jsonl");

    // A run stopped after 10 search episodes, then resumed under the full configuration.
    const std::string out = (dir / "run").string();
    ASSERT_EQ(run("search --config " + cfg + " --out " + out, "CIMNAS_EPISODES=10").code, 0);
    const auto ck = Json::parse(read_text_file(std::filesystem::path(out) / "checkpoint_search.json"));
    ASSERT_EQ(ck.at("completed").get<int>(), 10);
    std::filesystem::copy_file(std::filesystem::path(ref) / "config.json", std::filesystem::path(out) / "config.json",
                               std::filesystem::copy_options::overwrite_existing);
    ASSERT_EQ(run("search --resume --workers 2 --out " + out).code, 0);
    EXPECT_EQ(read_text_file(std::filesystem::path(out) / "history.jsonl"), full);
}

TEST(Cli, ShippedRunConfigsAreValid) {
    int checked = 0;
    for (const auto& entry : std::filesystem::directory_iterator(kPresets)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != ".json" || name.rfind("arch_", 0) == 0) continue;
        RunConfig cfg;
        ASSERT_NO_THROW(cfg = load_run_config(entry.path())) << name;
        EXPECT_NO_THROW(cfg.validate()) << name;
        EXPECT_NO_THROW(resolve_technology(cfg, kPresets)) << name;
        ++checked;
    }
    EXPECT_GE(checked, 4);
}
