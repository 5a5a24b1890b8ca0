#pragma once

#include "cimnas/controller.hpp"
#include "cimnas/cost_model.hpp"
#include "cimnas/dataset.hpp"
#include "cimnas/device.hpp"
#include "cimnas/orchestrator.hpp"
#include "cimnas/search_space.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cimnas {

struct DatasetConfig {
    std::string source = "synthetic"; ///< synthetic | cifar10
    std::string path;                 ///< cifar10: directory of .bin batches or a single .bin file
    std::size_t train = 512;
    std::size_t test = 256;
    int classes = 10;                 ///< synthetic only
    FeatureShape image{3, 32, 32};    ///< synthetic only
    double separation = 4.0;          ///< synthetic only, in pixel-noise sigmas
    friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct TrainingConfig {
    double learning_rate = 0.05;
    int batch_size = 32;
    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct RunConfig {
    std::string mode = "full"; ///< nas | quantnas | ptbnas | rnas | full
    std::string space = "rls"; ///< rls | vls | custom
    std::optional<SpaceDefinition> custom_space;
    std::vector<DeviceModel> devices = DeviceLibrary::defaults().devices();
    std::string evaluator = "train"; ///< train | synthetic
    PhaseConfig phase;
    ControllerConfig controller;
    RewardConfig reward;
    TechnologyParams technology;
    std::string technology_preset; ///< when set, loaded instead of `technology`
    SynapticArray array;
    DatasetConfig dataset;
    TrainingConfig training;
    std::optional<Candidate> incumbent; ///< rnas mode: the architecture to refine
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out = "runs/latest";

    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Missing keys keep their defaults; unknown keys are a ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string emit_run_config(const RunConfig& cfg);

/// CIMNAS_SEED, CIMNAS_WORKERS, CIMNAS_OUT and CIMNAS_EPISODES override the
/// matching fields. `getenv` is injectable for tests.
void apply_env_overrides(RunConfig& cfg, const std::function<const char*(const char*)>& getenv);

SearchSpace make_space(const RunConfig& cfg);
DeviceLibrary make_devices(const RunConfig& cfg);
TechnologyParams resolve_technology(const RunConfig& cfg, const std::filesystem::path& base_dir = {});
DatasetSplits load_dataset(const RunConfig& cfg);

} // namespace cimnas
