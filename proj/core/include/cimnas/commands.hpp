#pragma once

// Command implementations shared by the CLI and the tests.
//
// Run directory layout written by search:
//   config.json             configuration snapshot
//   seeds.json              master seed and derived stream seeds
//   history.jsonl           one record per evaluated episode, appended as it finishes
//   checkpoint_<phase>.json controller state after every update
//   pareto.csv, report.csv, error_vs_{latency,area,energy}.csv

#include "cimnas/run_config.hpp"

#include <exception>
#include <filesystem>
#include <ostream>
#include <string>

namespace cimnas {

/// Runs the configured pipeline into cfg.out. With `resume`, the run
/// directory's own config.json is used and the search phase continues from
/// its last checkpoint; later phases are rerun.
void search_command(const RunConfig& cfg, bool resume, std::ostream& log);

/// Replays one logged episode from its seeds and prints logged and replayed
/// figures. Throws RuntimeError when they differ.
void evaluate_command(const std::filesystem::path& run_dir, std::size_t episode, std::ostream& out);

/// Maps and costs an architecture file. `quant` is "from-arch", "none" or
/// "<weight fmt>,<act fmt>" such as "s1.4,u3.5". Empty `device` uses the
/// file's device or reram4; empty `preset` uses the built-in coefficients.
void cost_command(const std::filesystem::path& arch_file, const std::string& quant, const std::string& device,
                  const std::string& preset, std::ostream& out);

/// Writes and prints pareto.csv. DataError when the run has no history.
void pareto_command(const std::filesystem::path& run_dir, const std::string& objectives, std::ostream& out);

void report_command(const std::filesystem::path& run_dir, std::ostream& out);

/// 2 config, 3 data, 4 runtime (also for unexpected exceptions).
int exit_code_for(const std::exception& e);

} // namespace cimnas
