#pragma once

#include "cimnas/history.hpp"
#include "cimnas/pareto.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cimnas {

/// Compact one-field description, e.g. "conv3x5x64p0/w2.6/a2.6;fc256/w3.5/a1.3;out10/w3.5/a1.3@1".
std::string candidate_summary(const Candidate& c);

/// Columns: episode,phase,batch,feasible,failed,alpha_clean,alpha_noisy,alpha_std,
/// reward,latency_ns,energy_pj,area_um2,edp_pj_ns,throughput_tops,
/// efficiency_tops_per_w,seed,parent,candidate
std::string report_csv(const SearchHistory& history);

/// report_csv columns restricted to the front.
std::string pareto_csv(const SearchHistory& front);

/// Plot data: episode,phase,error,<metric> with error = 1 - alpha_noisy, for
/// every evaluated record that has the metric.
std::string plot_csv(const SearchHistory& history, Metric x);

/// Regenerates report.csv and error_vs_{latency,area,energy}.csv from
/// history.jsonl alone. Throws DataError when the log is missing or empty.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir);

} // namespace cimnas
