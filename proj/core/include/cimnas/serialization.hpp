#pragma once

// JSON text forms of candidates, history records, checkpoints and
// architecture files. Parsers throw DataError on malformed input.

#include "cimnas/cost_model.hpp"
#include "cimnas/device.hpp"
#include "cimnas/history.hpp"
#include "cimnas/orchestrator.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace cimnas {

/// {"layers":[{"conv":[fh,fw,filters,pool]},{"fc":[n]},{"output":classes}],
///  "quant":[[w_int,w_frac,a_int,a_frac],...] | null, "device":index}
std::string candidate_json(const Candidate& c);
Candidate parse_candidate_json(const std::string& text);

std::string metrics_json(const HardwareMetrics& m);

/// One history record as a single line of JSON (no newline). No wall-clock
/// fields, so identical runs produce identical lines.
std::string history_line(const HistoryRecord& r);
HistoryRecord parse_history_line(const std::string& line);
/// Reads a JSONL history; a missing file or bad line is a DataError naming the line.
SearchHistory read_history(const std::filesystem::path& path);

std::string checkpoint_json(const ControllerCheckpoint& ck);
ControllerCheckpoint parse_checkpoint(const std::string& text);

/// Standalone architecture description for the cost command, one tuple per layer:
/// conv (FH, FW, #F, P[, WQ_int, WQ_frac, AQ_int, AQ_frac]), fc (neurons[, WQ_int,
/// WQ_frac, AQ_int, AQ_frac]). A 10-class output layer is appended unless the
/// last entry is {"output": classes}; it reuses the formats of the layer before it.
///   {"input":[3,32,32], "device":"reram4", "layers":[{"conv":[...]}, {"fc":[...]}]}
struct ArchFile {
    FeatureShape input{3, 32, 32};
    Candidate candidate;
    std::optional<std::string> device;
};
ArchFile parse_arch_file(const std::string& text);
ArchFile load_arch_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Write through a temporary file and rename, so readers never see a partial file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace cimnas
