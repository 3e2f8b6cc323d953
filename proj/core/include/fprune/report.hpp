#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fprune/pipeline.hpp"

namespace fprune {

// Round-trips every number exactly; NaN fields become null.
std::string report_to_json(const PruneReport& report);
// Throws DataError on anything that is not a well-formed report.
PruneReport report_from_json(const std::string& text);
PruneReport load_report(const std::filesystem::path& path);

// Header plus one summary row.
std::string report_to_csv(const PruneReport& report);
// One row per pruned layer: unit, layer, slot, original, kept, ratio.
std::string layer_ratios_csv(const PruneReport& report);

// Writes <stem>.json, <stem>.csv, <stem>_layers.csv and one
// <stem>_agent<unit>.csv per training log into `dir`.
void write_prune_outputs(const std::filesystem::path& dir, const std::string& stem,
                         const PruneReport& report, std::span<const TrainLog> logs);

// Aligned text table and CSV with one row per report.
std::string comparison_table(std::span<const PruneReport> reports,
                             std::span<const std::string> labels);
std::string comparison_csv(std::span<const PruneReport> reports,
                           std::span<const std::string> labels);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace fprune
