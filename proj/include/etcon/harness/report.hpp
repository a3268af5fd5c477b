#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace etcon::harness {

// stage,edits_done,reliability,generalization,locality,general_capability
std::string report_csv(const std::vector<nlohmann::json>& metrics);

// Metrics table followed by a first/last summary of each reward curve.
std::string report_text(const std::vector<nlohmann::json>& metrics,
                        const std::vector<std::pair<std::string, std::string>>& curves);

// Writes report.csv and report.txt from the files already in `run_dir`.
void write_report(const std::filesystem::path& run_dir);

}  // namespace etcon::harness
