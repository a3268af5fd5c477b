#include "etcon/harness/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "etcon/io.hpp"

namespace etcon::harness {

namespace fs = std::filesystem;

namespace {

std::string num(double v, const char* f = "%.2f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

}  // namespace

std::string report_csv(const std::vector<nlohmann::json>& metrics) {
  std::string out = "stage,edits_done,reliability,generalization,locality,general_capability\n";
  for (const auto& m : metrics) {
    out += m.at("stage").get<std::string>() + "," + std::to_string(m.at("edits_done").get<std::size_t>()) + "," +
           num(m.at("reliability").get<double>()) + "," + num(m.at("generalization").get<double>()) + "," +
           num(m.at("locality").get<double>()) + "," + num(m.at("general_capability").get<double>()) + "\n";
  }
  return out;
}

std::string report_text(const std::vector<nlohmann::json>& metrics,
                        const std::vector<std::pair<std::string, std::string>>& curves) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %8s %8s %8s %8s\n", "stage", "edits", "rel", "gen", "loc", "general");
  out += line;
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof line, "%-10s %6zu %8.2f %8.2f %8.2f %8.2f\n", m.at("stage").get<std::string>().c_str(),
                  m.at("edits_done").get<std::size_t>(), m.at("reliability").get<double>(),
                  m.at("generalization").get<double>(), m.at("locality").get<double>(),
                  m.at("general_capability").get<double>());
    out += line;
  }
  for (const auto& [name, csv] : curves) {
    const auto lines = split(csv, '\n');
    if (lines.size() < 2) {
      out += name + ": empty\n";
      continue;
    }
    const auto first = split(lines[1], ',');
    const auto last = split(lines.back(), ',');
    out += name + ": " + std::to_string(lines.size() - 1) + " steps, mean reward " + first.at(1) + " -> " +
           last.at(1) + "\n";
  }
  return out;
}

void write_report(const fs::path& run_dir) {
  const auto metrics = io::read_jsonl(run_dir / "metrics.jsonl");
  std::vector<std::pair<std::string, std::string>> curves;
  std::vector<std::size_t> ids;
  for (const auto& ent : fs::directory_iterator(run_dir)) {
    const std::string name = ent.path().filename().string();
    if (name.starts_with("reward_curve_") && name.ends_with(".csv")) {
      ids.push_back(std::stoul(name.substr(13, name.size() - 17)));
    }
  }
  std::sort(ids.begin(), ids.end());
  for (auto k : ids) {
    const std::string name = "reward_curve_" + std::to_string(k) + ".csv";
    curves.emplace_back(name, io::read_file(run_dir / name));
  }
  io::atomic_write(run_dir / "report.csv", report_csv(metrics));
  io::atomic_write(run_dir / "report.txt", report_text(metrics, curves));
}

}  // namespace etcon::harness
