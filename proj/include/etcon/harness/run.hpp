#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "etcon/data/corpus.hpp"
#include "etcon/data/edits.hpp"
#include "etcon/harness/config.hpp"
#include "etcon/harness/evaluate.hpp"
#include "etcon/lm/model.hpp"

namespace etcon::harness {

namespace fs = std::filesystem;

class RunAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Prepared {
  data::FactWorld world;
  data::Corpus corpus;
  std::vector<data::EditInstance> edits;
  lm::Vocab vocab;
};

using Logger = std::function<void(const std::string&)>;

Prepared prepare_data(const RunConfig& cfg);
// facts.jsonl, edits.jsonl, holdout.jsonl and vocab.json.
void write_data(const Prepared& p, const fs::path& dir);

// Pretrains, or loads from cfg.pretrained_cache when a matching model is there.
lm::ModelState pretrained_model(const RunConfig& cfg, const Prepared& p, const Logger& log = {});

EvalOptions eval_options(const RunConfig& cfg);

// One stage row for metrics.jsonl.
nlohmann::json evaluate_stage(const lm::ModelState& model, const Prepared& p,
                              const std::vector<data::EditInstance>& edits, const std::string& stage,
                              std::size_t edits_done, const EvalOptions& opt,
                              std::vector<EvalItem>* items = nullptr);

struct EditLog {
  std::vector<nlohmann::json> edits;  // one row per edit
  std::vector<std::string> ratio_rows;
};

// Applies edits[begin, end) in order to `model` with a rotating reference.
EditLog edit_range(lm::ModelState& model, const Prepared& p, std::size_t begin, std::size_t end,
                   const RunConfig& cfg);

// One consolidation pass over the reasoning set of edits[0, edits_done).
consolidate::ConsolidateResult consolidate_pass(lm::ModelState& model, const Prepared& p, std::size_t edits_done,
                                                std::size_t pass, const RunConfig& cfg,
                                                std::vector<nlohmann::json>* rollouts = nullptr,
                                                const Logger& log = {});

struct RunOptions {
  bool resume = true;
  // Stop after writing ckpt_<stop_after>; 0 runs to the end.
  std::size_t stop_after = 0;
  Logger log;
};

struct RunSummary {
  std::vector<nlohmann::json> metrics;
  std::size_t checkpoints = 0;  // including the baseline ckpt_0
  bool complete = false;
};

// Run directory:
//   config.json facts.jsonl edits.jsonl holdout.jsonl vocab.json
//   checkpoints/ckpt_<k>/  metrics.jsonl edits_log.jsonl ratios.csv
//   reward_curve_<k>.csv validation_<k>.csv eval_<k>.jsonl [rollouts_<k>.jsonl]
//   report.csv report.txt
RunSummary run_sequential(const RunConfig& cfg, const fs::path& run_dir, const RunOptions& opt = {});

}  // namespace etcon::harness
