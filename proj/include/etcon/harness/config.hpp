#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "etcon/consolidate/grpo.hpp"
#include "etcon/data/cot.hpp"
#include "etcon/data/edits.hpp"
#include "etcon/editor/tpsft.hpp"
#include "etcon/judge/remote.hpp"
#include "etcon/lm/pretrain.hpp"

namespace etcon::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JudgeConfig {
  std::string kind = "rule_based";  // rule_based | remote
  judge::RemoteEndpoint remote;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  std::size_t n_entities = 50;
  data::EditSetSpec edits;
  lm::ModelConfig model;
  lm::PretrainSchedule pretrain;
  std::string pretrained_cache;  // directory shared between runs; empty disables
  data::CotOptions cot;
  editor::EditConfig edit;
  consolidate::ConsolidateConfig consolidate;
  std::size_t eval_max_new_tokens = 64;
  std::size_t checkpoint_every = 25;
  bool skip_consolidation = false;
  bool skip_editing = false;
  JudgeConfig judge;

  nlohmann::json snapshot;  // effective configuration as loaded
};

nlohmann::json default_config();

// Recursively overlays `user` onto `base`. Keys missing from `base` are
// rejected with their dotted path.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& user, const std::string& path = "");

// "a.b.c=value"; value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& cfg, const std::string& assignment);

RunConfig parse_config(const nlohmann::json& effective);

// Defaults, then the file (when non-empty), then overrides.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace etcon::harness
