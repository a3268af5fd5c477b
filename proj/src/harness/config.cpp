#include "etcon/harness/config.hpp"

#include "etcon/io.hpp"

namespace etcon::harness {

nlohmann::json default_config() {
  lm::ModelConfig m;
  nlohmann::json model = m.to_json();
  model.erase("vocab_size");
  lm::PretrainSchedule ps;
  ps.steps = 3000;
  return {
      {"seed", 7},
      {"workers", 1},
      {"world", {{"n_entities", 50}}},
      {"edits", {{"n_edits", 50}, {"n_rephrasings", 2}, {"n_probes", 2}}},
      {"model", model},
      {"pretrain", ps.to_json()},
      {"pretrained_cache", ""},
      {"cot", {{"mode", "templated"}, {"retry_budget", 4}, {"max_new_tokens", 64}}},
      {"edit", editor::EditConfig{}.to_json()},
      {"consolidate", consolidate::ConsolidateConfig{}.to_json()},
      {"eval", {{"max_new_tokens", 64}}},
      {"checkpoint_every", 25},
      {"skip_consolidation", false},
      {"skip_editing", false},
      {"judge", {{"kind", "rule_based"}, {"remote", judge::RemoteEndpoint{}.to_json()}}},
  };
}

nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config " + (path.empty() ? "root" : path) + " must be an object");
  nlohmann::json out = base;
  for (const auto& [key, value] : user.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key: " + p);
    if (base[key].is_object() && !base[key].empty()) {
      out[key] = merge_config(base[key], value, p);
    } else {
      out[key] = value;
    }
  }
  return out;
}

void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key: " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object() && !node->empty()) throw ConfigError("override must target a leaf key: " + key);
  *node = value;
}

RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.workers = j.at("workers").get<std::size_t>();
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    c.n_entities = j.at("world").at("n_entities").get<std::size_t>();
    const auto& e = j.at("edits");
    c.edits.n_edits = e.at("n_edits").get<std::size_t>();
    c.edits.n_rephrasings = e.at("n_rephrasings").get<std::size_t>();
    c.edits.n_probes = e.at("n_probes").get<std::size_t>();
    nlohmann::json model = j.at("model");
    model["vocab_size"] = 1;  // filled in once the vocabulary exists
    c.model = lm::ModelConfig::from_json(model);
    c.pretrain = lm::PretrainSchedule::from_json(j.at("pretrain"));
    c.pretrain.seed = derive_seed(c.seed, "pretrain");
    c.pretrained_cache = j.at("pretrained_cache").get<std::string>();
    const auto& cot = j.at("cot");
    c.cot.mode = data::cot_mode_from_string(cot.at("mode").get<std::string>());
    c.cot.retry_budget = cot.at("retry_budget").get<std::size_t>();
    c.cot.max_new_tokens = cot.at("max_new_tokens").get<std::size_t>();
    c.cot.seed = derive_seed(c.seed, "cot");
    c.edit = editor::EditConfig::from_json(j.at("edit"));
    c.consolidate = consolidate::ConsolidateConfig::from_json(j.at("consolidate"));
    c.eval_max_new_tokens = j.at("eval").at("max_new_tokens").get<std::size_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    if (c.checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    c.skip_consolidation = j.at("skip_consolidation").get<bool>();
    c.skip_editing = j.at("skip_editing").get<bool>();
    if (c.skip_consolidation && c.skip_editing) {
      throw ConfigError("skip_consolidation and skip_editing cannot both be set");
    }
    c.judge.kind = j.at("judge").at("kind").get<std::string>();
    if (c.judge.kind != "rule_based" && c.judge.kind != "remote") {
      throw ConfigError("judge.kind must be rule_based or remote");
    }
    c.judge.remote = judge::RemoteEndpoint::from_json(j.at("judge").at("remote"));
    if (c.judge.kind == "remote" && c.judge.remote.url.empty()) throw ConfigError("judge.remote.url is required");
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed config: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  c.snapshot = j;
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json cfg = default_config();
  if (!path.empty()) {
    nlohmann::json user;
    try {
      user = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    } catch (const io::IoError& e) {
      throw ConfigError(e.what());
    }
    cfg = merge_config(cfg, user);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return parse_config(cfg);
}

}  // namespace etcon::harness
