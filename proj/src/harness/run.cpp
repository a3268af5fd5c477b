#include "etcon/harness/run.hpp"

#include <cstdio>
#include <sstream>

#include "etcon/consolidate/grpo.hpp"
#include "etcon/data/cot.hpp"
#include "etcon/editor/tpsft.hpp"
#include "etcon/harness/report.hpp"
#include "etcon/io.hpp"
#include "etcon/lm/pretrain.hpp"

namespace etcon::harness {

namespace {

const char* const kLogs[] = {"metrics.jsonl", "edits_log.jsonl", "ratios.csv"};
constexpr const char* kRatioHeader = "edit_id,step,mean_ratio,clip_fraction,loss";

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

fs::path ckpt_dir(const fs::path& run_dir, std::size_t k) {
  return run_dir / "checkpoints" / ("ckpt_" + std::to_string(k));
}

// Highest checkpoint index on disk, or -1.
long last_checkpoint(const fs::path& run_dir) {
  long best = -1;
  const fs::path dir = run_dir / "checkpoints";
  if (!fs::exists(dir)) return best;
  for (const auto& ent : fs::directory_iterator(dir)) {
    const std::string name = ent.path().filename().string();
    if (!name.starts_with("ckpt_") || name.ends_with(".tmp")) continue;
    if (!fs::exists(ent.path() / "manifest.json")) continue;
    try {
      best = std::max(best, std::stol(name.substr(5)));
    } catch (const std::exception&) {
    }
  }
  return best;
}

void save_checkpoint(const lm::ModelState& model, const fs::path& run_dir, std::size_t k, std::size_t edits_done) {
  nlohmann::json extra = {{"checkpoint", k}, {"edits_done", edits_done}, {"counts", nlohmann::json::object()}};
  for (const char* f : kLogs) extra["counts"][f] = io::count_lines(run_dir / f);
  const fs::path final_dir = ckpt_dir(run_dir, k);
  fs::path tmp = final_dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  model.save(tmp, extra);
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

std::string cache_key(const RunConfig& cfg, const Prepared& p) {
  const nlohmann::json key = {{"seed", cfg.seed},
                              {"world", cfg.snapshot.at("world")},
                              {"model", cfg.snapshot.at("model")},
                              {"pretrain", cfg.snapshot.at("pretrain")},
                              {"vocab", p.vocab.to_json()}};
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(0, key.dump())));
  return buf;
}

}  // namespace

Prepared prepare_data(const RunConfig& cfg) {
  Prepared p;
  p.world = data::build_world(derive_seed(cfg.seed, "world"), cfg.n_entities);
  p.corpus = data::render_corpus(p.world);
  p.edits = data::make_edit_set(p.world, cfg.edits, derive_seed(cfg.seed, "edits"));
  std::vector<std::string> texts = p.corpus.documents;
  texts.insert(texts.end(), p.corpus.heldout.begin(), p.corpus.heldout.end());
  for (const auto& t : p.corpus.holdout) texts.push_back(data::eval_prompt(t.question) + " " + t.answer);
  // small worlds leave some objects unused, yet edits may still target them
  for (const auto& r : data::default_relations()) {
    for (const auto& o : r.objects) texts.push_back(o);
  }
  p.vocab = lm::Vocab::build(texts);
  return p;
}

void write_data(const Prepared& p, const fs::path& dir) {
  std::vector<nlohmann::json> facts, edits, holdout;
  for (std::size_t i = 0; i < p.world.facts.size(); ++i) facts.push_back(data::fact_to_json(p.world.facts[i], i));
  for (const auto& e : p.edits) edits.push_back(data::edit_to_json(e));
  for (const auto& t : p.corpus.holdout) holdout.push_back(data::skill_to_json(t));
  io::write_jsonl(dir / "facts.jsonl", facts);
  io::write_jsonl(dir / "edits.jsonl", edits);
  io::write_jsonl(dir / "holdout.jsonl", holdout);
  io::atomic_write(dir / "vocab.json", p.vocab.to_json().dump() + "\n");
}

lm::ModelState pretrained_model(const RunConfig& cfg, const Prepared& p, const Logger& log) {
  fs::path cached;
  if (!cfg.pretrained_cache.empty()) {
    cached = fs::path(cfg.pretrained_cache) / cache_key(cfg, p);
    if (fs::exists(cached / "manifest.json")) {
      say(log, "pretrain: loading " + cached.string());
      return lm::ModelState::load(cached);
    }
  }
  lm::ModelConfig mc = cfg.model;
  mc.vocab_size = p.vocab.size();
  auto model = lm::ModelState::init(mc, derive_seed(cfg.seed, "init"));
  std::vector<lm::Tokens> docs, held;
  for (const auto& d : p.corpus.documents) docs.push_back(p.vocab.encode(d, true));
  for (const auto& d : p.corpus.heldout) held.push_back(p.vocab.encode(d, true));
  say(log, "pretrain: " + std::to_string(docs.size()) + " documents, " + std::to_string(model.parameter_count()) +
               " parameters, " + std::to_string(cfg.pretrain.steps) + " steps");
  lm::PretrainResult res;
  try {
    res = lm::pretrain(model, docs, held, cfg.pretrain, [&](std::size_t step, double loss) {
      if (step % 250 == 0) say(log, "pretrain step " + std::to_string(step) + " loss " + fmt(loss));
    });
  } catch (const lm::DivergenceError& e) {
    throw RunAborted(std::string("pretraining diverged: ") + e.what());
  }
  say(log, "pretrain: heldout loss " + fmt(res.heldout_loss));
  if (!cached.empty()) {
    fs::path tmp = cached;
    tmp += ".tmp";
    fs::remove_all(tmp);
    model.save(tmp, {{"heldout_loss", res.heldout_loss}});
    std::error_code ec;
    fs::rename(tmp, cached, ec);  // a concurrent run may have won the race
    if (ec) fs::remove_all(tmp);
  }
  return model;
}

EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions o;
  o.max_new_tokens = cfg.eval_max_new_tokens;
  o.workers = cfg.workers;
  o.judge = cfg.judge;
  return o;
}

nlohmann::json evaluate_stage(const lm::ModelState& model, const Prepared& p,
                              const std::vector<data::EditInstance>& edits, const std::string& stage,
                              std::size_t edits_done, const EvalOptions& opt, std::vector<EvalItem>* items) {
  Metrics m = evaluate_edits(model, p.vocab, edits, opt);
  const double general = eval_general(model, p.vocab, p.corpus.holdout, opt, items);
  if (items) items->insert(items->begin(), m.items.begin(), m.items.end());
  nlohmann::json row = {{"stage", stage}, {"edits_done", edits_done}};
  row.update(m.to_json());
  row["general_capability"] = general;
  return row;
}

EditLog edit_range(lm::ModelState& model, const Prepared& p, std::size_t begin, std::size_t end,
                   const RunConfig& cfg) {
  EditLog log;
  auto pair = editor::PolicyPair::start(model);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& e = p.edits.at(i);
    data::CotOptions co = cfg.cot;
    const auto label = data::build_cot_label(e, co, &pair.policy, &p.vocab);
    const auto ex = editor::make_example(p.vocab, e, label);
    const auto rep = editor::apply_edit(pair, ex, e.id, cfg.edit, p.vocab);
    editor::rotate_reference(pair, pair.policy);
    nlohmann::json row = rep.to_json();
    row["label"] = label.text;
    row["cot_mode"] = data::to_string(label.mode);
    row["cot_fallback"] = label.fallback;
    row["cot_attempts"] = label.attempts;
    log.edits.push_back(row);
    for (const auto& s : rep.steps) {
      log.ratio_rows.push_back(e.id + "," + std::to_string(s.step) + "," + fmt(s.mean_ratio) + "," +
                               fmt(s.clip_fraction) + "," + fmt(s.loss));
    }
  }
  model.copy_values_from(pair.policy);
  return log;
}

consolidate::ConsolidateResult consolidate_pass(lm::ModelState& model, const Prepared& p, std::size_t edits_done,
                                                std::size_t pass, const RunConfig& cfg,
                                                std::vector<nlohmann::json>* rollouts, const Logger& log) {
  const std::vector<data::EditInstance> slice(p.edits.begin(), p.edits.begin() + static_cast<long>(edits_done));
  const auto prompts = consolidate::reasoning_set(slice, p.vocab);
  consolidate::ConsolidateHooks hooks;
  hooks.workers = cfg.workers;
  hooks.on_step = [&](const consolidate::StepStats& s) {
    if (s.step % 10 == 0) {
      say(log, "consolidate " + std::to_string(pass) + " step " + std::to_string(s.step) + " reward " +
                   fmt(s.mean_reward) + " kl " + fmt(s.mean_kl));
    }
  };
  std::size_t group_no = 0;
  if (rollouts) {
    hooks.on_group = [&](const consolidate::GroupBatch& g, const consolidate::Prompt& pr) {
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        rollouts->push_back({{"group", group_no},
                             {"prompt_id", pr.id},
                             {"member", i},
                             {"text", g.rollouts[i].text},
                             {"advantage", g.advantages.empty() ? 0.0 : g.advantages[i]},
                             {"reward", g.rollouts[i].reward.to_json()}});
      }
      ++group_no;
    };
  }
  try {
    return consolidate::consolidate(model, prompts, cfg.consolidate, derive_seed(cfg.seed, "consolidate", pass),
                                    p.vocab, hooks);
  } catch (const consolidate::StepAborted& e) {
    throw RunAborted(std::string("consolidation aborted: ") + e.what());
  }
}

RunSummary run_sequential(const RunConfig& cfg, const fs::path& run_dir, const RunOptions& opt) {
  fs::create_directories(run_dir);
  const std::string snapshot = cfg.snapshot.dump(2) + "\n";
  const fs::path cfg_path = run_dir / "config.json";
  if (opt.resume && fs::exists(cfg_path) && io::read_file(cfg_path) != snapshot) {
    throw ConfigError("run directory " + run_dir.string() + " holds a different configuration");
  }
  if (!opt.resume) {
    fs::remove_all(run_dir / "checkpoints");
    for (const char* f : kLogs) fs::remove(run_dir / f);
    for (const auto& ent : fs::directory_iterator(run_dir)) {
      const std::string name = ent.path().filename().string();
      if (name.starts_with("reward_curve_") || name.starts_with("validation_") || name.starts_with("rollouts_") ||
          name.starts_with("eval_") || name.starts_with("report.")) {
        fs::remove(ent.path());
      }
    }
  }
  io::atomic_write(cfg_path, snapshot);

  const Prepared p = prepare_data(cfg);
  write_data(p, run_dir);
  const std::size_t n = p.edits.size();
  const std::size_t blocks = (n + cfg.checkpoint_every - 1) / cfg.checkpoint_every;
  const EvalOptions eo = eval_options(cfg);

  lm::ModelState model;
  std::size_t start = 0;
  const long last = opt.resume ? last_checkpoint(run_dir) : -1;
  if (last >= 0) {
    nlohmann::json extra;
    model = lm::ModelState::load(ckpt_dir(run_dir, static_cast<std::size_t>(last)), &extra);
    for (const char* f : kLogs) io::truncate_lines(run_dir / f, extra.at("counts").at(f).get<std::size_t>());
    start = static_cast<std::size_t>(last) + 1;
    say(opt.log, "resuming after checkpoint " + std::to_string(last));
  } else {
    for (const char* f : kLogs) fs::remove(run_dir / f);
    io::append_line(run_dir / "ratios.csv", kRatioHeader);
    model = pretrained_model(cfg, p, opt.log);
    std::vector<EvalItem> items;
    const auto row = evaluate_stage(model, p, p.edits, "baseline", 0, eo, &items);
    io::append_line(run_dir / "metrics.jsonl", row.dump());
    std::vector<nlohmann::json> rows;
    for (const auto& it : items) rows.push_back(item_to_json(it));
    io::write_jsonl(run_dir / "eval_0.jsonl", rows);
    save_checkpoint(model, run_dir, 0, 0);
    say(opt.log, "baseline: " + row.dump());
    start = 1;
  }

  RunSummary sum;
  for (std::size_t k = start; k <= blocks; ++k) {
    if (opt.stop_after && k > opt.stop_after) break;
    const std::size_t lo = (k - 1) * cfg.checkpoint_every;
    const std::size_t hi = std::min(n, k * cfg.checkpoint_every);
    if (!cfg.skip_editing) {
      const auto el = edit_range(model, p, lo, hi, cfg);
      for (const auto& r : el.edits) io::append_line(run_dir / "edits_log.jsonl", r.dump());
      for (const auto& r : el.ratio_rows) io::append_line(run_dir / "ratios.csv", r);
      say(opt.log, "edited " + std::to_string(lo) + ".." + std::to_string(hi));
    }
    if (!cfg.skip_consolidation) {
      std::vector<nlohmann::json> rollouts;
      const auto res =
          consolidate_pass(model, p, hi, k, cfg, cfg.consolidate.dump_rollouts ? &rollouts : nullptr, opt.log);
      io::atomic_write(run_dir / ("reward_curve_" + std::to_string(k) + ".csv"),
                       consolidate::reward_curve_csv(res.curve));
      std::ostringstream vs;
      vs << "step,reliability\n";
      for (const auto& v : res.validation) vs << v.step << "," << fmt(v.reliability) << "\n";
      io::atomic_write(run_dir / ("validation_" + std::to_string(k) + ".csv"), vs.str());
      if (cfg.consolidate.dump_rollouts) io::write_jsonl(run_dir / ("rollouts_" + std::to_string(k) + ".jsonl"), rollouts);
    }
    const std::vector<data::EditInstance> slice(p.edits.begin(), p.edits.begin() + static_cast<long>(hi));
    std::vector<EvalItem> items;
    const auto row = evaluate_stage(model, p, slice, "ckpt_" + std::to_string(k), hi, eo, &items);
    io::append_line(run_dir / "metrics.jsonl", row.dump());
    std::vector<nlohmann::json> rows;
    for (const auto& it : items) rows.push_back(item_to_json(it));
    io::write_jsonl(run_dir / ("eval_" + std::to_string(k) + ".jsonl"), rows);
    save_checkpoint(model, run_dir, k, hi);
    say(opt.log, "checkpoint " + std::to_string(k) + ": " + row.dump());
  }

  sum.metrics = io::read_jsonl(run_dir / "metrics.jsonl");
  sum.checkpoints = static_cast<std::size_t>(last_checkpoint(run_dir) + 1);
  sum.complete = sum.checkpoints == blocks + 1;
  if (sum.complete) write_report(run_dir);
  return sum;
}

}  // namespace etcon::harness
