#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "etcon/consolidate/grpo.hpp"
#include "etcon/data/world.hpp"
#include "etcon/harness/report.hpp"
#include "etcon/harness/run.hpp"
#include "etcon/io.hpp"
#include "etcon/judge/judge.hpp"

using namespace etcon;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kAbort = 3, kFixture = 4 };

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int judge_fixtures(const std::string& path) {
  const auto fixtures = judge::load_fixtures(path.empty() ? judge::default_fixture_path() : path);
  int failed = 0;
  for (const auto& f : fixtures) {
    const auto v = judge::grade(f.question, f.gold, f.predicted);
    bool ok = v.grade == f.expected_grade;
    if (f.expected_reason && v.reason != *f.expected_reason) ok = false;
    std::printf("%-4s %-20s %s/%s\n", ok ? "ok" : "FAIL", f.id.c_str(), judge::to_string(v.grade).c_str(),
                judge::to_string(v.reason).c_str());
    failed += !ok;
  }
  std::printf("%zu fixtures, %d failed\n", fixtures.size(), failed);
  return failed ? kFixture : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edit-then-consolidate lab"};
  app.require_subcommand(1);
  std::string config_path, run_dir = "runs/default";
  std::vector<std::string> overrides;
  auto common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "JSON config file");
    c->add_option("--override", overrides, "dotted.key=value, repeatable");
    c->add_option("--run-dir", run_dir, "run directory");
  };

  auto* gen = app.add_subcommand("gen-data", "write facts, edits, holdout and vocabulary");
  common(gen);
  auto* pre = app.add_subcommand("pretrain", "pretrain the base model");
  common(pre);
  std::string out_dir, model_dir;
  pre->add_option("--out", out_dir, "model output directory (default <run-dir>/pretrained)");

  auto* edit = app.add_subcommand("edit", "apply a range of edits to a model");
  common(edit);
  std::size_t begin = 0, end = 0, edits_done = 0, pass = 1;
  edit->add_option("--model", model_dir, "input model directory")->required();
  edit->add_option("--out", out_dir, "output model directory")->required();
  edit->add_option("--begin", begin, "first edit index");
  edit->add_option("--end", end, "one past the last edit index (default: all)");

  auto* cons = app.add_subcommand("consolidate", "one consolidation pass");
  common(cons);
  cons->add_option("--model", model_dir, "input model directory")->required();
  cons->add_option("--out", out_dir, "output model directory")->required();
  cons->add_option("--edits-done", edits_done, "edits covered by the reasoning set (default: all)");
  cons->add_option("--pass", pass, "pass index, selects the seed");

  auto* eval = app.add_subcommand("evaluate", "score a model on the edit set and holdout");
  common(eval);
  eval->add_option("--model", model_dir, "model directory")->required();
  eval->add_option("--edits-done", edits_done, "edits to score (default: all)");

  auto* run = app.add_subcommand("run", "sequential edit-then-consolidate run with checkpoints");
  common(run);
  bool fresh = false;
  std::size_t stop_after = 0;
  run->add_flag("--fresh", fresh, "discard existing checkpoints instead of resuming");
  run->add_option("--stop-after", stop_after, "stop after writing this checkpoint");

  auto* rep = app.add_subcommand("report", "rebuild report.csv and report.txt");
  rep->add_option("--run-dir", run_dir, "run directory");

  auto* fix = app.add_subcommand("judge-fixtures", "grade the shipped judge fixtures");
  std::string fixture_path;
  fix->add_option("--fixtures", fixture_path, "fixture JSONL file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*fix) return judge_fixtures(fixture_path);
    if (*rep) {
      harness::write_report(run_dir);
      std::cout << io::read_file(fs::path(run_dir) / "report.txt");
      return kOk;
    }
    const auto cfg = harness::load_config(config_path, overrides);
    if (*run) {
      harness::RunOptions ro;
      ro.resume = !fresh;
      ro.stop_after = stop_after;
      ro.log = log_line;
      const auto sum = harness::run_sequential(cfg, run_dir, ro);
      for (const auto& m : sum.metrics) std::cout << m.dump() << "\n";
      return kOk;
    }
    const auto p = harness::prepare_data(cfg);
    if (*gen) {
      harness::write_data(p, run_dir);
      io::atomic_write(fs::path(run_dir) / "config.json", cfg.snapshot.dump(2) + "\n");
      std::printf("%zu facts, %zu edits, %zu holdout tasks, vocabulary %zu\n", p.world.facts.size(), p.edits.size(),
                  p.corpus.holdout.size(), p.vocab.size());
      return kOk;
    }
    if (*pre) {
      auto model = harness::pretrained_model(cfg, p, log_line);
      model.save(out_dir.empty() ? fs::path(run_dir) / "pretrained" : fs::path(out_dir));
      return kOk;
    }
    auto model = lm::ModelState::load(model_dir);
    if (model.config().vocab_size != p.vocab.size()) {
      throw harness::ConfigError("model vocabulary does not match the configured data");
    }
    if (*edit) {
      const std::size_t stop = end ? std::min(end, p.edits.size()) : p.edits.size();
      const auto el = harness::edit_range(model, p, begin, stop, cfg);
      model.save(out_dir);
      io::write_jsonl(fs::path(out_dir) / "edits_log.jsonl", el.edits);
      for (const auto& r : el.edits) std::cout << r.dump() << "\n";
      return kOk;
    }
    const std::size_t done = edits_done ? std::min(edits_done, p.edits.size()) : p.edits.size();
    if (*cons) {
      const auto res = harness::consolidate_pass(model, p, done, pass, cfg, nullptr, log_line);
      model.save(out_dir);
      io::atomic_write(fs::path(out_dir) / "reward_curve.csv", consolidate::reward_curve_csv(res.curve));
      std::cout << consolidate::reward_curve_csv(res.curve);
      return kOk;
    }
    if (*eval) {
      const std::vector<data::EditInstance> slice(p.edits.begin(), p.edits.begin() + static_cast<long>(done));
      const auto row = harness::evaluate_stage(model, p, slice, "evaluate", done, harness::eval_options(cfg));
      std::cout << row.dump() << "\n";
      return kOk;
    }
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const data::SpecError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kAbort;
  }
  return kOk;
}
