#include "etcon/harness/evaluate.hpp"

#include <stdexcept>

#include "etcon/judge/remote.hpp"
#include "etcon/parallel.hpp"

namespace etcon::harness {

namespace {

double percent(std::size_t ok, std::size_t n) { return n ? 100.0 * static_cast<double>(ok) / static_cast<double>(n) : 0.0; }

void run_items(std::vector<EvalItem>& items, const lm::ModelState& model, const lm::Vocab& vocab,
               const EvalOptions& opt) {
  std::vector<std::string> qs;
  for (const auto& it : items) qs.push_back(it.question);
  const auto outs = answer_all(model, vocab, qs, opt);
  std::vector<judge::GradeRequest> reqs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].output = outs[i];
    reqs.push_back({items[i].question, items[i].gold, outs[i]});
  }
  const auto verdicts = grade_all(reqs, opt.judge);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].verdict = verdicts[i];
}

}  // namespace

nlohmann::json item_to_json(const EvalItem& it) {
  return {{"kind", it.kind},
          {"id", it.id},
          {"question", it.question},
          {"gold", it.gold},
          {"output", it.output},
          {"grade", judge::to_string(it.verdict.grade)},
          {"reason", judge::to_string(it.verdict.reason)}};
}

nlohmann::json Metrics::to_json() const {
  return {{"reliability", reliability},
          {"generalization", generalization},
          {"locality", locality},
          {"n_reliability", n_reliability},
          {"n_generalization", n_generalization},
          {"n_locality", n_locality}};
}

std::vector<std::string> answer_all(const lm::ModelState& model, const lm::Vocab& vocab,
                                    const std::vector<std::string>& questions, const EvalOptions& opt) {
  lm::DecodeParams dp;
  dp.temperature = 0.0;
  dp.max_new_tokens = opt.max_new_tokens;
  std::vector<std::string> out(questions.size());
  parallel_for(questions.size(), opt.workers, [&](std::size_t i) {
    const auto g = lm::generate(model, vocab.encode(data::eval_prompt(questions[i])), dp);
    out[i] = vocab.decode(g.tokens);
  });
  return out;
}

std::vector<judge::Verdict> grade_all(const std::vector<judge::GradeRequest>& reqs, const JudgeConfig& cfg) {
  if (cfg.kind == "remote") return judge::remote_grade_all(cfg.remote, reqs);
  std::vector<judge::Verdict> out;
  out.reserve(reqs.size());
  for (const auto& r : reqs) out.push_back(judge::grade(r.question, r.gold, r.predicted));
  return out;
}

Metrics evaluate_edits(const lm::ModelState& model, const lm::Vocab& vocab,
                       const std::vector<data::EditInstance>& edits, const EvalOptions& opt) {
  if (edits.empty()) throw std::invalid_argument("evaluate: empty edit set");
  Metrics m;
  for (const auto& e : edits) {
    m.items.push_back({"reliability", e.id, e.question, e.new_answer, {}, {}});
    for (std::size_t r = 0; r < e.rephrasings.size(); ++r) {
      m.items.push_back({"generalization", e.id + "/r" + std::to_string(r + 1), e.rephrasings[r], e.new_answer, {}, {}});
    }
    for (std::size_t p = 0; p < e.locality_probes.size(); ++p) {
      const auto& probe = e.locality_probes[p];
      m.items.push_back({"locality", e.id + "/p" + std::to_string(p + 1), probe.question, probe.answer, {}, {}});
    }
  }
  run_items(m.items, model, vocab, opt);
  std::size_t ok_r = 0, ok_g = 0, ok_l = 0;
  for (const auto& it : m.items) {
    const bool ok = it.verdict.grade == judge::Grade::A_correct;
    if (it.kind == "reliability") {
      ++m.n_reliability;
      ok_r += ok;
    } else if (it.kind == "generalization") {
      ++m.n_generalization;
      ok_g += ok;
    } else {
      ++m.n_locality;
      ok_l += ok;
    }
  }
  m.reliability = percent(ok_r, m.n_reliability);
  m.generalization = percent(ok_g, m.n_generalization);
  m.locality = percent(ok_l, m.n_locality);
  return m;
}

double eval_general(const lm::ModelState& model, const lm::Vocab& vocab, const std::vector<data::SkillTask>& tasks,
                    const EvalOptions& opt, std::vector<EvalItem>* items) {
  if (tasks.empty()) throw std::invalid_argument("evaluate: empty holdout set");
  std::vector<EvalItem> local;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    local.push_back({"general", tasks[i].skill + "-" + std::to_string(i), tasks[i].question, tasks[i].answer, {}, {}});
  }
  run_items(local, model, vocab, opt);
  std::size_t ok = 0;
  for (const auto& it : local) ok += it.verdict.grade == judge::Grade::A_correct;
  if (items) items->insert(items->end(), local.begin(), local.end());
  return percent(ok, local.size());
}

}  // namespace etcon::harness
