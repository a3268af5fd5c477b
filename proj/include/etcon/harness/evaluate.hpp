#pragma once

#include <functional>
#include <string>
#include <vector>

#include "etcon/data/corpus.hpp"
#include "etcon/data/edits.hpp"
#include "etcon/harness/config.hpp"
#include "etcon/judge/judge.hpp"
#include "etcon/lm/decode.hpp"

namespace etcon::harness {

struct EvalOptions {
  std::size_t max_new_tokens = 64;
  std::size_t workers = 1;
  JudgeConfig judge;
};

struct EvalItem {
  std::string kind;  // reliability | generalization | locality | general
  std::string id;
  std::string question;
  std::string gold;
  std::string output;
  judge::Verdict verdict;
};

nlohmann::json item_to_json(const EvalItem& it);

struct Metrics {
  double reliability = 0.0;
  double generalization = 0.0;
  double locality = 0.0;
  std::size_t n_reliability = 0;
  std::size_t n_generalization = 0;
  std::size_t n_locality = 0;
  std::vector<EvalItem> items;

  nlohmann::json to_json() const;
};

// Greedy answers to eval_prompt(question) for each question.
std::vector<std::string> answer_all(const lm::ModelState& model, const lm::Vocab& vocab,
                                    const std::vector<std::string>& questions, const EvalOptions& opt);

std::vector<judge::Verdict> grade_all(const std::vector<judge::GradeRequest>& reqs, const JudgeConfig& cfg);

// Scores against a_new for the edit question and its rephrasings, and
// against the original object for locality probes. Percentages.
Metrics evaluate_edits(const lm::ModelState& model, const lm::Vocab& vocab,
                       const std::vector<data::EditInstance>& edits, const EvalOptions& opt);

// Accuracy (%) on the held-out skill tasks.
double eval_general(const lm::ModelState& model, const lm::Vocab& vocab, const std::vector<data::SkillTask>& tasks,
                    const EvalOptions& opt, std::vector<EvalItem>* items = nullptr);

}  // namespace etcon::harness
