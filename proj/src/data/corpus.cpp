#include "etcon/data/corpus.hpp"

#include <algorithm>
#include <set>

#include "etcon/rng.hpp"

namespace etcon::data {

namespace {

const std::vector<std::string> kCopyWords = {"apple", "river",  "stone",  "cloud",  "tiger",  "lamp",
                                             "glass", "wheel",  "candle", "mirror", "forest", "bridge",
                                             "garden", "anchor", "pencil", "window"};

constexpr std::size_t kSkillTrain = 160;
constexpr std::size_t kSkillHoldout = 20;

std::string qa_doc(const std::string& question, const std::string& think, const std::string& answer) {
  return eval_prompt(question) + " " + think + " " + answer_block(answer) + " <eos>";
}

// Draws distinct tasks from `make` until both pools are full.
template <class Make>
void draw_tasks(Make make, Rng& rng, std::vector<SkillTask>& train_out, std::vector<SkillTask>& hold_out) {
  std::vector<SkillTask> train, hold;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (hold.size() < kSkillHoldout || train.size() < kSkillTrain) {
    if (++attempts > 200000) break;
    SkillTask t = make(rng);
    if (!seen.insert(t.question).second) continue;
    if (hold.size() < kSkillHoldout) {
      hold.push_back(std::move(t));
    } else {
      train.push_back(std::move(t));
    }
  }
  train_out.insert(train_out.end(), train.begin(), train.end());
  hold_out.insert(hold_out.end(), hold.begin(), hold.end());
}

SkillTask make_copy(Rng& rng) {
  const auto& a = kCopyWords[rng.below(kCopyWords.size())];
  std::string b;
  do b = kCopyWords[rng.below(kCopyWords.size())];
  while (b == a);
  return {"copy", "repeat the words " + a + " " + b, a + " " + b, "<think> we copy the words " + a + " " + b + " . </think>"};
}

SkillTask make_compare(Rng& rng) {
  const std::size_t a = rng.below(21);
  std::size_t b;
  do b = rng.below(21);
  while (b == a);
  const auto sa = std::to_string(a), sb = std::to_string(b), sc = std::to_string(std::max(a, b));
  return {"compare", "which number is larger : " + sa + " or " + sb + " ?", sc,
          "<think> we compare " + sa + " and " + sb + " . the larger is " + sc + " . </think>"};
}

SkillTask make_count(Rng& rng) {
  const std::size_t k = 1 + rng.below(6);
  std::string words;
  for (std::size_t i = 0; i < k; ++i) words += (i ? " " : "") + kCopyWords[rng.below(kCopyWords.size())];
  const auto sk = std::to_string(k);
  return {"count", "how many words : " + words + " ?", sk,
          "<think> we count the words . there are " + sk + " words . </think>"};
}

}  // namespace

std::string eval_prompt(const std::string& question) { return std::string(kReasonPrefix) + " " + question; }

std::string answer_block(const std::string& answer) { return "<answer> \\boxed{ " + answer + " } </answer>"; }

std::string templated_think(const std::string& subject, const std::string& phrase, const std::string& answer) {
  return "<think> " + subject + " is a person . we recall the " + phrase + " of " + subject + " . the " + phrase +
         " of " + subject + " is " + answer + " . </think>";
}

Corpus render_corpus(const FactWorld& world) {
  Corpus c;
  Rng rng(derive_seed(world.seed, "corpus"));
  for (std::size_t i = 0; i < world.facts.size(); ++i) {
    const auto& f = world.facts[i];
    const auto& rel = world.relation(f.relation);
    for (std::size_t s = 0; s < rel.statements.size(); ++s) {
      std::string doc = fill(rel.statements[s], f.subject, f.object) + " <eos>";
      if (i % 10 == 0 && s + 1 == rel.statements.size()) {
        c.heldout.push_back(std::move(doc));
      } else {
        c.documents.push_back(std::move(doc));
      }
    }
    const std::string think = templated_think(f.subject, rel.phrase, f.object);
    for (const auto& q : rel.questions) {
      const std::string question = fill(q, f.subject);
      c.documents.push_back(qa_doc(question, think, f.object));
      c.documents.push_back("answer " + question + " " + answer_block(f.object) + " <eos>");
    }
  }
  draw_tasks(make_copy, rng, c.skill_train, c.holdout);
  draw_tasks(make_compare, rng, c.skill_train, c.holdout);
  draw_tasks(make_count, rng, c.skill_train, c.holdout);
  for (const auto& t : c.skill_train) c.documents.push_back(qa_doc(t.question, t.think, t.answer));
  rng.shuffle(c.documents);
  return c;
}

nlohmann::json skill_to_json(const SkillTask& t) {
  return {{"skill", t.skill}, {"question", t.question}, {"answer", t.answer}, {"think", t.think}};
}

SkillTask skill_from_json(const nlohmann::json& j) {
  return {j.at("skill").get<std::string>(), j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
          j.value("think", std::string())};
}

}  // namespace etcon::data
