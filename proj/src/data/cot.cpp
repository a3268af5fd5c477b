#include "etcon/data/cot.hpp"

#include <stdexcept>

#include "etcon/data/corpus.hpp"
#include "etcon/lm/decode.hpp"
#include "etcon/rng.hpp"

namespace etcon::data {

namespace {

std::size_t count(const std::string& s, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

CotMode cot_mode_from_string(const std::string& s) {
  if (s == "templated") return CotMode::templated;
  if (s == "model_generated") return CotMode::model_generated;
  throw std::invalid_argument("cot mode must be templated or model_generated, got " + s);
}

std::string to_string(CotMode m) { return m == CotMode::templated ? "templated" : "model_generated"; }

std::optional<std::string> think_block(const std::string& generated) {
  if (count(generated, lm::marker::think_open) != 1 || count(generated, lm::marker::think_close) != 1) {
    return std::nullopt;
  }
  const auto a = generated.find(lm::marker::think_open);
  const auto b = generated.find(lm::marker::think_close);
  if (b < a) return std::nullopt;
  return generated.substr(a, b + lm::marker::think_close.size() - a);
}

std::string overwrite_answer(const std::string& think, const std::string& answer) {
  return think + " " + answer_block(answer);
}

bool asserts_old_answer(const std::string& think, const std::string& old_answer) {
  std::string body = think;
  for (auto m : {lm::marker::think_open, lm::marker::think_close}) {
    if (auto p = body.find(m); p != std::string::npos) body.erase(p, m.size());
  }
  // Last non-empty sentence.
  std::string last, cur;
  for (char c : body) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      if (cur.find_first_not_of(' ') != std::string::npos) last = cur;
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (cur.find_first_not_of(' ') != std::string::npos) last = cur;
  for (const auto& w : lm::Vocab::split_words(last)) {
    if (w == old_answer) return true;
  }
  return false;
}

TrainingLabel make_label(const std::string& instance_id, const std::string& text, const std::string& answer,
                         CotMode mode) {
  TrainingLabel l;
  l.instance_id = instance_id;
  l.text = text;
  l.mode = mode;
  const auto words = lm::Vocab::split_words(text);
  const auto answer_words = lm::Vocab::split_words(answer);
  // The answer sits between the last \boxed{ and its closing brace.
  std::size_t box = words.size();
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == lm::marker::box_open) box = i;
  }
  if (box == words.size() || box + 1 + answer_words.size() > words.size()) {
    throw std::invalid_argument("label has no boxed answer: " + text);
  }
  for (std::size_t k = 0; k < answer_words.size(); ++k) {
    if (words[box + 1 + k] != answer_words[k]) throw std::invalid_argument("label box does not hold the answer");
  }
  l.answer_begin = box + 1;
  l.answer_end = box + 1 + answer_words.size();
  return l;
}

TrainingLabel build_cot_label(const EditInstance& e, const CotOptions& opt, const lm::ModelState* model,
                              const lm::Vocab* vocab) {
  const std::string templated =
      overwrite_answer(templated_think(e.subject, e.relation_phrase, e.new_answer), e.new_answer);
  if (opt.mode == CotMode::templated) return make_label(e.id, templated, e.new_answer, CotMode::templated);
  if (!model || !vocab) throw std::invalid_argument("model_generated labels need the current model and vocabulary");

  const auto prompt = vocab->encode(eval_prompt(e.question));
  for (std::size_t attempt = 0; attempt < opt.retry_budget; ++attempt) {
    lm::DecodeParams dp;
    dp.temperature = 1.0;
    dp.top_p = 0.99;
    dp.max_new_tokens = opt.max_new_tokens;
    dp.seed = derive_seed(opt.seed, "cot/" + e.id, attempt);
    const auto g = lm::generate(*model, prompt, dp);
    const auto think = think_block(vocab->decode(g.tokens));
    if (!think || asserts_old_answer(*think, e.old_answer)) continue;
    auto l = make_label(e.id, overwrite_answer(*think, e.new_answer), e.new_answer, CotMode::model_generated);
    l.attempts = attempt + 1;
    return l;
  }
  auto l = make_label(e.id, templated, e.new_answer, CotMode::templated);
  l.fallback = true;
  l.attempts = opt.retry_budget;
  return l;
}

}  // namespace etcon::data
