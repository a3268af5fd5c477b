#include "etcon/consolidate/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "etcon/data/cot.hpp"
#include "etcon/lm/vocab.hpp"

namespace etcon::consolidate {

namespace {

std::size_t count(const std::string& s, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

bool think_ok(const std::string& t) {
  if (count(t, lm::marker::think_open) != 1 || count(t, lm::marker::think_close) != 1) return false;
  const auto a = t.find(lm::marker::think_open), b = t.find(lm::marker::think_close);
  if (b < a) return false;
  const auto ans = t.find(lm::marker::answer_open);
  return ans == std::string::npos || b < ans;
}

// One answer block holding exactly one closed box.
bool answer_ok(const std::string& t) {
  if (count(t, lm::marker::answer_open) != 1 || count(t, lm::marker::answer_close) != 1) return false;
  const auto a = t.find(lm::marker::answer_open), b = t.find(lm::marker::answer_close);
  if (b < a) return false;
  const std::string body = t.substr(a, b - a);
  if (count(body, lm::marker::box_open) != 1) return false;
  const auto box = body.find(lm::marker::box_open);
  return body.find('}', box) != std::string::npos;
}

// Normalized `needle` appears as a whole-word run in the think block.
bool in_think(const std::string& text, const std::string& needle) {
  const auto think = data::think_block(text);
  if (!think) return false;
  const auto words = lm::Vocab::split_words(judge::normalize(*think));
  const auto want = lm::Vocab::split_words(judge::normalize(needle));
  if (want.empty() || words.size() < want.size()) return false;
  for (std::size_t i = 0; i + want.size() <= words.size(); ++i) {
    if (std::equal(want.begin(), want.end(), words.begin() + static_cast<long>(i))) return true;
  }
  return false;
}

}  // namespace

void RewardWeights::validate() const {
  for (double w : {accuracy, format, cleanliness, consistency}) {
    if (!(w >= 0.0)) throw std::invalid_argument("reward weights must be nonnegative");
  }
  if (std::abs(accuracy + format + cleanliness + consistency - 1.0) > 1e-9) {
    throw std::invalid_argument("reward weights must sum to 1");
  }
}

nlohmann::json RewardWeights::to_json() const {
  return {{"accuracy", accuracy}, {"format", format}, {"cleanliness", cleanliness}, {"consistency", consistency}};
}

RewardWeights RewardWeights::from_json(const nlohmann::json& j) {
  RewardWeights w;
  w.accuracy = j.value("accuracy", w.accuracy);
  w.format = j.value("format", w.format);
  w.cleanliness = j.value("cleanliness", w.cleanliness);
  w.consistency = j.value("consistency", w.consistency);
  w.validate();
  return w;
}

nlohmann::json RewardBreakdown::to_json() const {
  return {{"accuracy", accuracy},
          {"format", format},
          {"cleanliness", cleanliness},
          {"consistency", consistency},
          {"total", total},
          {"extraction", judge::to_string(extraction)},
          {"judge_reason", judge::to_string(judge_reason)},
          {"trailing_tokens", trailing_tokens},
          {"contradiction", contradiction}};
}

RewardBreakdown compute_rewards(const RewardInput& in, const RewardOptions& opt) {
  RewardBreakdown r;
  const auto ex = judge::extract_candidate(in.text);
  const auto verdict = judge::grade(in.question, in.gold, in.text);
  r.extraction = ex.status;
  r.judge_reason = verdict.reason;
  r.accuracy = verdict.grade == judge::Grade::A_correct ? 1.0 : 0.0;

  if (!in.truncated) r.format = 0.5 * think_ok(in.text) + 0.5 * answer_ok(in.text);

  double clean = 1.0;
  const auto close = in.text.rfind(lm::marker::answer_close);
  if (close != std::string::npos) {
    for (const auto& w : lm::Vocab::split_words(in.text.substr(close + lm::marker::answer_close.size()))) {
      if (w != lm::marker::eos && w != lm::marker::pad) ++r.trailing_tokens;
    }
    if (r.trailing_tokens > 0) clean -= 0.5;
  }
  if (in.length > opt.length_cap && opt.length_cap > 0) {
    clean -= static_cast<double>(in.length - opt.length_cap) / static_cast<double>(opt.length_cap);
  }
  if (count(in.text, lm::marker::box_open) > 1 || ex.status == judge::ExtractStatus::ambiguous || ex.self_correction) {
    clean = 0.0;
  }
  r.cleanliness = std::clamp(clean, 0.0, 1.0);

  const bool found = ex.status == judge::ExtractStatus::found && ex.candidate;
  bool contradiction = ex.self_correction;
  if (found) {
    contradiction = contradiction || judge::contradiction_after(in.text, ex.block_end, *ex.candidate);
    if (!in.old_answer.empty() && judge::normalize(in.old_answer) != judge::normalize(*ex.candidate)) {
      if (auto think = data::think_block(in.text); think && data::asserts_old_answer(*think, in.old_answer)) {
        contradiction = true;
      }
    }
  }
  r.contradiction = contradiction;
  r.consistency = (found && !ex.fallback && !contradiction && in_think(in.text, *ex.candidate)) ? 1.0 : 0.0;

  const auto& w = opt.weights;
  r.total = w.accuracy * r.accuracy + w.format * r.format + w.cleanliness * r.cleanliness +
            w.consistency * r.consistency;
  return r;
}

}  // namespace etcon::consolidate
