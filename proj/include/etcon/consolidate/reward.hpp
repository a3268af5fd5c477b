#pragma once

#include <string>

#include "etcon/judge/judge.hpp"

namespace etcon::consolidate {

struct RewardWeights {
  double accuracy = 0.7;
  double format = 0.05;
  double cleanliness = 0.15;
  double consistency = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static RewardWeights from_json(const nlohmann::json& j);
};

struct RewardBreakdown {
  double accuracy = 0.0;
  double format = 0.0;
  double cleanliness = 0.0;
  double consistency = 0.0;
  double total = 0.0;
  // diagnostics
  judge::ExtractStatus extraction = judge::ExtractStatus::none;
  judge::Reason judge_reason = judge::Reason::no_answer;
  std::size_t trailing_tokens = 0;
  bool contradiction = false;

  nlohmann::json to_json() const;
};

struct RewardInput {
  std::string question;
  std::string gold;        // a_new
  std::string old_answer;  // empty when there is none
  std::string text;        // decoded rollout
  std::size_t length = 0;  // generated tokens
  bool truncated = false;
};

struct RewardOptions {
  RewardWeights weights;
  std::size_t length_cap = 64;  // tokens; beyond it cleanliness decays linearly to 0 at 2x the cap
};

RewardBreakdown compute_rewards(const RewardInput& in, const RewardOptions& opt = {});

}  // namespace etcon::consolidate
