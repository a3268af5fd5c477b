#pragma once

#include <string>
#include <vector>

#include "etcon/data/world.hpp"

namespace etcon::data {

inline constexpr const char* kReasonPrefix = "please reason step by step , then answer";

// "please reason step by step , then answer {question}"
std::string eval_prompt(const std::string& question);

// <think> ... </think> <answer> \boxed{ answer } </answer>
std::string answer_block(const std::string& answer);
std::string templated_think(const std::string& subject, const std::string& phrase, const std::string& answer);

struct SkillTask {
  std::string skill;  // copy | compare | count
  std::string question;
  std::string answer;
  std::string think;
};

struct Corpus {
  std::vector<std::string> documents;  // each ends with <eos>
  std::vector<std::string> heldout;    // statement slice kept out of training
  std::vector<SkillTask> skill_train;
  std::vector<SkillTask> holdout;      // general-capability probe, disjoint from skill_train
};

Corpus render_corpus(const FactWorld& world);

nlohmann::json skill_to_json(const SkillTask& t);
SkillTask skill_from_json(const nlohmann::json& j);

}  // namespace etcon::data
