#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "etcon/consolidate/reward.hpp"
#include "etcon/data/edits.hpp"
#include "etcon/lm/decode.hpp"
#include "etcon/optim.hpp"

namespace etcon::consolidate {

struct ConsolidateConfig {
  std::size_t group_size = 8;
  double clip_radius = 0.2;
  double kl_coef = 0.01;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  std::size_t steps = 100;
  std::size_t rollout_batch = 8;  // prompts per step
  std::size_t update_epochs = 1;  // optimizer passes over each rollout batch
  lm::DecodeParams decode{1.0, 0.99, 64, lm::Vocab::kEos, 0};
  RewardWeights weights;
  std::size_t length_cap = 64;
  std::size_t validate_every = 5;
  std::size_t validation_size = 16;
  std::size_t max_consecutive_failures = 3;
  bool dump_rollouts = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ConsolidateConfig from_json(const nlohmann::json& j);
};

struct Prompt {
  std::string id;
  std::string question;
  std::string gold;
  std::string old_answer;
  lm::Tokens tokens;
};

// Edit questions and their rephrasings, gold = a_new.
std::vector<Prompt> reasoning_set(const std::vector<data::EditInstance>& edits, const lm::Vocab& vocab);

struct Rollout {
  std::string prompt_id;
  lm::Tokens tokens;  // prompt + generated
  std::size_t begin = 0;  // first generated position
  std::vector<double> logp_sampling;
  std::vector<double> logp_reference;
  std::string text;
  RewardBreakdown reward;
  bool truncated = false;
};

struct GroupBatch {
  std::string prompt_id;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

// n rollouts with seeds derive_seed(seed, "member", i); log-probs recorded
// under the sampling policy and the reference. Rewards are left empty.
GroupBatch sample_group(const lm::ModelState& policy, const lm::ModelState& reference, const Prompt& prompt,
                        const ConsolidateConfig& cfg, std::uint64_t seed, const lm::Vocab& vocab);

void score_group(GroupBatch& g, const Prompt& prompt, const ConsolidateConfig& cfg);

// A_i = R_i - mean(R).
std::vector<double> group_advantages(std::span<const double> rewards);

struct StepStats {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_accuracy = 0.0;
  double mean_format = 0.0;
  double mean_cleanliness = 0.0;
  double mean_consistency = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double surrogate = 0.0;
  double objective = 0.0;
};

class StepAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// exp(d) - d - 1 per token, d = logp_ref - logp. Never negative.
Tensor kl_estimate(const Tensor& logp, const Tensor& logp_ref);

struct RolloutTerms {
  Tensor rho;
  Tensor surrogate;
  Tensor kl;
  Tensor objective;  // token mean of surrogate - beta * kl
};

// Per-token pieces of the objective for one rollout given its current
// log-probs over the generated span.
RolloutTerms rollout_terms(const Tensor& logp, const Rollout& r, double advantage, const ConsolidateConfig& cfg);

// Objective, averaged per rollout over tokens then over rollouts:
//   min(rho A, clip(rho, 1-eps, 1+eps) A) - beta * (exp(d) - d - 1),
//   rho = exp(logp - logp_sampling), d = logp_ref - logp.
// Builds graphs pack by pack and accumulates gradients of -objective into the
// policy leaves. Returns the statistics; no parameter change.
StepStats grpo_accumulate(const lm::ModelState& policy, const std::vector<GroupBatch>& groups,
                          const ConsolidateConfig& cfg);

// One AdamW ascent step on the objective over all parameters. Parameters and
// optimizer state are restored if anything turns non-finite.
StepStats grpo_step(lm::ModelState& policy, const std::vector<GroupBatch>& groups, const ConsolidateConfig& cfg,
                    OptimizerState& opt);

struct ValidationPoint {
  std::size_t step = 0;
  double reliability = 0.0;
};

struct ConsolidateResult {
  std::vector<StepStats> curve;
  std::vector<ValidationPoint> validation;
  std::size_t failed_steps = 0;
};

struct ConsolidateHooks {
  std::function<void(const StepStats&)> on_step;
  std::function<void(const GroupBatch&, const Prompt&)> on_group;  // rollout dump
  std::size_t workers = 1;
};

// Reference is a frozen copy of `model` taken on entry.
ConsolidateResult consolidate(lm::ModelState& model, const std::vector<Prompt>& prompts, const ConsolidateConfig& cfg,
                              std::uint64_t seed, const lm::Vocab& vocab, const ConsolidateHooks& hooks = {});

std::string reward_curve_csv(const std::vector<StepStats>& curve);

}  // namespace etcon::consolidate
