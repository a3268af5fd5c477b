#pragma once

#include <optional>
#include <string>
#include <vector>

#include "etcon/data/cot.hpp"
#include "etcon/data/edits.hpp"
#include "etcon/lm/model.hpp"
#include "etcon/tensor.hpp"

namespace etcon::editor {

struct EditConfig {
  double clip_radius = 0.6;
  double learning_rate = 1e-4;
  std::size_t max_steps_per_edit = 6;
  std::size_t epochs = 5;
  bool early_stop = true;
  std::optional<double> grad_clip;
  double weight_decay = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static EditConfig from_json(const nlohmann::json& j);
};

class TokenizationMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Prompt followed by the label and <eos>; [begin, end) covers label + <eos>.
struct EditExample {
  lm::Tokens tokens;
  std::size_t begin = 0;
  std::size_t end = 0;
  lm::Tokens prompt;
  lm::Tokens answer;  // a_new tokens
};

EditExample make_example(const lm::Vocab& vocab, const data::EditInstance& e, const data::TrainingLabel& label);

struct RatioStats {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;  // share of tokens with r > 1 + eps
  std::size_t tokens = 0;
};

struct LossResult {
  Tensor loss;
  RatioStats stats;
  std::vector<double> ratios;
};

// Frozen reference. Log-probs are computed without recording a graph.
std::vector<double> reference_logprobs(const lm::ModelState& reference, const EditExample& ex);

// -mean_t min(r_t, clip(r_t, 1-eps, 1+eps)), r_t = exp(logp_policy - logp_ref).
LossResult tpsft_loss(const lm::ModelState& policy, const EditExample& ex, std::span<const double> ref_logprobs,
                      double eps);

struct PolicyPair {
  lm::ModelState policy;
  lm::ModelState reference;

  static PolicyPair start(const lm::ModelState& model);
  LossResult loss(const EditExample& ex, double eps) const;
};

// The reference becomes a copy of `edited`; policy values are left alone.
void rotate_reference(PolicyPair& pair, const lm::ModelState& edited);

struct StepRecord {
  std::size_t step = 0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double loss = 0.0;
};

struct EditReport {
  std::string instance_id;
  std::size_t steps_used = 0;
  std::string early_stop_reason;  // target_matched | step_budget | epoch_budget | aborted
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  std::string final_answer_greedy;
  bool aborted = false;
  std::string error;
  std::vector<StepRecord> steps;

  nlohmann::json to_json() const;
};

// Greedy answer span after prompt + <answer> \boxed{ equals the answer tokens.
bool answers_target(const lm::ModelState& model, const EditExample& ex, lm::Tokens* decoded = nullptr);

// Masked AdamW on the TPSFT loss against the reference of `pair`. The edit is
// applied to pair.policy. On a non-finite loss the policy is restored.
EditReport apply_edit(PolicyPair& pair, const EditExample& ex, const std::string& instance_id, const EditConfig& cfg,
                      const lm::Vocab& vocab);

}  // namespace etcon::editor
