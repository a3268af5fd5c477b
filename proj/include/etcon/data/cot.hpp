#pragma once

#include <optional>
#include <string>

#include "etcon/data/edits.hpp"
#include "etcon/lm/model.hpp"

namespace etcon::data {

enum class CotMode { templated, model_generated };

CotMode cot_mode_from_string(const std::string& s);
std::string to_string(CotMode m);

struct TrainingLabel {
  std::string instance_id;
  std::string text;  // <think> ... </think> <answer> \boxed{ a_new } </answer>
  // Word-token range of a_new inside `text`.
  std::size_t answer_begin = 0;
  std::size_t answer_end = 0;
  CotMode mode = CotMode::templated;
  bool fallback = false;  // model_generated ran out of retries
  std::size_t attempts = 0;
};

struct CotOptions {
  CotMode mode = CotMode::templated;
  std::size_t retry_budget = 4;
  std::size_t max_new_tokens = 64;
  std::uint64_t seed = 0;
};

// Think block of `generated`, or nothing when it lacks exactly one
// well-formed block.
std::optional<std::string> think_block(const std::string& generated);

// Keeps the think block and replaces everything after it with an answer
// block for `answer`.
std::string overwrite_answer(const std::string& think, const std::string& answer);

// True when the last sentence of the think block asserts `old_answer`.
bool asserts_old_answer(const std::string& think, const std::string& old_answer);

TrainingLabel make_label(const std::string& instance_id, const std::string& text, const std::string& answer,
                         CotMode mode);

// model and vocab are only read in model_generated mode.
TrainingLabel build_cot_label(const EditInstance& e, const CotOptions& opt, const lm::ModelState* model = nullptr,
                              const lm::Vocab* vocab = nullptr);

}  // namespace etcon::data
