#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "etcon/lm/model.hpp"

namespace etcon::lm {

struct PretrainSchedule {
  double learning_rate = 3e-3;
  double min_lr_fraction = 0.1;
  std::size_t warmup_steps = 50;
  std::size_t steps = 2000;
  // Packed sequences per optimizer step.
  std::size_t batch_size = 4;
  // Token budget per packed sequence; 0 means the model context.
  std::size_t pack_tokens = 0;
  double weight_decay = 0.0;
  std::optional<double> grad_clip = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PretrainSchedule from_json(const nlohmann::json& j);
};

struct PretrainResult {
  std::vector<double> loss_curve;
  double heldout_loss = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Next-token cross-entropy on packed documents. Each document should end
// with <eos>. `on_step(step, loss)` is called after every update.
PretrainResult pretrain(ModelState& model, const std::vector<Tokens>& docs, const std::vector<Tokens>& heldout,
                        const PretrainSchedule& schedule,
                        const std::function<void(std::size_t, double)>& on_step = {});

// Mean next-token cross-entropy over documents.
double corpus_loss(const ModelState& model, const std::vector<Tokens>& docs, std::size_t pack_tokens = 0);

}  // namespace etcon::lm
