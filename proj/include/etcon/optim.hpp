#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "etcon/tensor.hpp"

namespace etcon {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global L2 norm bound on the gradients that take part in the update.
  std::optional<double> grad_clip;
};

struct OptimizerState {
  AdamWConfig config;
  long step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

OptimizerState make_adamw(const std::vector<Tensor>& params, AdamWConfig config);

// One AdamW update with bias correction and decoupled weight decay.
// When `mask` is given, only params with mask[i] set are touched; others stay
// bit-identical. Params without a grad are treated as zero-gradient.
// Returns the pre-clip global gradient norm over updated params.
double adamw_step(std::vector<Tensor>& params, OptimizerState& state,
                  const std::vector<bool>* mask = nullptr);

void zero_grads(std::vector<Tensor>& params);

}  // namespace etcon
