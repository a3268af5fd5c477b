#include "etcon/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace etcon {

OptimizerState make_adamw(const std::vector<Tensor>& params, AdamWConfig config) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("adamw: learning_rate must be positive");
  if (config.weight_decay < 0.0) throw std::invalid_argument("adamw: weight_decay must be non-negative");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw std::invalid_argument("adamw: betas must lie in (0,1)");
  }
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

double adamw_step(std::vector<Tensor>& params, OptimizerState& state, const std::vector<bool>* mask) {
  if (params.size() != state.first_moment.size()) throw ShapeError("adamw: parameter count changed");
  if (mask && mask->size() != params.size()) throw ShapeError("adamw: mask size mismatch");
  const auto active = [&](std::size_t i) { return !mask || (*mask)[i]; };

  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() != state.first_moment[i].size()) throw ShapeError("adamw: moment shape mismatch");
    if (!active(i) || !params[i].has_grad()) continue;
    for (double g : params[i].grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteError("adamw: non-finite gradient");
  double gscale = 1.0;
  const auto& cfg = state.config;
  if (cfg.grad_clip && norm > *cfg.grad_clip) gscale = *cfg.grad_clip / (norm + 1e-12);

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active(i)) continue;
    auto values = params[i].mutable_values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has = params[i].has_grad();
    auto grad = params[i].grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? grad[j] * gscale : 0.0;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      values[j] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * values[j]);
    }
  }
  return norm;
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace etcon
