#include "etcon/lm/pretrain.hpp"

#include <cmath>
#include <numeric>

#include "etcon/ops.hpp"
#include "etcon/optim.hpp"
#include "etcon/rng.hpp"

namespace etcon::lm {

namespace {

struct Pack {
  Tokens inputs;
  std::vector<int> segments;
  std::vector<TokenId> targets;
};

Pack build_pack(const std::vector<Tokens>& docs, const std::vector<std::size_t>& order,
                const std::vector<std::size_t>& members) {
  Pack p;
  int seg = 0;
  for (auto m : members) {
    const auto& doc = docs[order[m]];
    for (std::size_t t = 0; t + 1 < doc.size(); ++t) {
      p.inputs.push_back(doc[t]);
      p.targets.push_back(doc[t + 1]);
      p.segments.push_back(seg);
    }
    ++seg;
  }
  return p;
}

std::vector<Pack> make_packs(const std::vector<Tokens>& docs, const std::vector<std::size_t>& order,
                             std::size_t budget) {
  std::vector<std::size_t> lengths;
  for (auto i : order) lengths.push_back(docs[i].size() > 0 ? docs[i].size() - 1 : 0);
  std::vector<Pack> packs;
  for (const auto& members : pack_indices(lengths, budget)) {
    auto p = build_pack(docs, order, members);
    if (!p.inputs.empty()) packs.push_back(std::move(p));
  }
  return packs;
}

}  // namespace

nlohmann::json PretrainSchedule::to_json() const {
  nlohmann::json j = {{"learning_rate", learning_rate}, {"min_lr_fraction", min_lr_fraction},
                      {"warmup_steps", warmup_steps},   {"steps", steps},
                      {"batch_size", batch_size},       {"pack_tokens", pack_tokens},
                      {"weight_decay", weight_decay},   {"seed", seed}};
  j["grad_clip"] = grad_clip ? nlohmann::json(*grad_clip) : nlohmann::json(nullptr);
  return j;
}

PretrainSchedule PretrainSchedule::from_json(const nlohmann::json& j) {
  PretrainSchedule s;
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.min_lr_fraction = j.value("min_lr_fraction", s.min_lr_fraction);
  s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
  s.steps = j.value("steps", s.steps);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.pack_tokens = j.value("pack_tokens", s.pack_tokens);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.seed = j.value("seed", s.seed);
  if (j.contains("grad_clip")) {
    s.grad_clip = j["grad_clip"].is_null() ? std::nullopt : std::optional<double>(j["grad_clip"].get<double>());
  }
  return s;
}

double corpus_loss(const ModelState& model, const std::vector<Tokens>& docs, std::size_t pack_tokens) {
  if (docs.empty()) return 0.0;
  NoGradGuard guard;
  const std::size_t budget = pack_tokens ? pack_tokens : model.config().context_len;
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& p : make_packs(docs, order, budget)) {
    const double l = ops::cross_entropy(forward(model, p.inputs, p.segments), p.targets).item();
    total += l * static_cast<double>(p.targets.size());
    count += p.targets.size();
  }
  return total / static_cast<double>(count);
}

PretrainResult pretrain(ModelState& model, const std::vector<Tokens>& docs, const std::vector<Tokens>& heldout,
                        const PretrainSchedule& schedule, const std::function<void(std::size_t, double)>& on_step) {
  PretrainResult result;
  if (schedule.steps == 0) {
    result.heldout_loss = corpus_loss(model, heldout, schedule.pack_tokens);
    return result;
  }
  if (docs.empty()) throw std::invalid_argument("pretrain: empty corpus");
  const std::size_t budget = schedule.pack_tokens ? schedule.pack_tokens : model.config().context_len;
  auto params = model.parameters();
  OptimizerState opt = make_adamw(
      params, {.learning_rate = schedule.learning_rate, .weight_decay = schedule.weight_decay, .grad_clip = schedule.grad_clip});
  Rng rng(schedule.seed);

  std::vector<Pack> packs;
  std::size_t cursor = 0;
  auto refill = [&] {
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    packs = make_packs(docs, order, budget);
    cursor = 0;
  };
  refill();

  const double pi = 3.141592653589793;
  for (std::size_t step = 0; step < schedule.steps; ++step) {
    double lr = schedule.learning_rate;
    if (step < schedule.warmup_steps) {
      lr *= static_cast<double>(step + 1) / static_cast<double>(schedule.warmup_steps);
    } else {
      const double progress = static_cast<double>(step - schedule.warmup_steps) /
                              static_cast<double>(std::max<std::size_t>(1, schedule.steps - schedule.warmup_steps));
      const double floor = schedule.min_lr_fraction;
      lr *= floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(pi * progress));
    }
    opt.config.learning_rate = lr;

    model.zero_grad();
    double step_loss = 0.0;
    const std::size_t bs = std::max<std::size_t>(1, schedule.batch_size);
    try {
      for (std::size_t b = 0; b < bs; ++b) {
        if (cursor >= packs.size()) refill();
        const Pack& p = packs[cursor++];
        Tensor loss = ops::scale(ops::cross_entropy(forward(model, p.inputs, p.segments), p.targets),
                                 1.0 / static_cast<double>(bs));
        loss.backward();
        step_loss += loss.item();
      }
      adamw_step(params, opt);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(std::string("pretraining diverged: ") + e.what());
    }
    result.loss_curve.push_back(step_loss);
    if (on_step) on_step(step, step_loss);
  }
  model.zero_grad();
  result.heldout_loss = corpus_loss(model, heldout, schedule.pack_tokens);
  return result;
}

}  // namespace etcon::lm
