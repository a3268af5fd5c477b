#include "etcon/editor/tpsft.hpp"

#include <cmath>

#include "etcon/data/corpus.hpp"
#include "etcon/lm/decode.hpp"
#include "etcon/ops.hpp"
#include "etcon/optim.hpp"

namespace etcon::editor {

void EditConfig::validate() const {
  if (!(clip_radius > 0.0)) throw std::invalid_argument("edit.clip_radius must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("edit.learning_rate must be positive");
  if (max_steps_per_edit < 1) throw std::invalid_argument("edit.max_steps_per_edit must be >= 1");
  if (epochs < 1) throw std::invalid_argument("edit.epochs must be >= 1");
  if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("edit.grad_clip must be positive or null");
}

nlohmann::json EditConfig::to_json() const {
  return {{"clip_radius", clip_radius},
          {"learning_rate", learning_rate},
          {"max_steps_per_edit", max_steps_per_edit},
          {"epochs", epochs},
          {"early_stop", early_stop},
          {"grad_clip", grad_clip ? nlohmann::json(*grad_clip) : nlohmann::json(nullptr)},
          {"weight_decay", weight_decay}};
}

EditConfig EditConfig::from_json(const nlohmann::json& j) {
  EditConfig c;
  c.clip_radius = j.value("clip_radius", c.clip_radius);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_steps_per_edit = j.value("max_steps_per_edit", c.max_steps_per_edit);
  c.epochs = j.value("epochs", c.epochs);
  c.early_stop = j.value("early_stop", c.early_stop);
  if (j.contains("grad_clip") && !j["grad_clip"].is_null()) c.grad_clip = j["grad_clip"].get<double>();
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.validate();
  return c;
}

EditExample make_example(const lm::Vocab& vocab, const data::EditInstance& e, const data::TrainingLabel& label) {
  EditExample ex;
  lm::Tokens y;
  try {
    ex.prompt = vocab.encode(data::eval_prompt(e.question), true);
    ex.answer = vocab.encode(e.new_answer, true);
    y = vocab.encode(label.text, true);
  } catch (const std::out_of_range& err) {
    throw TokenizationMismatch(e.id + ": " + err.what());
  }
  ex.tokens = ex.prompt;
  ex.begin = ex.tokens.size();
  ex.tokens.insert(ex.tokens.end(), y.begin(), y.end());
  ex.tokens.push_back(lm::Vocab::kEos);
  ex.end = ex.tokens.size();
  return ex;
}

std::vector<double> reference_logprobs(const lm::ModelState& reference, const EditExample& ex) {
  NoGradGuard guard;
  const Tensor lp = lm::token_logprobs(reference, ex.tokens, ex.begin, ex.end);
  std::vector<double> out(lp.values().begin(), lp.values().end());
  for (double v : out) {
    if (!std::isfinite(v)) throw TokenizationMismatch("reference assigns zero probability to a label token");
  }
  return out;
}

LossResult tpsft_loss(const lm::ModelState& policy, const EditExample& ex, std::span<const double> ref_logprobs,
                      double eps) {
  const std::size_t n = ex.end - ex.begin;
  if (ref_logprobs.size() != n) throw TokenizationMismatch("reference log-probs do not cover the label span");
  for (double v : ref_logprobs) {
    if (!std::isfinite(v)) throw TokenizationMismatch("reference log-prob is not finite");
  }
  const Tensor lp = lm::token_logprobs(policy, ex.tokens, ex.begin, ex.end);
  const Tensor ref = Tensor::from({n}, std::vector<double>(ref_logprobs.begin(), ref_logprobs.end()));
  const Tensor r = ops::exp(ops::sub(lp, ref));
  const Tensor surrogate = ops::minimum(r, ops::clip(r, 1.0 - eps, 1.0 + eps));
  LossResult out;
  out.loss = ops::neg(ops::mean(surrogate));
  out.ratios.assign(r.values().begin(), r.values().end());
  std::size_t clipped = 0;
  double total = 0.0;
  for (double v : out.ratios) {
    total += v;
    if (v > 1.0 + eps) ++clipped;
  }
  out.stats = {total / static_cast<double>(n), static_cast<double>(clipped) / static_cast<double>(n), n};
  return out;
}

PolicyPair PolicyPair::start(const lm::ModelState& model) { return {model.clone(), model.clone()}; }

LossResult PolicyPair::loss(const EditExample& ex, double eps) const {
  return tpsft_loss(policy, ex, reference_logprobs(reference, ex), eps);
}

void rotate_reference(PolicyPair& pair, const lm::ModelState& edited) { pair.reference = edited.clone(); }

nlohmann::json EditReport::to_json() const {
  return {{"instance_id", instance_id},
          {"steps_used", steps_used},
          {"early_stop_reason", early_stop_reason},
          {"mean_ratio", mean_ratio},
          {"clip_fraction", clip_fraction},
          {"final_answer_greedy", final_answer_greedy},
          {"aborted", aborted},
          {"error", error}};
}

bool answers_target(const lm::ModelState& model, const EditExample& ex, lm::Tokens* decoded) {
  lm::Tokens prompt = ex.prompt;
  prompt.push_back(lm::Vocab::kAnswerOpen);
  prompt.push_back(lm::Vocab::kBoxOpen);
  lm::DecodeParams dp;
  dp.temperature = 0.0;
  dp.max_new_tokens = ex.answer.size();
  dp.stop_token = lm::Vocab::kBoxClose;
  const auto g = lm::generate(model, prompt, dp);
  if (decoded) *decoded = g.tokens;
  return g.tokens == ex.answer;
}

EditReport apply_edit(PolicyPair& pair, const EditExample& ex, const std::string& instance_id, const EditConfig& cfg,
                      const lm::Vocab& vocab) {
  cfg.validate();
  lm::ModelState& model = pair.policy;
  if (model.target_mask().empty()) throw std::invalid_argument("apply_edit: empty target mask");
  EditReport rep;
  rep.instance_id = instance_id;

  const auto ref_lp = reference_logprobs(pair.reference, ex);
  auto params = model.parameters();
  const auto mask = model.target_flags();
  std::vector<std::vector<double>> backup;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (mask[i]) backup.emplace_back(params[i].values().begin(), params[i].values().end());
  }
  auto restore = [&] {
    std::size_t k = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!mask[i]) continue;
      auto v = params[i].mutable_values();
      std::copy(backup[k].begin(), backup[k].end(), v.begin());
      ++k;
    }
  };

  AdamWConfig ac;
  ac.learning_rate = cfg.learning_rate;
  ac.weight_decay = cfg.weight_decay;
  ac.grad_clip = cfg.grad_clip;
  OptimizerState opt = make_adamw(params, ac);

  const std::size_t budget = cfg.epochs * cfg.max_steps_per_edit;
  bool matched = cfg.early_stop && answers_target(model, ex);
  double ratio_sum = 0.0, clip_sum = 0.0;
  try {
    while (!matched && rep.steps_used < budget) {
      zero_grads(params);
      LossResult lr = tpsft_loss(model, ex, ref_lp, cfg.clip_radius);
      if (!std::isfinite(lr.loss.item())) throw NonFiniteError("tpsft loss is not finite");
      lr.loss.backward();
      adamw_step(params, opt, &mask);
      ++rep.steps_used;
      rep.steps.push_back({rep.steps_used, lr.stats.mean_ratio, lr.stats.clip_fraction, lr.loss.item()});
      ratio_sum += lr.stats.mean_ratio;
      clip_sum += lr.stats.clip_fraction;
      for (const auto& p : params) {
        for (double v : p.values()) {
          if (!std::isfinite(v)) throw NonFiniteError("edited parameters are not finite");
        }
      }
      if (cfg.early_stop) matched = answers_target(model, ex);
    }
  } catch (const NonFiniteError& e) {
    restore();
    zero_grads(params);
    rep.aborted = true;
    rep.error = e.what();
    rep.early_stop_reason = "aborted";
  }
  zero_grads(params);
  if (!rep.aborted) {
    rep.early_stop_reason = matched ? "target_matched" : (cfg.early_stop ? "epoch_budget" : "step_budget");
  }
  if (rep.steps_used > 0) {
    rep.mean_ratio = ratio_sum / static_cast<double>(rep.steps_used);
    rep.clip_fraction = clip_sum / static_cast<double>(rep.steps_used);
  } else {
    rep.mean_ratio = 1.0;
  }
  lm::Tokens decoded;
  answers_target(model, ex, &decoded);
  rep.final_answer_greedy = vocab.decode(decoded);
  return rep;
}

}  // namespace etcon::editor
