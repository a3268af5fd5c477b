#include "etcon/consolidate/grpo.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "etcon/data/corpus.hpp"
#include "etcon/ops.hpp"
#include "etcon/parallel.hpp"
#include "etcon/rng.hpp"

namespace etcon::consolidate {

namespace {

std::vector<std::vector<std::size_t>> packs_for(const std::vector<lm::SequenceSpan>& seqs, std::size_t budget) {
  std::vector<std::size_t> lengths;
  for (const auto& s : seqs) lengths.push_back(s.end - 1);
  return lm::pack_indices(lengths, budget);
}

std::vector<std::vector<double>> logprobs_nograd(const lm::ModelState& model, const std::vector<lm::SequenceSpan>& seqs) {
  NoGradGuard guard;
  std::vector<std::vector<double>> out(seqs.size());
  for (const auto& pack : packs_for(seqs, model.config().context_len)) {
    std::vector<lm::SequenceSpan> part;
    for (auto i : pack) part.push_back(seqs[i]);
    const auto lps = lm::token_logprobs_packed(model, part);
    for (std::size_t k = 0; k < pack.size(); ++k) out[pack[k]].assign(lps[k].values().begin(), lps[k].values().end());
  }
  return out;
}

bool greedy_correct(const lm::ModelState& model, const Prompt& p, const ConsolidateConfig& cfg,
                    const lm::Vocab& vocab) {
  lm::DecodeParams dp = cfg.decode;
  dp.temperature = 0.0;
  const auto g = lm::generate(model, p.tokens, dp);
  return judge::grade(p.question, p.gold, vocab.decode(g.tokens)).grade == judge::Grade::A_correct;
}

}  // namespace

void ConsolidateConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("consolidate.group_size must be >= 2");
  if (!(clip_radius > 0.0)) throw std::invalid_argument("consolidate.clip_radius must be positive");
  if (!(kl_coef >= 0.0)) throw std::invalid_argument("consolidate.kl_coef must be nonnegative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("consolidate.learning_rate must be positive");
  if (rollout_batch < 1) throw std::invalid_argument("consolidate.rollout_batch must be >= 1");
  if (update_epochs < 1) throw std::invalid_argument("consolidate.update_epochs must be >= 1");
  if (validate_every < 1) throw std::invalid_argument("consolidate.validate_every must be >= 1");
  decode.validate();
  weights.validate();
}

nlohmann::json ConsolidateConfig::to_json() const {
  return {{"group_size", group_size},
          {"clip_radius", clip_radius},
          {"kl_coef", kl_coef},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"grad_clip", grad_clip},
          {"steps", steps},
          {"rollout_batch", rollout_batch},
          {"update_epochs", update_epochs},
          {"decode", decode.to_json()},
          {"reward_weights", weights.to_json()},
          {"length_cap", length_cap},
          {"validate_every", validate_every},
          {"validation_size", validation_size},
          {"max_consecutive_failures", max_consecutive_failures},
          {"dump_rollouts", dump_rollouts}};
}

ConsolidateConfig ConsolidateConfig::from_json(const nlohmann::json& j) {
  ConsolidateConfig c;
  c.group_size = j.value("group_size", c.group_size);
  c.clip_radius = j.value("clip_radius", c.clip_radius);
  c.kl_coef = j.value("kl_coef", c.kl_coef);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.steps = j.value("steps", c.steps);
  c.rollout_batch = j.value("rollout_batch", c.rollout_batch);
  c.update_epochs = j.value("update_epochs", c.update_epochs);
  if (j.contains("decode")) c.decode = lm::DecodeParams::from_json(j["decode"], c.decode);
  if (j.contains("reward_weights")) c.weights = RewardWeights::from_json(j["reward_weights"]);
  c.length_cap = j.value("length_cap", c.length_cap);
  c.validate_every = j.value("validate_every", c.validate_every);
  c.validation_size = j.value("validation_size", c.validation_size);
  c.max_consecutive_failures = j.value("max_consecutive_failures", c.max_consecutive_failures);
  c.dump_rollouts = j.value("dump_rollouts", c.dump_rollouts);
  c.validate();
  return c;
}

std::vector<Prompt> reasoning_set(const std::vector<data::EditInstance>& edits, const lm::Vocab& vocab) {
  std::vector<Prompt> out;
  for (const auto& e : edits) {
    out.push_back({e.id + "/q", e.question, e.new_answer, e.old_answer, vocab.encode(data::eval_prompt(e.question))});
    for (std::size_t r = 0; r < e.rephrasings.size(); ++r) {
      out.push_back({e.id + "/r" + std::to_string(r), e.rephrasings[r], e.new_answer, e.old_answer,
                     vocab.encode(data::eval_prompt(e.rephrasings[r]))});
    }
  }
  return out;
}

GroupBatch sample_group(const lm::ModelState& policy, const lm::ModelState& reference, const Prompt& prompt,
                        const ConsolidateConfig& cfg, std::uint64_t seed, const lm::Vocab& vocab) {
  GroupBatch g;
  g.prompt_id = prompt.id;
  std::vector<lm::SequenceSpan> spans;
  for (std::size_t i = 0; i < cfg.group_size; ++i) {
    lm::DecodeParams dp = cfg.decode;
    dp.seed = derive_seed(seed, "member", i);
    const auto gen = lm::generate(policy, prompt.tokens, dp);
    Rollout r;
    r.prompt_id = prompt.id;
    r.tokens = prompt.tokens;
    r.begin = prompt.tokens.size();
    r.tokens.insert(r.tokens.end(), gen.tokens.begin(), gen.tokens.end());
    r.truncated = gen.truncated;
    r.text = vocab.decode(gen.tokens);
    spans.push_back({r.tokens, r.begin, r.tokens.size()});
    g.rollouts.push_back(std::move(r));
  }
  auto lp_pol = logprobs_nograd(policy, spans);
  auto lp_ref = logprobs_nograd(reference, spans);
  for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
    g.rollouts[i].logp_sampling = std::move(lp_pol[i]);
    g.rollouts[i].logp_reference = std::move(lp_ref[i]);
  }
  return g;
}

void score_group(GroupBatch& g, const Prompt& prompt, const ConsolidateConfig& cfg) {
  RewardOptions opt{cfg.weights, cfg.length_cap};
  std::vector<double> totals;
  for (auto& r : g.rollouts) {
    RewardInput in{prompt.question, prompt.gold, prompt.old_answer, r.text, r.tokens.size() - r.begin, r.truncated};
    r.reward = compute_rewards(in, opt);
    totals.push_back(r.reward.total);
  }
  g.advantages = group_advantages(totals);
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("group_advantages: empty group");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> a;
  a.reserve(rewards.size());
  for (double r : rewards) a.push_back(r - mean);
  return a;
}

Tensor kl_estimate(const Tensor& logp, const Tensor& logp_ref) {
  const Tensor d = ops::sub(logp_ref, logp);
  return ops::add_scalar(ops::sub(ops::exp(d), d), -1.0);
}

RolloutTerms rollout_terms(const Tensor& logp, const Rollout& r, double advantage, const ConsolidateConfig& cfg) {
  const std::size_t T = r.logp_sampling.size();
  if (logp.numel() != T || r.logp_reference.size() != T) throw ShapeError("grpo: log-prob arrays do not align");
  const double eps = cfg.clip_radius;
  RolloutTerms out;
  out.rho = ops::exp(ops::sub(logp, Tensor::from({T}, r.logp_sampling)));
  out.surrogate = ops::minimum(ops::scale(out.rho, advantage),
                               ops::scale(ops::clip(out.rho, 1.0 - eps, 1.0 + eps), advantage));
  out.kl = kl_estimate(logp, Tensor::from({T}, r.logp_reference));
  const Tensor per_tok = cfg.kl_coef == 0.0 ? out.surrogate : ops::sub(out.surrogate, ops::scale(out.kl, cfg.kl_coef));
  out.objective = ops::mean(per_tok);
  return out;
}

StepStats grpo_accumulate(const lm::ModelState& policy, const std::vector<GroupBatch>& groups,
                          const ConsolidateConfig& cfg) {
  struct Item {
    const Rollout* r;
    double adv;
  };
  std::vector<Item> items;
  std::vector<lm::SequenceSpan> spans;
  StepStats st;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto& r = g.rollouts[i];
      items.push_back({&r, g.advantages.at(i)});
      spans.push_back({r.tokens, r.begin, r.tokens.size()});
      st.mean_reward += r.reward.total;
      st.mean_accuracy += r.reward.accuracy;
      st.mean_format += r.reward.format;
      st.mean_cleanliness += r.reward.cleanliness;
      st.mean_consistency += r.reward.consistency;
    }
  }
  if (items.empty()) throw std::invalid_argument("grpo: no rollouts");
  const double n_roll = static_cast<double>(items.size());
  const double eps = cfg.clip_radius;
  std::size_t tokens = 0, clipped = 0;
  for (const auto& pack : packs_for(spans, policy.config().context_len)) {
    std::vector<lm::SequenceSpan> part;
    for (auto i : pack) part.push_back(spans[i]);
    const auto lps = lm::token_logprobs_packed(policy, part);
    Tensor pack_obj;
    for (std::size_t k = 0; k < pack.size(); ++k) {
      const Item& it = items[pack[k]];
      const std::size_t T = it.r->logp_sampling.size();
      const Tensor& lp = lps[k];
      const auto terms = rollout_terms(lp, *it.r, it.adv, cfg);
      pack_obj = pack_obj.defined() ? ops::add(pack_obj, terms.objective) : terms.objective;

      const double t = static_cast<double>(T);
      st.surrogate += std::accumulate(terms.surrogate.values().begin(), terms.surrogate.values().end(), 0.0) / t / n_roll;
      st.mean_kl += std::accumulate(terms.kl.values().begin(), terms.kl.values().end(), 0.0) / t / n_roll;
      for (double v : terms.rho.values()) {
        if ((it.adv > 0 && v > 1.0 + eps) || (it.adv < 0 && v < 1.0 - eps)) ++clipped;
      }
      tokens += T;
    }
    st.objective += pack_obj.item() / n_roll;
    if (grad_enabled()) ops::scale(pack_obj, -1.0 / n_roll).backward();
  }
  st.mean_reward /= n_roll;
  st.mean_accuracy /= n_roll;
  st.mean_format /= n_roll;
  st.mean_cleanliness /= n_roll;
  st.mean_consistency /= n_roll;
  st.clip_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
  return st;
}

StepStats grpo_step(lm::ModelState& policy, const std::vector<GroupBatch>& groups, const ConsolidateConfig& cfg,
                    OptimizerState& opt) {
  auto params = policy.parameters();
  std::vector<std::vector<double>> backup;
  for (const auto& p : params) backup.emplace_back(p.values().begin(), p.values().end());
  const OptimizerState opt_backup = opt;
  auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = params[i].mutable_values();
      std::copy(backup[i].begin(), backup[i].end(), v.begin());
    }
    opt = opt_backup;
    zero_grads(params);
  };
  StepStats st;
  try {
    zero_grads(params);
    st = grpo_accumulate(policy, groups, cfg);
    if (!std::isfinite(st.objective)) throw NonFiniteError("grpo objective is not finite");
    adamw_step(params, opt);
    zero_grads(params);
    for (const auto& p : params) check_finite(p.values(), "grpo parameters");
  } catch (const NonFiniteError& e) {
    restore();
    throw StepAborted(e.what());
  }
  return st;
}

ConsolidateResult consolidate(lm::ModelState& model, const std::vector<Prompt>& prompts, const ConsolidateConfig& cfg,
                              std::uint64_t seed, const lm::Vocab& vocab, const ConsolidateHooks& hooks) {
  cfg.validate();
  ConsolidateResult res;
  if (cfg.steps == 0) return res;
  if (prompts.empty()) throw std::invalid_argument("consolidate: empty reasoning set");
  const lm::ModelState reference = model.clone();
  auto params = model.parameters();
  AdamWConfig ac;
  ac.learning_rate = cfg.learning_rate;
  ac.weight_decay = cfg.weight_decay;
  ac.grad_clip = cfg.grad_clip;
  OptimizerState opt = make_adamw(params, ac);

  std::vector<const Prompt*> val;
  for (const auto& p : prompts) {
    if (val.size() < cfg.validation_size && p.id.ends_with("/q")) val.push_back(&p);
  }
  auto validate_now = [&](std::size_t step) {
    if (val.empty()) return;
    std::vector<int> ok(val.size(), 0);
    parallel_for(val.size(), hooks.workers, [&](std::size_t i) { ok[i] = greedy_correct(model, *val[i], cfg, vocab); });
    res.validation.push_back({step, 100.0 * std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(val.size())});
  };
  validate_now(0);

  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0, failures = 0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min(cfg.rollout_batch, prompts.size())) {
      if (cursor == order.size()) {
        order.resize(prompts.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, "grpo/order", epoch++));
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    std::vector<GroupBatch> groups(batch.size());
    parallel_for(batch.size(), hooks.workers, [&](std::size_t k) {
      const Prompt& p = prompts[batch[k]];
      groups[k] = sample_group(model, reference, p, cfg, derive_seed(seed, "grpo/rollout/" + std::to_string(step), k), vocab);
      score_group(groups[k], p, cfg);
    });
    if (hooks.on_group) {
      for (std::size_t k = 0; k < groups.size(); ++k) hooks.on_group(groups[k], prompts[batch[k]]);
    }
    StepStats st;
    try {
      for (std::size_t e = 0; e < cfg.update_epochs; ++e) {
        const StepStats s = grpo_step(model, groups, cfg, opt);
        if (e == 0) st = s;
      }
      failures = 0;
    } catch (const StepAborted&) {
      ++res.failed_steps;
      if (++failures >= cfg.max_consecutive_failures) throw;
      continue;
    }
    st.step = step;
    res.curve.push_back(st);
    if (hooks.on_step) hooks.on_step(st);
    if (step % cfg.validate_every == 0) validate_now(step);
  }
  return res;
}

std::string reward_curve_csv(const std::vector<StepStats>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "step,mean_reward,mean_accuracy,mean_format,mean_cleanliness,mean_consistency,mean_kl,clip_fraction\n";
  for (const auto& s : curve) {
    os << s.step << ',' << s.mean_reward << ',' << s.mean_accuracy << ',' << s.mean_format << ','
       << s.mean_cleanliness << ',' << s.mean_consistency << ',' << s.mean_kl << ',' << s.clip_fraction << '\n';
  }
  return os.str();
}

}  // namespace etcon::consolidate
