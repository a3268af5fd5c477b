#include <doctest.h>

#include <cmath>

#include "etcon/consolidate/grpo.hpp"
#include "etcon/data/corpus.hpp"
#include "etcon/gradcheck.hpp"
#include "etcon/ops.hpp"
#include "helpers.hpp"

using namespace etcon;
using namespace etcon::consolidate;

namespace {

const judge::Fixture& fixture(const std::string& id) {
  static const auto all = judge::load_fixtures(judge::default_fixture_path());
  for (const auto& f : all) {
    if (f.id == id) return f;
  }
  throw std::runtime_error("missing fixture " + id);
}

RewardBreakdown score_fixture(const std::string& id) {
  const auto& f = fixture(id);
  RewardInput in{f.question, f.gold, "", f.predicted, 40, false};
  return compute_rewards(in);
}

std::vector<double> flat(const lm::ModelState& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.values().begin(), p.values().end());
  return out;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::vector<double> nograd_logprobs(const lm::ModelState& m, const lm::Tokens& t, std::size_t begin) {
  NoGradGuard g;
  const auto lp = lm::token_logprobs(m, t, begin, t.size());
  return {lp.values().begin(), lp.values().end()};
}

Rollout make_rollout(const lm::ModelState& m, lm::Tokens tokens, std::size_t begin) {
  Rollout r;
  r.tokens = std::move(tokens);
  r.begin = begin;
  r.logp_sampling = nograd_logprobs(m, r.tokens, begin);
  r.logp_reference = r.logp_sampling;
  return r;
}

OptimizerState adamw_for(const lm::ModelState& m, double lr) {
  AdamWConfig c;
  c.learning_rate = lr;
  c.grad_clip = 1.0;
  return make_adamw(m.parameters(), c);
}

struct Setup {
  data::FactWorld world = data::build_world(11, 20);
  lm::Vocab vocab;
  std::vector<Prompt> prompts;
  lm::ModelState model;

  Setup() {
    const auto corpus = data::render_corpus(world);
    std::vector<std::string> texts = corpus.documents;
    data::EditSetSpec s;
    s.n_edits = 3;
    const auto edits = data::make_edit_set(world, s, 4);
    for (const auto& e : edits) {
      texts.push_back(data::eval_prompt(e.question));
      for (const auto& r : e.rephrasings) texts.push_back(data::eval_prompt(r));
    }
    vocab = lm::Vocab::build(texts);
    prompts = reasoning_set(edits, vocab);
    lm::ModelConfig c;
    c.vocab_size = vocab.size();
    c.n_layers = 2;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ffn = 32;
    c.context_len = 64;
    c.band_lo = 1;
    c.band_hi = 1;
    model = lm::ModelState::init(c, 9);
  }

  ConsolidateConfig cfg() const {
    ConsolidateConfig c;
    c.decode.max_new_tokens = 8;
    c.rollout_batch = 2;
    c.validation_size = 2;
    return c;
  }
};

}  // namespace

TEST_SUITE("consolidate") {

TEST_CASE("a perfect rollout earns exactly one") {
  RewardInput in;
  in.question = "who is the ceo of acme ?";
  in.gold = "alice";
  in.text = "<think> the ceo of acme is alice </think> <answer> \\boxed{alice} </answer> <eos>";
  in.length = 14;
  const auto r = compute_rewards(in);
  CHECK(r.accuracy == 1.0);
  CHECK(r.format == 1.0);
  CHECK(r.cleanliness == 1.0);
  CHECK(r.consistency == 1.0);
  CHECK(r.total == 1.0);
}

TEST_CASE("weights must be nonnegative and sum to one") {
  RewardWeights w;
  CHECK_NOTHROW(w.validate());
  w.accuracy = 0.8;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = {};
  w.format = -0.05;
  w.accuracy = 0.8;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("self-correction transcript") {
  const auto r = score_fixture("self-correction");
  CHECK(r.accuracy == 0.0);
  CHECK(r.consistency == 0.0);
  CHECK(r.total <= 0.3);
  // pinned
  CHECK(r.format == 0.5);
  CHECK(r.cleanliness == 0.0);
  CHECK(r.total == doctest::Approx(0.025).epsilon(1e-12));
}

TEST_CASE("hedged transcript") {
  const auto r = score_fixture("answer-hedging");
  CHECK(r.extraction == judge::ExtractStatus::ambiguous);
  CHECK(r.accuracy == 0.0);
  CHECK(r.cleanliness == 0.0);
  CHECK(r.total <= 0.2);
  // pinned
  CHECK(r.format == 0.5);
  CHECK(r.consistency == 0.0);
  CHECK(r.total == doctest::Approx(0.025).epsilon(1e-12));
}

TEST_CASE("truncation zeroes format") {
  RewardInput in;
  in.question = "q";
  in.gold = "alice";
  in.text = "<think> alice </think> <answer> \\boxed{alice} </answer>";
  in.length = 10;
  in.truncated = true;
  const auto r = compute_rewards(in);
  CHECK(r.format == 0.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("trailing tokens and length cost cleanliness") {
  RewardInput in;
  in.question = "q";
  in.gold = "alice";
  in.text = "<think> alice </think> <answer> \\boxed{alice} </answer> more words <eos>";
  in.length = 12;
  auto r = compute_rewards(in);
  CHECK(r.trailing_tokens == 2);
  CHECK(r.cleanliness == 0.5);

  in.text = "<think> alice </think> <answer> \\boxed{alice} </answer> <eos>";
  in.length = 96;
  RewardOptions opt;
  opt.length_cap = 64;
  r = compute_rewards(in, opt);
  CHECK(r.cleanliness == doctest::Approx(0.5));
  in.length = 200;
  CHECK(compute_rewards(in, opt).cleanliness == 0.0);
}

TEST_CASE("asserting the old answer while boxing the new one is inconsistent") {
  RewardInput in;
  in.question = "who is the ceo of acme ?";
  in.gold = "alice";
  in.old_answer = "bob";
  in.text = "<think> the ceo of acme is bob </think> <answer> \\boxed{alice} </answer> <eos>";
  in.length = 14;
  const auto r = compute_rewards(in);
  CHECK(r.accuracy == 1.0);
  CHECK(r.contradiction);
  CHECK(r.consistency == 0.0);
}

TEST_CASE("group advantages") {
  const std::vector<double> r = {1.0, 0.5, 0.0, 0.5};
  const auto a = group_advantages(r);
  REQUIRE(a.size() == 4);
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(-0.5));
  CHECK(a[3] == doctest::Approx(0.0));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(8);
    for (auto& v : x) v = rng.uniform();
    const auto b = group_advantages(x);
    double s = 0.0;
    for (double v : b) s += v;
    CHECK(std::abs(s) < 1e-12);
  }
  CHECK_THROWS_AS(group_advantages(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("kl estimate is nonnegative and zero at the reference") {
  Rng rng(5);
  std::vector<double> a(200), b(200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = -5.0 * rng.uniform();
    b[i] = -5.0 * rng.uniform();
  }
  const auto kl = kl_estimate(Tensor::from({200}, a), Tensor::from({200}, b));
  for (double v : kl.values()) CHECK(v >= 0.0);
  const auto same = kl_estimate(Tensor::from({200}, a), Tensor::from({200}, a));
  for (double v : same.values()) CHECK(v == 0.0);
}

TEST_CASE("uniform rewards and no kl leave the policy in place") {
  auto m = th::tiny_model(41);
  const auto before = flat(m);
  GroupBatch g;
  for (int i = 0; i < 4; ++i) {
    g.rollouts.push_back(make_rollout(m, {1, 2, static_cast<lm::TokenId>(3 + i), 5}, 2));
    g.rollouts.back().reward.total = 0.4;
  }
  g.advantages = group_advantages(std::vector<double>(4, 0.4));
  ConsolidateConfig cfg;
  cfg.kl_coef = 0.0;
  auto opt = adamw_for(m, 1e-2);
  grpo_step(m, {g}, cfg, opt);
  CHECK(max_diff(before, flat(m)) < 1e-12);
}

TEST_CASE("clipped tokens carry no gradient") {
  auto m = th::tiny_model(43);
  ConsolidateConfig cfg;
  cfg.kl_coef = 0.0;
  for (double adv : {1.0, -1.0}) {
    auto r = make_rollout(m, {1, 2, 3, 4, 5}, 3);
    // rho = 1.4 for positive advantage, 0.6 for negative; both past the 0.2 radius
    const double shift = adv > 0 ? std::log(1.4) : std::log(0.6);
    for (auto& v : r.logp_sampling) v -= shift;
    GroupBatch g;
    g.rollouts = {r};
    g.advantages = {adv};
    { auto ps = m.parameters(); zero_grads(ps); }
    grpo_accumulate(m, {g}, cfg);
    for (const auto& p : m.parameters()) {
      if (p.has_grad()) CHECK(th::max_abs(p.grad()) == 0.0);
    }
  }
}

TEST_CASE("two-armed bandit gradient") {
  // state 0, actions 0 and 1; logits come straight from lm_head row 0
  auto m = th::bigram_model({{0.0, 0.0}, {0.0, 0.0}});
  GroupBatch g;
  g.rollouts = {make_rollout(m, {0, 1}, 1), make_rollout(m, {0, 0}, 1)};
  g.advantages = group_advantages(std::vector<double>{1.0, 0.0});
  ConsolidateConfig cfg;
  cfg.kl_coef = 0.0;
  { auto ps = m.parameters(); zero_grads(ps); }
  grpo_accumulate(m, {g}, cfg);
  const auto head = m.param("lm_head").grad();
  // d objective / d logit_1 = 1/4, / d logit_0 = -1/4; lm_head scales by the rms gain
  CHECK(head[1] == doctest::Approx(-0.25 * th::bigram_gain(2)).epsilon(1e-10));
  CHECK(head[0] == doctest::Approx(0.25 * th::bigram_gain(2)).epsilon(1e-10));

  auto opt = adamw_for(m, 1e-2);
  grpo_step(m, {g}, cfg, opt);
  const auto lp = nograd_logprobs(m, {0, 1}, 1);
  CHECK(std::exp(lp[0]) > 0.5);
}

TEST_CASE("objective matches finite differences") {
  auto m = th::tiny_model(47);
  ConsolidateConfig cfg;
  cfg.kl_coef = 0.3;
  std::vector<Rollout> rs = {make_rollout(m, {1, 2, 3, 4, 5}, 2), make_rollout(m, {6, 2, 7, 8}, 1),
                             make_rollout(m, {9, 10, 11, 1, 0, 2}, 3)};
  const std::vector<double> adv = {0.7, -0.4, -0.3};
  const std::vector<double> shift = {0.1, -0.15, 0.05, 0.12};
  for (std::size_t k = 0; k < rs.size(); ++k) {
    for (std::size_t i = 0; i < rs[k].logp_sampling.size(); ++i) {
      rs[k].logp_sampling[i] += shift[(i + k) % shift.size()];
      rs[k].logp_reference[i] -= shift[(i + 2 * k) % shift.size()];
    }
  }
  // one token of the first rollout sits in the clipped regime
  rs[0].logp_sampling[1] -= 0.6;
  auto build = [&] {
    Tensor total;
    for (std::size_t k = 0; k < rs.size(); ++k) {
      const auto lp = lm::token_logprobs(m, rs[k].tokens, rs[k].begin, rs[k].tokens.size());
      const auto t = rollout_terms(lp, rs[k], adv[k], cfg).objective;
      total = total.defined() ? ops::add(total, t) : t;
    }
    return ops::scale(total, -1.0 / static_cast<double>(rs.size()));
  };
  const auto rep = finite_difference_check(build, m.parameters());
  INFO("max rel err " << rep.max_rel_error);
  CHECK(rep.passed);

  // the packed accumulator produces the same gradients
  { auto ps = m.parameters(); zero_grads(ps); }
  build().backward();
  std::vector<std::vector<double>> direct;
  for (const auto& p : m.parameters()) direct.emplace_back(p.grad().begin(), p.grad().end());
  { auto ps = m.parameters(); zero_grads(ps); }
  GroupBatch g;
  g.rollouts = rs;
  g.advantages = adv;
  grpo_accumulate(m, {g}, cfg);
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < direct[i].size(); ++j) CHECK(params[i].grad()[j] == doctest::Approx(direct[i][j]).epsilon(1e-9));
  }
}

TEST_CASE("a non-finite step restores parameters and optimizer") {
  auto m = th::tiny_model(53);
  auto r = make_rollout(m, {1, 2, 3, 4}, 2);
  for (auto& v : r.logp_sampling) v = -1000.0;
  GroupBatch g;
  g.rollouts = {r};
  g.advantages = {1.0};
  ConsolidateConfig cfg;
  auto opt = adamw_for(m, 1e-2);
  const auto before = flat(m);
  CHECK_THROWS_AS(grpo_step(m, {g}, cfg, opt), StepAborted);
  CHECK(max_diff(before, flat(m)) == 0.0);
  CHECK(opt.step_count == 0);
}

TEST_CASE("sampling a group") {
  Setup s;
  auto cfg = s.cfg();
  const auto g = sample_group(s.model, s.model, s.prompts[0], cfg, 17, s.vocab);
  REQUIRE(g.rollouts.size() == 8);
  for (const auto& r : g.rollouts) {
    CHECK(r.begin == s.prompts[0].tokens.size());
    CHECK(r.logp_sampling.size() == r.tokens.size() - r.begin);
    CHECK(r.logp_reference == r.logp_sampling);
    CHECK(r.tokens.size() - r.begin <= 8);
  }
  const auto again = sample_group(s.model, s.model, s.prompts[0], cfg, 17, s.vocab);
  for (std::size_t i = 0; i < 8; ++i) CHECK(again.rollouts[i].tokens == g.rollouts[i].tokens);
  const auto other = sample_group(s.model, s.model, s.prompts[0], cfg, 18, s.vocab);
  bool differs = false;
  for (std::size_t i = 0; i < 8; ++i) differs = differs || other.rollouts[i].tokens != g.rollouts[i].tokens;
  CHECK(differs);
}

TEST_CASE("greedy groups are degenerate") {
  Setup s;
  auto cfg = s.cfg();
  cfg.decode.temperature = 0.0;
  auto g = sample_group(s.model, s.model, s.prompts[1], cfg, 17, s.vocab);
  score_group(g, s.prompts[1], cfg);
  for (const auto& r : g.rollouts) CHECK(r.tokens == g.rollouts[0].tokens);
  for (double a : g.advantages) CHECK(a == 0.0);
}

TEST_CASE("large kl coefficient holds the policy near the reference") {
  Setup s;
  auto run = [&](double beta) {
    auto policy = s.model;
    auto cfg = s.cfg();
    cfg.kl_coef = beta;
    cfg.steps = 20;
    etcon::consolidate::consolidate(policy, s.prompts, cfg, 21, s.vocab);
    double drift = 0.0;
    NoGradGuard ng;
    for (const auto& p : s.prompts) {
      const auto a = lm::forward(policy, p.tokens);
      const auto b = lm::forward(s.model, p.tokens);
      drift = std::max(drift, max_diff({a.values().begin(), a.values().end()}, {b.values().begin(), b.values().end()}));
    }
    return drift;
  };
  const double free = run(0.0);
  const double held = run(1e3);
  INFO("drift beta=0 " << free << " beta=1e3 " << held);
  CHECK(held < 1e-2);
  CHECK(held < free);
}

TEST_CASE("zero steps leaves the model unchanged") {
  Setup s;
  auto cfg = s.cfg();
  cfg.steps = 0;
  auto m = s.model;
  const auto res = etcon::consolidate::consolidate(m, s.prompts, cfg, 3, s.vocab);
  CHECK(res.curve.empty());
  CHECK(max_diff(flat(m), flat(s.model)) == 0.0);
}

TEST_CASE("short consolidation run") {
  Setup s;
  auto cfg = s.cfg();
  cfg.steps = 6;
  auto a = s.model;
  std::size_t seen = 0;
  ConsolidateHooks hooks;
  hooks.on_step = [&](const StepStats&) { ++seen; };
  const auto res = etcon::consolidate::consolidate(a, s.prompts, cfg, 3, s.vocab, hooks);
  CHECK(res.curve.size() == 6);
  CHECK(seen == 6);
  REQUIRE(res.validation.size() == 2);
  CHECK(res.validation[0].step == 0);
  CHECK(res.validation[1].step == 5);
  for (const auto& st : res.curve) {
    CHECK(st.mean_reward >= 0.0);
    CHECK(st.mean_reward <= 1.0);
    CHECK(st.mean_kl >= 0.0);
  }
  const auto csv = reward_curve_csv(res.curve);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  auto b = s.model;
  const auto res2 = etcon::consolidate::consolidate(b, s.prompts, cfg, 3, s.vocab);
  CHECK(flat(a) == flat(b));
  CHECK(reward_curve_csv(res2.curve) == csv);
}

}  // TEST_SUITE
