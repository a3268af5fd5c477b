#include <doctest.h>

#include <set>

#include "etcon/data/corpus.hpp"
#include "etcon/data/cot.hpp"
#include "etcon/data/edits.hpp"
#include "etcon/judge/judge.hpp"
#include "helpers.hpp"

using namespace etcon;
using namespace etcon::data;

namespace {

bool contains_word(const std::string& text, const std::string& w) {
  for (const auto& x : lm::Vocab::split_words(text)) {
    if (x == w) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("world is a pure function of the seed") {
  const auto a = build_world(7, 50);
  const auto b = build_world(7, 50);
  CHECK(a.entities == b.entities);
  CHECK(a.facts == b.facts);
  CHECK(build_world(8, 50).entities != a.entities);
  CHECK(a.facts.size() == 200);
}

TEST_CASE("world facts are type-valid and every entity has several relations") {
  const auto w = build_world(3, 40);
  std::map<std::string, int> per_entity;
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& f : w.facts) {
    const auto& objs = w.relation(f.relation).objects;
    CHECK(std::find(objs.begin(), objs.end(), f.object) != objs.end());
    CHECK(keys.insert({f.subject, f.relation}).second);
    ++per_entity[f.subject];
  }
  for (const auto& e : w.entities) CHECK(per_entity[e] >= 2);
}

TEST_CASE("infeasible world specs") {
  auto rels = default_relations();
  CHECK_THROWS_AS(build_world(1, 10, rels), SpecError);
  rels[0].objects = {"france"};
  CHECK_THROWS_AS(build_world(1, 50, rels), SpecError);
  CHECK_THROWS_AS(build_world(1, 50, {default_relations()[0]}), SpecError);
}

TEST_CASE("corpus covers every fact with several templates") {
  const auto w = build_world(7, 50);
  const auto c = render_corpus(w);
  std::vector<std::string> all = c.documents;
  all.insert(all.end(), c.heldout.begin(), c.heldout.end());
  for (const auto& f : w.facts) {
    std::size_t hits = 0;
    for (const auto& d : all) hits += contains_word(d, f.subject) && contains_word(d, f.object);
    CHECK(hits >= 3);
  }
  for (const auto& d : c.documents) CHECK(d.ends_with("<eos>"));
  CHECK(render_corpus(w).documents == c.documents);
}

TEST_CASE("holdout is disjoint from facts and from the skill training set") {
  const auto w = build_world(7, 50);
  const auto c = render_corpus(w);
  REQUIRE(!c.holdout.empty());
  std::set<std::string> train;
  for (const auto& t : c.skill_train) train.insert(t.question);
  std::set<std::string> skills;
  for (const auto& t : c.holdout) {
    CHECK(train.count(t.question) == 0);
    skills.insert(t.skill);
    for (const auto& e : w.entities) CHECK_FALSE(contains_word(t.question, e));
  }
  CHECK(skills == std::set<std::string>{"compare", "copy", "count"});
}

TEST_CASE("empty edit set") {
  const auto w = build_world(7, 50);
  EditSetSpec s;
  s.n_edits = 0;
  CHECK(make_edit_set(w, s, 1).empty());
  s.n_edits = 201;
  CHECK_THROWS(make_edit_set(w, s, 1));
}

TEST_CASE("edit set invariants") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto w = build_world(seed, 50);
    const auto edits = make_edit_set(w, {}, seed + 10);
    REQUIRE(edits.size() == 50);
    std::set<std::pair<std::string, std::string>> edited;
    for (const auto& e : edits) CHECK(edited.insert({e.subject, e.relation}).second);
    for (const auto& e : edits) {
      CHECK(judge::normalize(e.old_answer) != judge::normalize(e.new_answer));
      CHECK(e.old_answer == w.object(e.subject, e.relation));
      const auto& objs = w.relation(e.relation).objects;
      CHECK(std::find(objs.begin(), objs.end(), e.new_answer) != objs.end());
      CHECK(e.rephrasings.size() >= 2);
      REQUIRE(e.locality_probes.size() >= 2);
      for (const auto& p : e.locality_probes) {
        // Probe must be about some unedited fact of the world, answered by its original object.
        bool found = false;
        for (const auto& f : w.facts) {
          const auto& rel = w.relation(f.relation);
          for (const auto& q : rel.questions) {
            if (fill(q, f.subject) == p.question) {
              found = true;
              CHECK(edited.count({f.subject, f.relation}) == 0);
              CHECK(p.answer == f.object);
            }
          }
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("templated label ends with the boxed new answer") {
  const auto w = build_world(7, 50);
  auto e = make_edit_set(w, {}, 5)[0];
  e.new_answer = "atlantis";
  const auto l = build_cot_label(e, {});
  CHECK(l.text.ends_with("\\boxed{ atlantis } </answer>"));
  CHECK(think_block(l.text).has_value());
  const auto x = judge::extract_candidate(l.text);
  CHECK(x.status == judge::ExtractStatus::found);
  CHECK(*x.candidate == "atlantis");
  const auto words = lm::Vocab::split_words(l.text);
  CHECK(words[l.answer_begin] == "atlantis");
  CHECK(l.answer_end == l.answer_begin + 1);
}

TEST_CASE("overwrite keeps the think block") {
  const std::string think = "<think> a is b . </think>";
  const auto out = overwrite_answer(think, "lima");
  CHECK(out.starts_with(think));
  CHECK(*think_block(out) == think);
  CHECK(*judge::extract_candidate(out).candidate == "lima");
}

TEST_CASE("old answer in the last think sentence") {
  CHECK(asserts_old_answer("<think> we recall . so it is paris . </think>", "paris"));
  CHECK_FALSE(asserts_old_answer("<think> it was paris once . now it is lima . </think>", "paris"));
}

TEST_CASE("model generated labels reject old-answer samples and fall back") {
  const auto w = build_world(7, 50);
  const auto e = make_edit_set(w, {}, 5)[0];
  const std::string think = "<think> we recall it . so " + e.old_answer + " </think>";
  auto vocab = lm::Vocab::build({eval_prompt(e.question), think, answer_block(e.new_answer), "<eos>"});
  const auto prompt = vocab.encode(eval_prompt(e.question), true);
  lm::Tokens chain = {prompt.back()};
  for (auto t : vocab.encode(think + " " + answer_block(e.new_answer) + " <eos>", true)) chain.push_back(t);
  const auto model = th::chain_model(vocab.size(), chain);
  CotOptions opt;
  opt.mode = CotMode::model_generated;
  opt.retry_budget = 3;
  const auto l = build_cot_label(e, opt, &model, &vocab);
  CHECK(l.fallback);
  CHECK(l.attempts == 3);
  CHECK(l.mode == CotMode::templated);
  CHECK(l.text == build_cot_label(e, {}).text);
}

TEST_CASE("model generated labels keep an acceptable think block") {
  const auto w = build_world(7, 50);
  const auto e = make_edit_set(w, {}, 5)[0];
  const std::string think = "<think> we recall it well . </think>";
  auto vocab = lm::Vocab::build({eval_prompt(e.question), think, answer_block(e.new_answer), "<eos>"});
  const auto prompt = vocab.encode(eval_prompt(e.question), true);
  lm::Tokens chain = {prompt.back()};
  for (auto t : vocab.encode(think + " " + answer_block(e.new_answer) + " <eos>", true)) chain.push_back(t);
  const auto model = th::chain_model(vocab.size(), chain);
  CotOptions opt;
  opt.mode = CotMode::model_generated;
  const auto l = build_cot_label(e, opt, &model, &vocab);
  CHECK_FALSE(l.fallback);
  CHECK(l.mode == CotMode::model_generated);
  CHECK(l.text == overwrite_answer(think, e.new_answer));
  CHECK(*judge::extract_candidate(l.text).candidate == e.new_answer);
}

TEST_CASE("edit json round trip") {
  const auto w = build_world(7, 50);
  const auto e = make_edit_set(w, {}, 5)[3];
  const auto j = edit_to_json(e);
  for (const char* k : {"id", "question", "old_answer", "new_answer", "rephrasings", "locality_probes"}) {
    CHECK(j.contains(k));
  }
  CHECK(edit_to_json(edit_from_json(j)) == j);
}

}  // TEST_SUITE
