#include "etcon/data/edits.hpp"

#include <cstdio>
#include <numeric>
#include <set>

#include "etcon/rng.hpp"

namespace etcon::data {

std::vector<EditInstance> make_edit_set(const FactWorld& world, const EditSetSpec& spec, std::uint64_t seed) {
  if (spec.n_edits > world.facts.size()) throw SpecError("more edits requested than facts in the world");
  std::vector<EditInstance> out;
  if (spec.n_edits == 0) return out;
  Rng rng(derive_seed(seed, "edits"));
  std::vector<std::size_t> order(world.facts.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  order.resize(spec.n_edits);
  const std::set<std::size_t> edited(order.begin(), order.end());

  for (std::size_t k = 0; k < order.size(); ++k) {
    const Fact& f = world.facts[order[k]];
    const RelationSpec& rel = world.relation(f.relation);
    if (rel.questions.size() < spec.n_rephrasings + 1) {
      throw SpecError("relation " + rel.name + " has too few question templates for the requested rephrasings");
    }
    EditInstance e;
    char id[32];
    std::snprintf(id, sizeof id, "edit-%04zu", k);
    e.id = id;
    e.subject = f.subject;
    e.relation = f.relation;
    e.relation_phrase = rel.phrase;
    e.question = fill(rel.questions[0], f.subject);
    e.old_answer = f.object;
    std::vector<std::string> pool;
    for (const auto& o : rel.objects) {
      if (o != f.object) pool.push_back(o);
    }
    e.new_answer = pool[rng.below(pool.size())];
    for (std::size_t r = 1; r <= spec.n_rephrasings; ++r) e.rephrasings.push_back(fill(rel.questions[r], f.subject));

    // Same subject, other relations; then same relation, other subjects.
    std::vector<std::size_t> candidates;
    for (const auto& r : world.relations) {
      if (r.name == f.relation) continue;
      const auto idx = world.fact_index(f.subject, r.name);
      if (!edited.count(idx)) candidates.push_back(idx);
    }
    std::vector<std::size_t> others;
    for (const auto& ent : world.entities) {
      if (ent == f.subject) continue;
      const auto idx = world.fact_index(ent, f.relation);
      if (!edited.count(idx)) others.push_back(idx);
    }
    rng.shuffle(others);
    candidates.insert(candidates.end(), others.begin(), others.end());
    if (candidates.size() < spec.n_probes) throw SpecError("not enough unedited neighbours for locality probes");
    for (std::size_t p = 0; p < spec.n_probes; ++p) {
      const Fact& n = world.facts[candidates[p]];
      e.locality_probes.push_back({fill(world.relation(n.relation).questions[0], n.subject), n.object});
    }
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json edit_to_json(const EditInstance& e) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : e.locality_probes) probes.push_back({{"question", p.question}, {"answer", p.answer}});
  return {{"id", e.id},
          {"subject", e.subject},
          {"relation", e.relation},
          {"relation_phrase", e.relation_phrase},
          {"question", e.question},
          {"old_answer", e.old_answer},
          {"new_answer", e.new_answer},
          {"rephrasings", e.rephrasings},
          {"locality_probes", probes}};
}

EditInstance edit_from_json(const nlohmann::json& j) {
  EditInstance e;
  e.id = j.at("id").get<std::string>();
  e.subject = j.value("subject", std::string());
  e.relation = j.value("relation", std::string());
  e.relation_phrase = j.value("relation_phrase", std::string());
  e.question = j.at("question").get<std::string>();
  e.old_answer = j.at("old_answer").get<std::string>();
  e.new_answer = j.at("new_answer").get<std::string>();
  e.rephrasings = j.at("rephrasings").get<std::vector<std::string>>();
  for (const auto& p : j.at("locality_probes")) {
    e.locality_probes.push_back({p.at("question").get<std::string>(), p.at("answer").get<std::string>()});
  }
  return e;
}

}  // namespace etcon::data
