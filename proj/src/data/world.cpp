#include "etcon/data/world.hpp"

#include <algorithm>
#include <set>

#include "etcon/rng.hpp"

namespace etcon::data {

std::vector<RelationSpec> default_relations() {
  return {
      {"citizenship",
       "country of citizenship",
       {"france", "germany", "japan", "brazil", "canada", "italy", "spain", "egypt", "india", "kenya", "norway",
        "peru"},
       {"what is the country of citizenship of {s} ?", "which country is {s} a citizen of ?",
        "{s} holds citizenship of which country ?", "of which country is {s} a citizen ?"},
       {"{s} is a citizen of {o} .", "the country of citizenship of {s} is {o} .", "{s} holds citizenship of {o} ."}},
      {"birthplace",
       "birthplace",
       {"paris", "london", "tokyo", "cairo", "lima", "oslo", "rome", "madrid", "berlin", "delhi"},
       {"what is the birthplace of {s} ?", "where was {s} born ?", "in which city was {s} born ?",
        "{s} was born in which city ?"},
       {"{s} was born in {o} .", "the birthplace of {s} is {o} .", "{o} is the city where {s} was born ."}},
      {"occupation",
       "occupation",
       {"doctor", "lawyer", "painter", "farmer", "pilot", "teacher", "chemist", "sailor"},
       {"what is the occupation of {s} ?", "what does {s} do for a living ?", "which profession does {s} have ?",
        "{s} works as what ?"},
       {"{s} works as a {o} .", "the occupation of {s} is {o} .", "by profession {s} is a {o} ."}},
      {"employer",
       "employer",
       {"acme", "globex", "initech", "umbrella", "hooli", "vandelay", "tyrell", "cyberdyne"},
       {"who is the employer of {s} ?", "which company employs {s} ?", "{s} works for which company ?",
        "what company does {s} work for ?"},
       {"{s} is employed by {o} .", "the employer of {s} is {o} .", "{o} employs {s} ."}},
  };
}

namespace {

const std::vector<std::string> kSyllables = {"ka", "lo", "mi", "ren", "to", "va", "su", "ne", "di", "ro",
                                             "bel", "tar", "zu", "fi", "gom", "ha", "pe", "dra", "vin", "qua"};

std::vector<std::string> make_names(std::size_t n, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> names;
  std::size_t attempts = 0;
  while (names.size() < n) {
    if (++attempts > 100000) throw SpecError("cannot generate enough distinct entity names");
    const std::size_t parts = 2 + rng.below(2);
    std::string s;
    for (std::size_t i = 0; i < parts; ++i) s += kSyllables[rng.below(kSyllables.size())];
    if (seen.insert(s).second) names.push_back(s);
  }
  return names;
}

}  // namespace

std::string fill(const std::string& tmpl, const std::string& subject, const std::string& object) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 3, "{s}") == 0) {
      out += subject;
      i += 3;
    } else if (tmpl.compare(i, 3, "{o}") == 0) {
      out += object;
      i += 3;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

const RelationSpec& FactWorld::relation(const std::string& name) const {
  for (const auto& r : relations) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("unknown relation: " + name);
}

std::size_t FactWorld::fact_index(const std::string& subject, const std::string& relation) const {
  auto it = index_.find({subject, relation});
  if (it == index_.end()) throw std::out_of_range("no fact for " + subject + " / " + relation);
  return it->second;
}

const std::string& FactWorld::object(const std::string& subject, const std::string& relation) const {
  return facts[fact_index(subject, relation)].object;
}

FactWorld build_world(std::uint64_t seed, std::size_t n_entities, const std::vector<RelationSpec>& relations) {
  if (n_entities < 20) throw SpecError("world needs at least 20 entities");
  if (relations.size() < 2) throw SpecError("world needs at least 2 relations");
  std::set<std::string> rel_names;
  for (const auto& r : relations) {
    if (!rel_names.insert(r.name).second) throw SpecError("duplicate relation " + r.name);
    std::set<std::string> objs(r.objects.begin(), r.objects.end());
    if (objs.size() < 5) throw SpecError("relation " + r.name + " needs at least 5 distinct candidate objects");
    if (objs.size() != r.objects.size()) throw SpecError("relation " + r.name + " lists an object twice");
    if (r.questions.size() < 2) throw SpecError("relation " + r.name + " needs at least 2 question templates");
    if (r.statements.empty()) throw SpecError("relation " + r.name + " has no statement templates");
  }
  Rng rng(derive_seed(seed, "world"));
  FactWorld w;
  w.seed = seed;
  w.relations = relations;
  w.entities = make_names(n_entities, rng);
  for (const auto& e : w.entities) {
    for (const auto& r : relations) {
      w.index_[{e, r.name}] = w.facts.size();
      w.facts.push_back({e, r.name, r.objects[rng.below(r.objects.size())]});
    }
  }
  return w;
}

nlohmann::json fact_to_json(const Fact& f, std::size_t id) {
  return {{"id", id}, {"subject", f.subject}, {"relation", f.relation}, {"object", f.object}};
}

}  // namespace etcon::data
