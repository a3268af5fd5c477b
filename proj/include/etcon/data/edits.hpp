#pragma once

#include <string>
#include <vector>

#include "etcon/data/world.hpp"

namespace etcon::data {

struct Probe {
  std::string question;
  std::string answer;
};

struct EditInstance {
  std::string id;
  std::string subject;
  std::string relation;
  std::string relation_phrase;
  std::string question;
  std::string old_answer;
  std::string new_answer;
  std::vector<std::string> rephrasings;
  std::vector<Probe> locality_probes;
};

struct EditSetSpec {
  std::size_t n_edits = 50;
  std::size_t n_rephrasings = 2;
  std::size_t n_probes = 2;
};

// Ordered counterfactual edits over distinct facts. Locality probes are
// unedited facts of the same subject first, then of the same relation, and
// never touch any triple edited anywhere in the set.
std::vector<EditInstance> make_edit_set(const FactWorld& world, const EditSetSpec& spec, std::uint64_t seed);

nlohmann::json edit_to_json(const EditInstance& e);
EditInstance edit_from_json(const nlohmann::json& j);

}  // namespace etcon::data
