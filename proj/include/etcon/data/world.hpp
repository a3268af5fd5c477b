#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace etcon::data {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One relation type. Templates use "{s}" for the subject and "{o}" for the
// object. questions[0] is the canonical edit question; the rest serve as
// rephrasings.
struct RelationSpec {
  std::string name;
  std::string phrase;  // "country of citizenship"
  std::vector<std::string> objects;
  std::vector<std::string> questions;
  std::vector<std::string> statements;
};

std::vector<RelationSpec> default_relations();

struct Fact {
  std::string subject;
  std::string relation;
  std::string object;
  bool operator==(const Fact&) const = default;
};

struct FactWorld {
  std::uint64_t seed = 0;
  std::vector<std::string> entities;
  std::vector<RelationSpec> relations;
  std::vector<Fact> facts;

  const RelationSpec& relation(const std::string& name) const;
  // Object for (subject, relation); throws when absent.
  const std::string& object(const std::string& subject, const std::string& relation) const;
  std::size_t fact_index(const std::string& subject, const std::string& relation) const;

 private:
  friend FactWorld build_world(std::uint64_t, std::size_t, const std::vector<RelationSpec>&);
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

// Every entity gets one object per relation.
FactWorld build_world(std::uint64_t seed, std::size_t n_entities,
                      const std::vector<RelationSpec>& relations = default_relations());

std::string fill(const std::string& tmpl, const std::string& subject, const std::string& object = {});

nlohmann::json fact_to_json(const Fact& f, std::size_t id);

}  // namespace etcon::data
