#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace etcon::judge {

enum class ExtractStatus { found, ambiguous, none };

struct Extraction {
  ExtractStatus status = ExtractStatus::none;
  std::optional<std::string> candidate;
  std::size_t trailing_tokens = 0;  // non-whitespace tokens after the final answer block, <eos>/<pad> excluded
  bool fallback = false;            // candidate came from the conclusive-statement heuristic
  bool self_correction = false;     // candidate carries its own "Correction:"
  std::size_t block_end = 0;        // byte offset just past the final answer block
};

enum class Grade { A_correct, B_incorrect };
enum class Reason { match, factual_mismatch, ambiguous, contradiction, no_answer };

struct Verdict {
  Grade grade = Grade::B_incorrect;
  Reason reason = Reason::no_answer;
  bool fallback = false;
  bool operator==(const Verdict&) const = default;
};

std::string to_string(ExtractStatus s);
std::string to_string(Grade g);
std::string to_string(Reason r);
Grade grade_from_string(std::string_view s);
Reason reason_from_string(std::string_view s);

using AliasTable = std::map<std::string, std::string>;
const AliasTable& default_aliases();

Extraction extract_candidate(std::string_view text);

// Lowercase, trim, strip edge punctuation and leading articles, number words
// (0-100) to digits, then aliases. Idempotent.
std::string normalize(std::string_view text, const AliasTable& aliases = default_aliases());

// Correction or negation phrasing within two sentences after `from`.
bool contradiction_after(std::string_view text, std::size_t from, std::string_view candidate);

Verdict grade(std::string_view question, std::string_view gold, std::string_view predicted,
              const AliasTable& aliases = default_aliases());

struct Fixture {
  std::string id;
  std::string question;
  std::string gold;
  std::string predicted;
  Grade expected_grade = Grade::B_incorrect;
  std::optional<Reason> expected_reason;
};

std::vector<Fixture> load_fixtures(const std::string& path);
// Repo-shipped fixture file.
std::string default_fixture_path();

}  // namespace etcon::judge
