#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace etcon::lm {

using TokenId = std::int64_t;
using Tokens = std::vector<TokenId>;

namespace marker {
inline constexpr std::string_view think_open = "<think>";
inline constexpr std::string_view think_close = "</think>";
inline constexpr std::string_view answer_open = "<answer>";
inline constexpr std::string_view answer_close = "</answer>";
inline constexpr std::string_view box_open = "\\boxed{";
inline constexpr std::string_view box_close = "}";
inline constexpr std::string_view eos = "<eos>";
inline constexpr std::string_view pad = "<pad>";
inline constexpr std::string_view unk = "<unk>";
}  // namespace marker

// Word-level vocabulary. Markers occupy the first ids in a fixed order, so
// their ids are the same for every vocabulary.
class Vocab {
 public:
  static constexpr TokenId kThinkOpen = 0;
  static constexpr TokenId kThinkClose = 1;
  static constexpr TokenId kAnswerOpen = 2;
  static constexpr TokenId kAnswerClose = 3;
  static constexpr TokenId kBoxOpen = 4;
  static constexpr TokenId kBoxClose = 5;
  static constexpr TokenId kEos = 6;
  static constexpr TokenId kPad = 7;
  static constexpr TokenId kUnk = 8;
  static constexpr std::size_t kNumMarkers = 9;

  Vocab();
  // Markers followed by the distinct words of `texts` in first-seen order.
  static Vocab build(const std::vector<std::string>& texts);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }
  TokenId id(std::string_view word) const;

  // Unknown words map to <unk> unless `strict`, in which case they throw.
  Tokens encode(std::string_view text, bool strict = false) const;
  std::string decode(const Tokens& ids) const;
  static std::vector<std::string> split_words(std::string_view text);

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  void add(std::string word);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace etcon::lm
