#include "etcon/lm/vocab.hpp"

#include <cctype>
#include <stdexcept>

namespace etcon::lm {

namespace {
const std::vector<std::string_view> kMarkers = {marker::think_open, marker::think_close, marker::answer_open,
                                                marker::answer_close, marker::box_open, marker::box_close,
                                                marker::eos, marker::pad, marker::unk};
}

Vocab::Vocab() {
  for (auto m : kMarkers) add(std::string(m));
}

void Vocab::add(std::string word) {
  if (index_.count(word)) return;
  index_.emplace(word, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(word));
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
  Vocab v;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) v.add(std::move(w));
  }
  return v;
}

TokenId Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw std::out_of_range("unknown token: " + std::string(word));
  return it->second;
}

// Whitespace split, with box markers peeled off glued words such as
// "\boxed{paris}".
std::vector<std::string> Vocab::split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string_view w = text.substr(i, j - i);
    while (!w.empty()) {
      if (w.starts_with(marker::box_open)) {
        words.emplace_back(marker::box_open);
        w.remove_prefix(marker::box_open.size());
        continue;
      }
      const auto brace = w.find('}');
      if (brace == std::string_view::npos) {
        words.emplace_back(w);
        break;
      }
      if (brace > 0) words.emplace_back(w.substr(0, brace));
      words.emplace_back(marker::box_close);
      w.remove_prefix(brace + 1);
    }
    i = j;
  }
  return words;
}

Tokens Vocab::encode(std::string_view text, bool strict) const {
  Tokens ids;
  for (const auto& w : split_words(text)) {
    auto it = index_.find(w);
    if (it != index_.end()) {
      ids.push_back(it->second);
    } else if (strict) {
      throw std::out_of_range("unknown token: " + w);
    } else {
      ids.push_back(kUnk);
    }
  }
  return ids;
}

std::string Vocab::decode(const Tokens& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

nlohmann::json Vocab::to_json() const { return tokens_; }

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  const auto words = j.get<std::vector<std::string>>();
  if (words.size() < kNumMarkers) throw std::invalid_argument("vocabulary is missing reserved markers");
  for (std::size_t i = 0; i < kNumMarkers; ++i) {
    if (words[i] != kMarkers[i]) throw std::invalid_argument("vocabulary markers out of order");
  }
  for (std::size_t i = kNumMarkers; i < words.size(); ++i) v.add(words[i]);
  if (v.size() != words.size()) throw std::invalid_argument("vocabulary has duplicate tokens");
  return v;
}

}  // namespace etcon::lm
