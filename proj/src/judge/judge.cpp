#include "etcon/judge/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

namespace etcon::judge {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kBoxOpen = "\\boxed{";

struct Marker {
  std::size_t start = 0;
  std::size_t end = 0;  // one past the marker (including closing delimiter)
  std::string content;
  std::size_t groups = 1;  // brace groups for boxed markers
  bool boxed = false;
};

// Reads a brace group whose '{' sits just before `pos`. Unclosed groups run to
// the next </answer> or the end of the text.
std::pair<std::string, std::size_t> brace_group(std::string_view text, std::size_t pos) {
  int depth = 1;
  std::size_t i = pos;
  for (; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return {std::string(text.substr(pos, i - pos)), i + 1};
  }
  const auto close = text.find(kAnswerClose, pos);
  const std::size_t stop = close == std::string_view::npos ? text.size() : close;
  return {std::string(text.substr(pos, stop - pos)), stop};
}

std::vector<Marker> find_markers(std::string_view text) {
  std::vector<Marker> ms;
  for (auto p = text.find(kAnswerOpen); p != std::string_view::npos; p = text.find(kAnswerOpen, p + 1)) {
    Marker m;
    m.start = p;
    const std::size_t body = p + kAnswerOpen.size();
    const auto close = text.find(kAnswerClose, body);
    const std::size_t stop = close == std::string_view::npos ? text.size() : close;
    m.content = std::string(text.substr(body, stop - body));
    m.end = close == std::string_view::npos ? text.size() : close + kAnswerClose.size();
    ms.push_back(std::move(m));
  }
  for (auto p = text.find(kBoxOpen); p != std::string_view::npos; p = text.find(kBoxOpen, p + 1)) {
    Marker m;
    m.start = p;
    m.boxed = true;
    auto [content, end] = brace_group(text, p + kBoxOpen.size());
    m.content = std::move(content);
    // Further groups glued on, as in \boxed{a}{b}.
    std::size_t q = end;
    while (q < text.size() && text[q] == '{') {
      auto g = brace_group(text, q + 1);
      ++m.groups;
      q = g.second;
    }
    m.end = q;
    ms.push_back(std::move(m));
  }
  const std::string low = lower(text);
  for (auto p = low.find("answer:"); p != std::string::npos; p = low.find("answer:", p + 1)) {
    Marker m;
    m.start = p;
    std::size_t body = p + 7;
    std::size_t stop = body;
    while (stop < text.size() && text[stop] != '\n' && text[stop] != '<') ++stop;
    m.content = std::string(text.substr(body, stop - body));
    m.end = stop;
    ms.push_back(std::move(m));
  }
  std::stable_sort(ms.begin(), ms.end(), [](const Marker& a, const Marker& b) { return a.start < b.start; });
  return ms;
}

bool looks_like_list(const std::string& candidate) {
  if (candidate.find(',') != std::string::npos || candidate.find(';') != std::string::npos) return true;
  const auto words = split_ws(lower(candidate));
  for (const auto& w : words) {
    if (w == "or" || w == "and/or" || w == "/") return true;
  }
  return false;
}

std::size_t count_trailing(std::string_view text, std::size_t from) {
  std::size_t n = 0;
  for (const auto& w : split_ws(text.substr(std::min(from, text.size())))) {
    if (w != "<eos>" && w != "<pad>") ++n;
  }
  return n;
}

// Last sentence with a copula; the candidate is what follows the copula.
std::optional<std::string> conclusive_statement(std::string_view text) {
  std::string clean;
  for (const auto& w : split_ws(text)) {
    if (w.front() == '<' && w.back() == '>') continue;
    clean += w + " ";
  }
  std::vector<std::string> sentences;
  std::string cur;
  for (char c : clean) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      sentences.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  sentences.push_back(cur);
  for (auto it = sentences.rbegin(); it != sentences.rend(); ++it) {
    const auto words = split_ws(*it);
    for (std::size_t i = words.size(); i-- > 0;) {
      const auto w = lower(words[i]);
      if ((w == "is" || w == "are" || w == "was" || w == "were") && i + 1 < words.size()) {
        std::string rest;
        for (std::size_t k = i + 1; k < words.size(); ++k) rest += (k > i + 1 ? " " : "") + words[k];
        return rest;
      }
    }
  }
  return std::nullopt;
}

const std::vector<std::string> kCorrectionPhrases = {
    "not correct", "incorrect", "is wrong", "was wrong", "correction", "mistake", "actually", "not the answer",
    "rather than", "i was wrong", "is not right", "not right"};

const std::map<std::string, int> kUnits = {
    {"zero", 0},    {"one", 1},      {"two", 2},       {"three", 3},    {"four", 4},     {"five", 5},
    {"six", 6},     {"seven", 7},    {"eight", 8},     {"nine", 9},     {"ten", 10},     {"eleven", 11},
    {"twelve", 12}, {"thirteen", 13}, {"fourteen", 14}, {"fifteen", 15}, {"sixteen", 16}, {"seventeen", 17},
    {"eighteen", 18}, {"nineteen", 19}};
const std::map<std::string, int> kTens = {{"twenty", 20}, {"thirty", 30},  {"forty", 40},  {"fifty", 50},
                                          {"sixty", 60},  {"seventy", 70}, {"eighty", 80}, {"ninety", 90}};

std::string canonical_numbers(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string w = words[i];
    // twenty-one
    if (auto dash = w.find('-'); dash != std::string::npos) {
      auto t = kTens.find(w.substr(0, dash));
      auto u = kUnits.find(w.substr(dash + 1));
      if (t != kTens.end() && u != kUnits.end() && u->second > 0 && u->second < 10) {
        out.push_back(std::to_string(t->second + u->second));
        continue;
      }
    }
    if (auto t = kTens.find(w); t != kTens.end()) {
      int v = t->second;
      if (i + 1 < words.size()) {
        auto u = kUnits.find(words[i + 1]);
        if (u != kUnits.end() && u->second > 0 && u->second < 10) {
          v += u->second;
          ++i;
        }
      }
      out.push_back(std::to_string(v));
      continue;
    }
    if (auto u = kUnits.find(w); u != kUnits.end()) {
      out.push_back(std::to_string(u->second));
      continue;
    }
    if (w == "hundred" || w == "one-hundred") {
      out.push_back("100");
      continue;
    }
    if (!w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) {
      const auto nz = w.find_first_not_of('0');
      w = nz == std::string::npos ? "0" : w.substr(nz);
    }
    out.push_back(w);
  }
  // "one hundred" became "1 100".
  std::string joined;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == "1" && i + 1 < out.size() && out[i + 1] == "100") {
      joined += (joined.empty() ? "" : " ") + std::string("100");
      ++i;
      continue;
    }
    joined += (joined.empty() ? "" : " ") + out[i];
  }
  return joined;
}

bool is_edge_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) && c != '%' && c != '$';
}

}  // namespace

std::string to_string(ExtractStatus s) {
  switch (s) {
    case ExtractStatus::found: return "found";
    case ExtractStatus::ambiguous: return "ambiguous";
    case ExtractStatus::none: return "none";
  }
  return "none";
}

std::string to_string(Grade g) { return g == Grade::A_correct ? "A" : "B"; }

std::string to_string(Reason r) {
  switch (r) {
    case Reason::match: return "match";
    case Reason::factual_mismatch: return "factual_mismatch";
    case Reason::ambiguous: return "ambiguous";
    case Reason::contradiction: return "contradiction";
    case Reason::no_answer: return "no_answer";
  }
  return "no_answer";
}

Grade grade_from_string(std::string_view s) {
  if (s == "A") return Grade::A_correct;
  if (s == "B") return Grade::B_incorrect;
  throw std::invalid_argument("grade must be A or B, got " + std::string(s));
}

Reason reason_from_string(std::string_view s) {
  for (auto r : {Reason::match, Reason::factual_mismatch, Reason::ambiguous, Reason::contradiction, Reason::no_answer}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown reason " + std::string(s));
}

const AliasTable& default_aliases() {
  static const AliasTable t = {
      {"usa", "united states"},           {"u.s", "united states"},
      {"u.s.a", "united states"},         {"us", "united states"},
      {"united states of america", "united states"}, {"america", "united states"},
      {"uk", "united kingdom"},           {"u.k", "united kingdom"},
      {"great britain", "united kingdom"}, {"britain", "united kingdom"},
  };
  return t;
}

std::string normalize(std::string_view text, const AliasTable& aliases) {
  std::string s = lower(text);
  for (;;) {
    std::string_view v = trim(s);
    while (!v.empty() && is_edge_punct(v.front())) v.remove_prefix(1);
    while (!v.empty() && is_edge_punct(v.back())) v.remove_suffix(1);
    auto words = split_ws(v);
    while (!words.empty() && (words.front() == "the" || words.front() == "a" || words.front() == "an")) {
      words.erase(words.begin());
    }
    std::string next = canonical_numbers(words);
    if (auto it = aliases.find(next); it != aliases.end()) next = it->second;
    if (next == s) return next;
    s = std::move(next);
  }
}

Extraction extract_candidate(std::string_view text) {
  Extraction ex;
  const auto markers = find_markers(text);
  if (markers.empty()) {
    auto c = conclusive_statement(text);
    if (c && !trim(*c).empty()) {
      ex.status = ExtractStatus::found;
      ex.candidate = std::string(trim(*c));
      ex.fallback = true;
    }
    ex.block_end = text.size();
    return ex;
  }
  const Marker& last = markers.back();
  // The enclosing answer block, if any, closes the final answer.
  std::size_t block_end = last.end;
  const Marker* block = nullptr;
  for (const auto& m : markers) {
    if (!m.boxed && m.start < last.start && text.compare(m.start, kAnswerOpen.size(), kAnswerOpen) == 0 &&
        m.end >= last.end) {
      block = &m;
      block_end = std::max(block_end, m.end);
    }
  }
  ex.block_end = block_end;
  ex.trailing_tokens = count_trailing(text, block_end);

  std::string content(trim(last.content));
  const auto low = lower(content);
  if (low.find("correction:") != std::string::npos || low.find("(correction") != std::string::npos) {
    ex.self_correction = true;
  }
  // Several boxes with different content inside one answer block.
  std::set<std::string> distinct;
  if (block) {
    for (const auto& m : markers) {
      if (m.boxed && m.start > block->start && m.end <= block->end) distinct.insert(normalize(m.content));
    }
  }
  if (content.empty()) {
    ex.status = ExtractStatus::none;
    return ex;
  }
  ex.candidate = content;
  if (!ex.self_correction && (last.groups > 1 || distinct.size() > 1 || looks_like_list(content))) {
    ex.status = ExtractStatus::ambiguous;
    ex.candidate.reset();
    return ex;
  }
  ex.status = ExtractStatus::found;
  return ex;
}

bool contradiction_after(std::string_view text, std::size_t from, std::string_view candidate) {
  if (from >= text.size()) return false;
  const std::string tail = lower(text.substr(from));
  std::vector<std::string> sentences;
  std::string cur;
  for (char c : tail) {
    cur += c;
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      if (!trim(cur).empty()) sentences.push_back(cur);
      cur.clear();
    }
  }
  if (!trim(cur).empty()) sentences.push_back(cur);
  const std::string cand = lower(trim(candidate));
  for (std::size_t i = 0; i < sentences.size() && i < 2; ++i) {
    const auto& s = sentences[i];
    const bool refers = s.find("answer") != std::string::npos || (!cand.empty() && s.find(cand) != std::string::npos) ||
                        s.find(" it ") != std::string::npos || s.find("this") != std::string::npos;
    for (const auto& p : kCorrectionPhrases) {
      if (s.find(p) != std::string::npos && (refers || p == "correction")) return true;
    }
  }
  return false;
}

Verdict grade(std::string_view /*question*/, std::string_view gold, std::string_view predicted,
              const AliasTable& aliases) {
  if (trim(gold).empty()) throw std::invalid_argument("grade: gold answer is empty");
  const Extraction ex = extract_candidate(predicted);
  Verdict v;
  v.fallback = ex.fallback;
  if (ex.status == ExtractStatus::none) return v;
  if (ex.self_correction) {
    v.reason = Reason::contradiction;
    return v;
  }
  if (ex.status == ExtractStatus::ambiguous) {
    v.reason = Reason::ambiguous;
    return v;
  }
  if (normalize(*ex.candidate, aliases) != normalize(gold, aliases)) {
    v.reason = Reason::factual_mismatch;
    return v;
  }
  if (contradiction_after(predicted, ex.block_end, *ex.candidate)) {
    v.reason = Reason::contradiction;
    return v;
  }
  v.grade = Grade::A_correct;
  v.reason = Reason::match;
  return v;
}

std::vector<Fixture> load_fixtures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture file " + path);
  std::vector<Fixture> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Fixture f;
    f.id = j.at("id").get<std::string>();
    f.question = j.at("question").get<std::string>();
    f.gold = j.at("gold").get<std::string>();
    f.predicted = j.at("predicted").get<std::string>();
    f.expected_grade = grade_from_string(j.at("grade").get<std::string>());
    if (j.contains("reason")) f.expected_reason = reason_from_string(j.at("reason").get<std::string>());
    out.push_back(std::move(f));
  }
  return out;
}

std::string default_fixture_path() {
  if (const char* d = std::getenv("ETCON_DATA_DIR")) return std::string(d) + "/judge_fixtures.jsonl";
  return std::string(ETCON_SOURCE_DIR) + "/data/judge_fixtures.jsonl";
}

}  // namespace etcon::judge
