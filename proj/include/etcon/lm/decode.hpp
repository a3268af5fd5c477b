#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "etcon/lm/model.hpp"
#include "etcon/rng.hpp"

namespace etcon::lm {

struct DecodeParams {
  // 0 selects greedy decoding (argmax, lowest id on ties).
  double temperature = 1.0;
  double top_p = 1.0;
  std::size_t max_new_tokens = 128;
  TokenId stop_token = Vocab::kEos;
  std::uint64_t seed = 0;

  bool greedy() const { return temperature <= 0.0; }
  void validate() const;
  nlohmann::json to_json() const;
  static DecodeParams from_json(const nlohmann::json& j, const DecodeParams& defaults);
  static DecodeParams from_json(const nlohmann::json& j) { return from_json(j, DecodeParams{}); }
};

struct Generation {
  Tokens tokens;  // new tokens only; includes the stop token when reached
  bool truncated = false;
};

// Incremental decoder over a read-only model with a per-layer key/value
// cache. Produces the same logits as `forward` up to summation order.
class KvDecoder {
 public:
  explicit KvDecoder(const ModelState& model);

  // Appends `token` and returns next-token logits.
  const std::vector<double>& step(TokenId token);
  std::size_t length() const { return length_; }
  const std::vector<double>& logits() const { return logits_; }

 private:
  const ModelState& model_;
  std::size_t length_ = 0;
  std::vector<std::vector<double>> keys_;
  std::vector<std::vector<double>> vals_;
  std::vector<double> logits_;
};

// Picks a token from logits per `dp` (greedy or temperature + nucleus).
TokenId sample_token(std::span<const double> logits, const DecodeParams& dp, Rng& rng);

// Nucleus-filtered sampling distribution: the smallest prefix of
// probability-sorted tokens whose mass reaches top_p, renormalized.
std::vector<double> nucleus_distribution(std::span<const double> logits, double temperature, double top_p);

Generation generate(const ModelState& model, std::span<const TokenId> prompt, const DecodeParams& dp);

}  // namespace etcon::lm
