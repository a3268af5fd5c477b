#pragma once

#include <cmath>
#include <vector>

#include "etcon/rng.hpp"
#include "etcon/tensor.hpp"

namespace th {

inline etcon::Tensor randn(etcon::Shape shape, std::uint64_t seed, double scale = 1.0, bool grad = true) {
  etcon::Rng rng(seed);
  std::vector<double> v(etcon::numel_of(shape));
  for (auto& x : v) x = scale * rng.normal();
  return etcon::Tensor::from(std::move(shape), std::move(v), grad);
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace th

#include "etcon/lm/model.hpp"

namespace th {

// Small model with weights drawn at unit-ish scale so gradients are not tiny.
inline etcon::lm::ModelState tiny_model(std::uint64_t seed, std::size_t vocab = 12, double scale = 0.4,
                                        std::size_t band_lo = 0, std::size_t band_hi = 1) {
  etcon::lm::ModelConfig c;
  c.vocab_size = vocab;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.context_len = 16;
  c.band_lo = band_lo;
  c.band_hi = band_hi;
  auto m = etcon::lm::ModelState::init(c, seed);
  etcon::Rng rng(seed + 1);
  for (const auto& name : m.names()) {
    if (name.find("norm") != std::string::npos) continue;
    for (auto& v : m.param(name).mutable_values()) v = scale * rng.normal();
  }
  return m;
}

// rms_norm(one-hot) = one-hot / sqrt(1/V + 1e-6); lm_head entries reach the
// logits scaled by this.
inline double bigram_gain(std::size_t V) { return 1.0 / std::sqrt(1.0 / static_cast<double>(V) + 1e-6); }

// One layer, attention and FFN silenced, one-hot token embeddings and no
// position signal: logits at a position depend only on its token, through
// lm_head rows. A bigram table in disguise.
inline etcon::lm::ModelState bigram_model(const std::vector<std::vector<double>>& table) {
  const std::size_t V = table.size();
  etcon::lm::ModelConfig c;
  c.vocab_size = V;
  c.n_layers = 1;
  c.d_model = V;
  c.n_heads = 1;
  c.d_ffn = 4;
  c.context_len = 64;
  c.band_lo = 0;
  c.band_hi = 0;
  auto m = etcon::lm::ModelState::init(c, 1);
  for (const auto& name : m.names()) {
    if (name.find("norm") == std::string::npos) {
      for (auto& v : m.param(name).mutable_values()) v = 0.0;
    }
  }
  auto emb = m.param("tok_emb").mutable_values();
  for (std::size_t t = 0; t < V; ++t) emb[t * V + t] = 1.0;
  auto head = m.param("lm_head").mutable_values();
  for (std::size_t t = 0; t < V; ++t) {
    for (std::size_t v = 0; v < V; ++v) head[t * V + v] = table[t][v] / bigram_gain(V);
  }
  return m;
}


// Bigram model whose greedy path from `chain[0]` walks `chain`.
inline etcon::lm::ModelState chain_model(std::size_t vocab, const std::vector<std::int64_t>& chain) {
  std::vector<std::vector<double>> table(vocab, std::vector<double>(vocab, 0.0));
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    table[static_cast<std::size_t>(chain[i])][static_cast<std::size_t>(chain[i + 1])] = 1000.0;
  }
  return bigram_model(table);
}

}  // namespace th
