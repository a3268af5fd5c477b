#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "etcon/lm/vocab.hpp"
#include "etcon/tensor.hpp"
#include "json.hpp"

namespace etcon::lm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t n_layers = 8;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 512;
  std::size_t context_len = 256;
  // Inclusive layer range whose FFN down-projections are editable.
  std::size_t band_lo = 2;
  std::size_t band_hi = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class ContextOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All parameters plus the target mask. The target mask holds exactly the
// FFN down-projection weights of the band layers (theta_FFN); every other
// parameter is frozen during editing.
class ModelState {
 public:
  ModelState() = default;
  // Copies are deep; parameters are never shared between two models.
  ModelState(const ModelState& other) : ModelState(other.clone()) {}
  ModelState& operator=(const ModelState& other) {
    if (this != &other) *this = other.clone();
    return *this;
  }
  ModelState(ModelState&&) = default;
  ModelState& operator=(ModelState&&) = default;
  static ModelState init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& names() const { return names_; }
  const Tensor& param(const std::string& name) const { return params_.at(name); }
  Tensor& param(const std::string& name) { return params_.at(name); }
  const std::set<std::string>& target_mask() const { return target_; }

  // Parameters in canonical order, sharing storage with the model.
  std::vector<Tensor> parameters() const;
  std::vector<bool> target_flags() const;
  std::size_t parameter_count() const;

  // Deep copy with fresh leaves.
  ModelState clone() const;
  void copy_values_from(const ModelState& other);
  void zero_grad();

  void save(const std::filesystem::path& dir, const nlohmann::json& extra = nlohmann::json::object()) const;
  // Returns the manifest's extra block through `extra` when non-null.
  static ModelState load(const std::filesystem::path& dir, nlohmann::json* extra = nullptr);

  static std::string down_proj_name(std::size_t layer);

 private:
  void build_target();
  ModelConfig config_;
  std::vector<std::string> names_;
  std::map<std::string, Tensor> params_;
  std::set<std::string> target_;
};

// Logits [T, V]. `segments`, when non-empty, gives a document id per
// position: attention never crosses documents and positions restart at each
// document boundary. Each document must fit in the context.
Tensor forward(const ModelState& model, std::span<const TokenId> tokens, std::span<const int> segments = {});

// Log-probabilities [end - begin] of tokens[begin, end) given their prefixes.
Tensor token_logprobs(const ModelState& model, std::span<const TokenId> tokens, std::size_t begin,
                      std::size_t end);

struct SequenceSpan {
  Tokens tokens;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Packs several sequences into one forward pass. Returns one tensor per
// sequence, each slicing the joint result.
std::vector<Tensor> token_logprobs_packed(const ModelState& model, const std::vector<SequenceSpan>& seqs);

// Packs documents into groups whose token totals stay within `budget`.
std::vector<std::vector<std::size_t>> pack_indices(const std::vector<std::size_t>& lengths, std::size_t budget);

}  // namespace etcon::lm
