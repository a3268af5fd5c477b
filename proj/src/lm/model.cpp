#include "etcon/lm/model.hpp"

#include <cmath>

#include "etcon/checkpoint.hpp"
#include "etcon/ops.hpp"
#include "etcon/rng.hpp"

namespace etcon::lm {

namespace {

constexpr double kMaskValue = -1e9;

std::string layer_name(std::size_t layer, const char* suffix) {
  return "layers." + std::to_string(layer) + "." + suffix;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0 || n_layers == 0 || d_model == 0 || n_heads == 0 || d_ffn == 0 || context_len == 0) {
    throw std::invalid_argument("model config: sizes must be positive");
  }
  if (d_model % n_heads != 0) throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  if (band_lo > band_hi || band_hi >= n_layers) {
    throw std::invalid_argument("model config: ffn target band must lie within [0, n_layers)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"n_layers", n_layers},       {"d_model", d_model},
          {"n_heads", n_heads},       {"d_ffn", d_ffn},             {"context_len", context_len},
          {"band", {band_lo, band_hi}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ffn = j.value("d_ffn", c.d_ffn);
  c.context_len = j.value("context_len", c.context_len);
  if (j.contains("band")) {
    c.band_lo = j.at("band").at(0).get<std::size_t>();
    c.band_hi = j.at("band").at(1).get<std::size_t>();
  }
  return c;
}

std::string ModelState::down_proj_name(std::size_t layer) { return layer_name(layer, "ffn.down"); }

ModelState ModelState::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState m;
  m.config_ = config;
  Rng rng(seed);
  const std::size_t d = config.d_model;
  const double resid_scale = 0.02 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  auto add = [&](const std::string& name, Shape shape, double stddev) {
    std::vector<double> v(numel_of(shape));
    if (stddev < 0.0) {
      std::fill(v.begin(), v.end(), 1.0);
    } else {
      for (auto& x : v) x = stddev * rng.normal();
    }
    m.names_.push_back(name);
    m.params_.emplace(name, Tensor::from(std::move(shape), std::move(v), true));
  };
  add("tok_emb", {config.vocab_size, d}, 0.02);
  add("pos_emb", {config.context_len, d}, 0.02);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    add(layer_name(l, "attn_norm"), {d}, -1.0);
    add(layer_name(l, "attn.wq"), {d, d}, 0.02);
    add(layer_name(l, "attn.wk"), {d, d}, 0.02);
    add(layer_name(l, "attn.wv"), {d, d}, 0.02);
    add(layer_name(l, "attn.wo"), {d, d}, resid_scale);
    add(layer_name(l, "ffn_norm"), {d}, -1.0);
    add(layer_name(l, "ffn.up"), {d, config.d_ffn}, 0.02);
    add(layer_name(l, "ffn.down"), {config.d_ffn, d}, resid_scale);
  }
  add("final_norm", {d}, -1.0);
  add("lm_head", {d, config.vocab_size}, 0.02);
  m.build_target();
  return m;
}

void ModelState::build_target() {
  target_.clear();
  for (std::size_t l = config_.band_lo; l <= config_.band_hi; ++l) target_.insert(down_proj_name(l));
}

std::vector<Tensor> ModelState::parameters() const {
  std::vector<Tensor> out;
  out.reserve(names_.size());
  for (const auto& n : names_) out.push_back(params_.at(n));
  return out;
}

std::vector<bool> ModelState::target_flags() const {
  std::vector<bool> out;
  for (const auto& n : names_) out.push_back(target_.count(n) > 0);
  return out;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

ModelState ModelState::clone() const {
  ModelState m;
  m.config_ = config_;
  m.names_ = names_;
  m.target_ = target_;
  for (const auto& [name, t] : params_) m.params_.emplace(name, t.clone(true));
  return m;
}

void ModelState::copy_values_from(const ModelState& other) {
  for (const auto& name : names_) {
    auto dst = params_.at(name).mutable_values();
    auto src = other.param(name).values();
    if (dst.size() != src.size()) throw ShapeError("copy_values_from: shape mismatch for " + name);
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void ModelState::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ModelState::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  TensorBundle b;
  b.tensors = params_;
  b.target = target_;
  b.extra = extra;
  b.extra["model_config"] = config_.to_json();
  b.extra["param_order"] = names_;
  save_bundle(dir, b);
}

ModelState ModelState::load(const std::filesystem::path& dir, nlohmann::json* extra) {
  auto b = load_bundle(dir, true);
  ModelState m;
  m.config_ = ModelConfig::from_json(b.extra.at("model_config"));
  m.config_.validate();
  m.names_ = b.extra.at("param_order").get<std::vector<std::string>>();
  m.params_ = std::move(b.tensors);
  m.build_target();
  if (m.target_ != b.target) throw io::IoError("checkpoint target mask disagrees with model band");
  if (extra) *extra = b.extra;
  return m;
}

Tensor forward(const ModelState& model, std::span<const TokenId> tokens, std::span<const int> segments) {
  const auto& cfg = model.config();
  const std::size_t T = tokens.size();
  if (T == 0) throw ShapeError("forward: empty token sequence");
  if (!segments.empty() && segments.size() != T) throw ShapeError("forward: segments length mismatch");

  std::vector<TokenId> positions(T);
  for (std::size_t t = 0; t < T; ++t) {
    const bool restart = t == 0 || (!segments.empty() && segments[t] != segments[t - 1]);
    positions[t] = restart ? 0 : positions[t - 1] + 1;
    if (static_cast<std::size_t>(positions[t]) >= cfg.context_len) {
      throw ContextOverflow("sequence of length > " + std::to_string(cfg.context_len) + " exceeds the context");
    }
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= cfg.vocab_size) {
      throw ShapeError("forward: token id " + std::to_string(tokens[t]) + " out of vocabulary");
    }
  }

  std::vector<double> mask(T * T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      const bool cross = !segments.empty() && segments[i] != segments[j];
      if (j > i || cross) mask[i * T + j] = kMaskValue;
    }
  }
  const Tensor mask_t = Tensor::from({T, T}, std::move(mask));

  Tensor x = ops::add(ops::embedding(model.param("tok_emb"), tokens), ops::embedding(model.param("pos_emb"), positions));
  const std::size_t dh = cfg.d_model / cfg.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Tensor h = ops::rms_norm(x, model.param(layer_name(l, "attn_norm")));
    Tensor q = ops::matmul(h, model.param(layer_name(l, "attn.wq")));
    Tensor k = ops::matmul(h, model.param(layer_name(l, "attn.wk")));
    Tensor v = ops::matmul(h, model.param(layer_name(l, "attn.wv")));
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      Tensor qh = ops::slice(q, 1, hd * dh, (hd + 1) * dh);
      Tensor kh = ops::slice(k, 1, hd * dh, (hd + 1) * dh);
      Tensor vh = ops::slice(v, 1, hd * dh, (hd + 1) * dh);
      Tensor scores = ops::add(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt), mask_t);
      heads.push_back(ops::matmul(ops::softmax(scores, -1), vh));
    }
    Tensor attn = heads.size() == 1 ? heads.front() : ops::concat(heads, 1);
    x = ops::add(x, ops::matmul(attn, model.param(layer_name(l, "attn.wo"))));
    Tensor f = ops::rms_norm(x, model.param(layer_name(l, "ffn_norm")));
    f = ops::silu(ops::matmul(f, model.param(layer_name(l, "ffn.up"))));
    x = ops::add(x, ops::matmul(f, model.param(layer_name(l, "ffn.down"))));
  }
  x = ops::rms_norm(x, model.param("final_norm"));
  return ops::matmul(x, model.param("lm_head"));
}

Tensor token_logprobs(const ModelState& model, std::span<const TokenId> tokens, std::size_t begin, std::size_t end) {
  if (begin >= end) throw std::invalid_argument("token_logprobs: empty span");
  if (begin == 0 || end > tokens.size()) throw std::invalid_argument("token_logprobs: span out of range");
  // Position t-1 predicts token t.
  Tensor logits = forward(model, tokens.subspan(0, end - 1));
  Tensor lp = ops::log_softmax(ops::slice(logits, 0, begin - 1, end - 1), -1);
  return ops::pick(lp, tokens.subspan(begin, end - begin));
}

std::vector<Tensor> token_logprobs_packed(const ModelState& model, const std::vector<SequenceSpan>& seqs) {
  Tokens joint;
  std::vector<int> segments;
  std::vector<std::int64_t> rows;
  std::vector<TokenId> targets;
  std::vector<std::size_t> offsets;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const auto& sq = seqs[s];
    if (sq.begin >= sq.end || sq.begin == 0 || sq.end > sq.tokens.size()) {
      throw std::invalid_argument("token_logprobs_packed: bad span");
    }
    const std::size_t base = joint.size();
    joint.insert(joint.end(), sq.tokens.begin(), sq.tokens.begin() + static_cast<long>(sq.end - 1));
    segments.insert(segments.end(), sq.end - 1, static_cast<int>(s));
    offsets.push_back(targets.size());
    for (std::size_t t = sq.begin; t < sq.end; ++t) {
      rows.push_back(static_cast<std::int64_t>(base + t - 1));
      targets.push_back(sq.tokens[t]);
    }
  }
  offsets.push_back(targets.size());
  Tensor logits = forward(model, joint, segments);
  // Gather the predicting rows, then score the targets.
  std::vector<Tensor> row_parts;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i + 1;
    while (j < rows.size() && rows[j] == rows[j - 1] + 1) ++j;
    row_parts.push_back(ops::slice(logits, 0, static_cast<std::size_t>(rows[i]), static_cast<std::size_t>(rows[j - 1]) + 1));
    i = j;
  }
  Tensor picked_logits = row_parts.size() == 1 ? row_parts.front() : ops::concat(row_parts, 0);
  Tensor lp = ops::pick(ops::log_softmax(picked_logits, -1), targets);
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < seqs.size(); ++s) out.push_back(ops::slice(lp, 0, offsets[s], offsets[s + 1]));
  return out;
}

std::vector<std::vector<std::size_t>> pack_indices(const std::vector<std::size_t>& lengths, std::size_t budget) {
  std::vector<std::vector<std::size_t>> packs;
  std::vector<std::size_t> cur;
  std::size_t used = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (!cur.empty() && used + lengths[i] > budget) {
      packs.push_back(std::move(cur));
      cur.clear();
      used = 0;
    }
    cur.push_back(i);
    used += lengths[i];
  }
  if (!cur.empty()) packs.push_back(std::move(cur));
  return packs;
}

}  // namespace etcon::lm
