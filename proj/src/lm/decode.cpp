#include "etcon/lm/decode.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace etcon::lm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapMat = Eigen::Map<const RowMat>;
using Vec = Eigen::VectorXd;
using CMapVec = Eigen::Map<const Vec>;

CMapMat mat(const ModelState& m, const std::string& name) {
  const auto& t = m.param(name);
  return CMapMat(t.values().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

CMapVec vec(const ModelState& m, const std::string& name) {
  const auto& t = m.param(name);
  return CMapVec(t.values().data(), static_cast<Eigen::Index>(t.numel()));
}

Vec rms(const Vec& x, const CMapVec& w) {
  const double ms = x.squaredNorm() / static_cast<double>(x.size());
  return x.cwiseProduct(w) * (1.0 / std::sqrt(ms + 1e-6));
}

std::string ln(std::size_t l, const char* s) { return "layers." + std::to_string(l) + "." + s; }

}  // namespace

void DecodeParams::validate() const {
  if (temperature < 0.0) throw std::invalid_argument("decode: temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("decode: top_p must lie in (0, 1]");
  if (max_new_tokens == 0) throw std::invalid_argument("decode: max_new_tokens must be positive");
}

nlohmann::json DecodeParams::to_json() const {
  return {{"temperature", temperature}, {"top_p", top_p}, {"max_new_tokens", max_new_tokens}, {"seed", seed}};
}

DecodeParams DecodeParams::from_json(const nlohmann::json& j, const DecodeParams& defaults) {
  DecodeParams d = defaults;
  d.temperature = j.value("temperature", d.temperature);
  d.top_p = j.value("top_p", d.top_p);
  d.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  d.seed = j.value("seed", d.seed);
  d.validate();
  return d;
}

KvDecoder::KvDecoder(const ModelState& model) : model_(model) {
  const auto& cfg = model.config();
  keys_.assign(cfg.n_layers, std::vector<double>(cfg.context_len * cfg.d_model, 0.0));
  vals_.assign(cfg.n_layers, std::vector<double>(cfg.context_len * cfg.d_model, 0.0));
}

const std::vector<double>& KvDecoder::step(TokenId token) {
  const auto& cfg = model_.config();
  if (length_ >= cfg.context_len) throw ContextOverflow("decoder context is full");
  if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size) throw ShapeError("decoder: token out of range");
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const std::size_t dh = cfg.d_model / cfg.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t pos = length_;

  Vec x = mat(model_, "tok_emb").row(token).transpose() +
          mat(model_, "pos_emb").row(static_cast<Eigen::Index>(pos)).transpose();
  std::vector<double> scores(pos + 1);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Vec h = rms(x, vec(model_, ln(l, "attn_norm")));
    Vec q = mat(model_, ln(l, "attn.wq")).transpose() * h;
    Vec k = mat(model_, ln(l, "attn.wk")).transpose() * h;
    Vec v = mat(model_, ln(l, "attn.wv")).transpose() * h;
    std::copy(k.data(), k.data() + d, keys_[l].begin() + static_cast<long>(pos * cfg.d_model));
    std::copy(v.data(), v.data() + d, vals_[l].begin() + static_cast<long>(pos * cfg.d_model));
    Vec attn = Vec::Zero(d);
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      const std::size_t off = hd * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= pos; ++j) {
        const double* kj = keys_[l].data() + j * cfg.d_model + off;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[static_cast<Eigen::Index>(off + c)] * kj[c];
        scores[j] = s * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= pos; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (std::size_t j = 0; j <= pos; ++j) {
        const double w = scores[j] / z;
        const double* vj = vals_[l].data() + j * cfg.d_model + off;
        for (std::size_t c = 0; c < dh; ++c) attn[static_cast<Eigen::Index>(off + c)] += w * vj[c];
      }
    }
    x += mat(model_, ln(l, "attn.wo")).transpose() * attn;
    Vec f = rms(x, vec(model_, ln(l, "ffn_norm")));
    Vec u = mat(model_, ln(l, "ffn.up")).transpose() * f;
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = u[i] / (1.0 + std::exp(-u[i]));
    x += mat(model_, ln(l, "ffn.down")).transpose() * u;
  }
  Vec out = mat(model_, "lm_head").transpose() * rms(x, vec(model_, "final_norm"));
  logits_.assign(out.data(), out.data() + out.size());
  ++length_;
  return logits_;
}

std::vector<double> nucleus_distribution(std::span<const double> logits, double temperature, double top_p) {
  const std::size_t n = logits.size();
  std::vector<double> probs(n);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp((logits[i] - mx) / temperature);
    z += probs[i];
  }
  for (auto& p : probs) p /= z;
  if (top_p >= 1.0) return probs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<double> out(n, 0.0);
  double mass = 0.0;
  std::size_t kept = 0;
  while (kept < n) {
    mass += probs[order[kept]];
    ++kept;
    if (mass >= top_p - 1e-12) break;
  }
  for (std::size_t i = 0; i < kept; ++i) out[order[i]] = probs[order[i]] / mass;
  return out;
}

TokenId sample_token(std::span<const double> logits, const DecodeParams& dp, Rng& rng) {
  if (dp.greedy()) {
    return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  const auto dist = nucleus_distribution(logits, dp.temperature, dp.top_p);
  const double u = rng.uniform();
  double acc = 0.0;
  TokenId last = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    acc += dist[i];
    last = static_cast<TokenId>(i);
    if (u < acc) return last;
  }
  return last;
}

Generation generate(const ModelState& model, std::span<const TokenId> prompt, const DecodeParams& dp) {
  dp.validate();
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  const std::size_t ctx = model.config().context_len;
  if (prompt.size() > ctx) throw ContextOverflow("prompt does not fit in the context");
  KvDecoder dec(model);
  for (auto t : prompt) dec.step(t);
  Rng rng(dp.seed);
  Generation g;
  while (true) {
    if (g.tokens.size() >= dp.max_new_tokens) {
      g.truncated = true;
      break;
    }
    const TokenId next = sample_token(dec.logits(), dp, rng);
    g.tokens.push_back(next);
    if (next == dp.stop_token) break;
    if (dec.length() >= ctx) {
      g.truncated = true;
      break;
    }
    dec.step(next);
  }
  return g;
}

}  // namespace etcon::lm
