#include "etcon/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace etcon::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

using detail::Node;

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Splits shape around `axis` into (outer, len, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, "axis out of range for shape " + shape_str(shape));
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (int i = axis + 1; i < r; ++i) s.inner *= shape[i];
  return s;
}

// Number of times `b` repeats over `a` under suffix broadcasting.
std::size_t broadcast_period(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (b.numel() == 1) return 1;
  bool suffix = sb.size() <= sa.size() &&
                std::equal(sb.begin(), sb.end(), sa.end() - static_cast<long>(sb.size()));
  require(suffix, std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
  return b.numel();
}

template <class Fwd, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, DA da, DB db) {
  const std::size_t period = broadcast_period(a, b, op);
  const std::size_t n = a.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % period]);
  return Tensor::make_result(a.shape(), std::move(out), op, {a, b}, [period, da, db](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const std::size_t n = self.values.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad[i];
      const double x = pa.values[i];
      const double y = pb.values[i % period];
      if (pa.requires_grad) pa.grad[i] += g * da(x, y);
      if (pb.requires_grad) pb.grad[i % period] += g * db(x, y);
    }
  });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return Tensor::make_result(a.shape(), std::move(out), op, {a}, [deriv](Node& self) {
    Node& pa = parent(self, 0);
    for (std::size_t i = 0; i < self.values.size(); ++i) {
      pa.grad[i] += self.grad[i] * deriv(pa.values[i], self.values[i]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() = CMapMat(a.values().data(), m, k) * CMapMat(b.values().data(), k, n);
  return Tensor::make_result({a.dim(0), b.dim(1)}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    CMapMat g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MapMat(pa.grad.data(), m, k).noalias() += g * CMapMat(pb.values.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.grad.data(), k, n).noalias() += CMapMat(pa.values.data(), m, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

// Ties route the whole gradient to `a`.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NonFiniteError("log of non-positive value");
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Tensor clip(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clip: lo > hi");
  return unary(
      a, "clip", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, av[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(av[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= z;
    }
  }
  return Tensor::make_result(a.shape(), std::move(out), "softmax", {a}, [s](Node& self) {
    Node& pa = parent(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          dot += self.grad[idx] * self.values[idx];
        }
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          pa.grad[idx] += self.values[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, av[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) z += std::exp(av[base + j * s.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = av[base + j * s.inner] - lz;
    }
  }
  return Tensor::make_result(a.shape(), std::move(out), "log_softmax", {a}, [s](Node& self) {
    Node& pa = parent(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double gsum = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) gsum += self.grad[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          pa.grad[idx] += self.grad[idx] - std::exp(self.values[idx]) * gsum;
        }
      }
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids) {
  require(table.rank() == 2, "embedding: table must be 2-D");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < vocab,
            "embedding: id " + std::to_string(idx[i]) + " out of range");
    std::copy_n(tv.begin() + static_cast<long>(static_cast<std::size_t>(idx[i]) * d), d,
                out.begin() + static_cast<long>(i * d));
  }
  const std::size_t rows = idx.size();
  return Tensor::make_result({rows, d}, std::move(out), "embedding", {table},
                             [idx = std::move(idx), d](Node& self) {
                               Node& pt = parent(self, 0);
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 const std::size_t row = static_cast<std::size_t>(idx[i]) * d;
                                 for (std::size_t j = 0; j < d; ++j) pt.grad[row + j] += self.grad[i * d + j];
                               }
                             });
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
  require(x.rank() == 2 && weight.rank() == 1 && weight.dim(0) == x.dim(1),
          "rms_norm: shapes " + shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  auto xv = x.values();
  auto wv = weight.values();
  std::vector<double> out(n * d);
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += xv[i * d + j] * xv[i * d + j];
    inv[i] = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] * inv[i] * wv[j];
  }
  return Tensor::make_result(x.shape(), std::move(out), "rms_norm", {x, weight},
                             [n, d, inv = std::move(inv)](Node& self) {
                               Node& px = parent(self, 0);
                               Node& pw = parent(self, 1);
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double r = inv[i];
                                 double dot = 0.0;  // sum_j g_j w_j x_j
                                 for (std::size_t j = 0; j < d; ++j) {
                                   dot += self.grad[i * d + j] * pw.values[j] * px.values[i * d + j];
                                 }
                                 for (std::size_t j = 0; j < d; ++j) {
                                   const double g = self.grad[i * d + j];
                                   const double xj = px.values[i * d + j];
                                   if (px.requires_grad) {
                                     px.grad[i * d + j] +=
                                         r * g * pw.values[j] - r * r * r * xj * dot / static_cast<double>(d);
                                   }
                                   if (pw.requires_grad) pw.grad[j] += g * xj * r;
                                 }
                               }
                             });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: tensor must be 2-D");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  }
  return Tensor::make_result({n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
    Node& pa = parent(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) pa.grad[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel_of(shape) == a.numel(),
          "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), "reshape", {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  const int r = static_cast<int>(first.size());
  const int ax = axis < 0 ? axis + r : axis;
  require(ax >= 0 && ax < r, "concat: axis out of range");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != ax) require(p.dim(i) == first[i], "concat: shape mismatch " + shape_str(p.shape()));
    }
    out_shape[ax] += p.dim(ax);
  }
  const auto s = split_axis(out_shape, ax);
  std::vector<double> out(numel_of(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t plen = p.dim(ax);
    auto pv = p.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<long>(o * plen * s.inner), plen * s.inner,
                  out.begin() + static_cast<long>((o * s.len + off) * s.inner));
    }
    off += plen;
  }
  return Tensor::make_result(out_shape, std::move(out), "concat", parts,
                             [s, offsets = std::move(offsets), ax](Node& self) {
                               for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                 Node& p = *self.parents[k];
                                 if (!p.requires_grad) continue;
                                 const std::size_t plen = p.shape[ax];
                                 for (std::size_t o = 0; o < s.outer; ++o) {
                                   const std::size_t src = (o * s.len + offsets[k]) * s.inner;
                                   const std::size_t dst = o * plen * s.inner;
                                   for (std::size_t i = 0; i < plen * s.inner; ++i) p.grad[dst + i] += self.grad[src + i];
                                 }
                               }
                             });
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const auto s = split_axis(a.shape(), axis);
  require(begin <= end && end <= s.len, "slice: range out of bounds");
  const int ax = axis < 0 ? axis + static_cast<int>(a.rank()) : axis;
  Shape out_shape = a.shape();
  out_shape[ax] = end - begin;
  const std::size_t w = (end - begin) * s.inner;
  auto av = a.values();
  std::vector<double> out(s.outer * w);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(av.begin() + static_cast<long>((o * s.len + begin) * s.inner), w,
                out.begin() + static_cast<long>(o * w));
  }
  return Tensor::make_result(out_shape, std::move(out), "slice", {a}, [s, begin, w](Node& self) {
    Node& pa = parent(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      const std::size_t dst = (o * s.len + begin) * s.inner;
      for (std::size_t i = 0; i < w; ++i) pa.grad[dst + i] += self.grad[o * w + i];
    }
  });
}

Tensor pick(const Tensor& x, std::span<const std::int64_t> ids) {
  require(x.rank() == 2 && ids.size() == x.dim(0), "pick: need [n,V] and n ids");
  const std::size_t v = x.dim(1);
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < v, "pick: id out of range");
    out[i] = x.values()[i * v + static_cast<std::size_t>(idx[i])];
  }
  const std::size_t rows = idx.size();
  return Tensor::make_result({rows}, std::move(out), "pick", {x}, [idx = std::move(idx), v](Node& self) {
    Node& px = parent(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) px.grad[i * v + static_cast<std::size_t>(idx[i])] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::make_result({}, {total}, "sum", {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    for (auto& g : pa.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require(a.numel() > 0, "mean: empty tensor");
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::make_result({}, {total / n}, "mean", {a}, [n](Node& self) {
    Node& pa = parent(self, 0);
    for (auto& g : pa.grad) g += self.grad[0] / n;
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, std::int64_t ignore_index) {
  require(logits.rank() == 2 && targets.size() == logits.dim(0),
          "cross_entropy: need [n,V] logits and n targets");
  const std::size_t n = logits.dim(0);
  const std::size_t v = logits.dim(1);
  auto lv = logits.values();
  std::vector<double> probs(n * v, 0.0);
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tgt[i] == ignore_index) continue;
    require(tgt[i] >= 0 && static_cast<std::size_t>(tgt[i]) < v, "cross_entropy: target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, lv[i * v + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(lv[i * v + j] - mx);
      z += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total -= lv[i * v + static_cast<std::size_t>(tgt[i])] - mx - std::log(z);
    ++count;
  }
  require(count > 0, "cross_entropy: every target ignored");
  const double denom = static_cast<double>(count);
  return Tensor::make_result({}, {total / denom}, "cross_entropy", {logits},
                             [probs = std::move(probs), tgt = std::move(tgt), n, v, denom,
                              ignore_index](Node& self) {
                               Node& pl = parent(self, 0);
                               const double g = self.grad[0] / denom;
                               for (std::size_t i = 0; i < n; ++i) {
                                 if (tgt[i] == ignore_index) continue;
                                 for (std::size_t j = 0; j < v; ++j) pl.grad[i * v + j] += g * probs[i * v + j];
                                 pl.grad[i * v + static_cast<std::size_t>(tgt[i])] -= g;
                               }
                             });
}

}  // namespace etcon::ops
