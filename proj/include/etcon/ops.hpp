#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "etcon/tensor.hpp"

// Differentiable primitives. Every op checks shapes and rejects non-finite
// outputs; the graph edge is recorded only when an input requires grad.
namespace etcon::ops {

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with broadcasting of `b` when its shape is a suffix of a's
// shape (bias rows) or a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);
// Derivative is 1 on [lo, hi] and exactly 0 outside.
Tensor clip(const Tensor& a, double lo, double hi);

Tensor softmax(const Tensor& a, int axis = -1);
Tensor log_softmax(const Tensor& a, int axis = -1);

// table [V,d], ids -> [len(ids), d]
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids);
// x [n,d], weight [d]
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps = 1e-6);

Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
// x [n,V] -> [n]: x[i, ids[i]]
Tensor pick(const Tensor& x, std::span<const std::int64_t> ids);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Mean token cross-entropy of logits [n,V] against targets; targets equal
// to ignore_index are skipped.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     std::int64_t ignore_index = -1);

}  // namespace etcon::ops
