#pragma once

#include <functional>
#include <string>
#include <vector>

#include "etcon/tensor.hpp"

namespace etcon {

struct LeafCheck {
  std::size_t leaf_index = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Compares reverse-mode grads against central differences. `build` must
// rebuild the same scalar loss from the current leaf values every call.
// Relative error is |analytic - numeric| / (|numeric| + 1e-12).
GradCheckReport finite_difference_check(const std::function<Tensor()>& build, std::vector<Tensor> leaves,
                                        double tolerance = 1e-4, double h = 1e-5);

}  // namespace etcon
