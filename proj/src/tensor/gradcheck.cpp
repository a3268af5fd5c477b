#include "etcon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace etcon {

GradCheckReport finite_difference_check(const std::function<Tensor()>& build, std::vector<Tensor> leaves,
                                        double tolerance, double h) {
  for (auto& leaf : leaves) leaf.zero_grad();
  build().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    if (leaf.has_grad()) {
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    } else {
      analytic.emplace_back(leaf.numel(), 0.0);
    }
  }

  GradCheckReport report;
  report.passed = true;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    LeafCheck check;
    check.leaf_index = li;
    auto values = leaves[li].mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      double up = 0.0;
      double down = 0.0;
      {
        NoGradGuard guard;
        values[j] = saved + h;
        up = build().item();
        values[j] = saved - h;
        down = build().item();
      }
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(analytic[li][j] - numeric);
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_rel_error = std::max(check.max_rel_error, abs_err / (std::abs(numeric) + 1e-12));
    }
    check.passed = check.max_rel_error < tolerance;
    report.passed = report.passed && check.passed;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.leaves.push_back(check);
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return report;
}

}  // namespace etcon
