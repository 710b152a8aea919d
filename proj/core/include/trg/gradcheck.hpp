#pragma once

#include <functional>
#include <string>
#include <vector>

#include "trg/tensor.hpp"

namespace trg {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate, for reports.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_autodiff = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of `f` against central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of every param.
// The per-coordinate error is |g_fd - g_ad| / max(1e-8, |g_fd| + |g_ad|).
// `f` must be deterministic and rebuild its graph on each call.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double h = 1e-5);

// Overload for tests that want to inject a corrupted analytic gradient.
GradCheckResult grad_check_against(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                   const std::vector<std::vector<double>>& analytic, double h = 1e-5);

}  // namespace trg
