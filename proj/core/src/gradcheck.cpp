#include "trg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "trg/errors.hpp"

namespace trg {

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double h) {
  for (auto& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }
  return grad_check_against(f, std::move(params), analytic, h);
}

GradCheckResult grad_check_against(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                   const std::vector<std::vector<double>>& analytic, double h) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step h must be positive");
  if (analytic.size() != params.size()) throw UsageError("grad_check: one gradient per parameter");
  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double ad = analytic[p][i];
      const double err = std::abs(numeric - ad) / std::max(1e-8, std::abs(numeric) + std::abs(ad));
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_param = p;
        result.worst_index = i;
        result.worst_autodiff = ad;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace trg
