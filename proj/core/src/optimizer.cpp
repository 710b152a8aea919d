#include "trg/optimizer.hpp"

#include <cmath>

#include "trg/errors.hpp"

namespace trg {

Sgd::Sgd(std::vector<Tensor> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  if (config_.momentum < 0.0 || config_.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (config_.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  buffers_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.is_leaf()) throw UsageError("optimizer parameters must be leaves");
    buffers_.emplace_back(p.size(), 0.0);
  }
}

void Sgd::step(double lr) {
  const double mu = config_.momentum, wd = config_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto values = p.mutable_data();
    const auto grad = p.grad();
    auto& v = buffers_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in optimizer step");
      const double d = g + wd * values[i];
      v[i] = mu * v[i] + d;
      values[i] -= lr * (config_.nesterov ? d + mu * v[i] : v[i]);
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace trg
