#pragma once

#include <vector>

#include "trg/tensor.hpp"

namespace trg {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
};

// SGD with (Nesterov) momentum and L2 weight decay, in the common form
//   d = g + wd * p;  v = mu * v + d;  p -= lr * (nesterov ? d + mu * v : v).
// A parameter the last backward() did not reach is stepped with g = 0.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, SgdConfig config);

  void step(double lr);
  void zero_grad();

  const SgdConfig& config() const { return config_; }
  std::vector<Tensor>& params() { return params_; }
  std::vector<std::vector<double>>& momentum_buffers() { return buffers_; }
  const std::vector<std::vector<double>>& momentum_buffers() const { return buffers_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> buffers_;
  SgdConfig config_;
};

}  // namespace trg
