#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trg/tensor.hpp"

namespace trg {

enum class Arch { mlp, tinyconv };

// Architecture description. Text form (also used in config files):
//   mlp:patch=2:widths=4,64,32
//   tinyconv:channels=4,8:strides=1,2
// `mlp` runs a shared per-token MLP over non-overlapping patches; widths[0]
// is the patch width P^2 C. `tinyconv` stacks 3x3 zero-padded convolutions.
// Both end in a linear head over the flattened penultimate map.
struct NetSpec {
  Arch arch = Arch::mlp;
  std::size_t patch = 2;
  std::vector<std::size_t> widths{4, 64, 32};
  std::vector<std::size_t> conv_channels;
  std::vector<std::size_t> conv_strides;

  std::string str() const;
  static NetSpec parse(const std::string& text);

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

struct InputShape {
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t num_classes = 10;
};

struct ForwardResult {
  Tensor features;  // penultimate activations, [B x C_l x H_l x W_l]
  Tensor logits;    // [B x K]
};

class ToyNet {
 public:
  ToyNet(NetSpec spec, InputShape input, std::uint64_t seed);

  ForwardResult forward(const Tensor& images) const;

  const NetSpec& spec() const { return spec_; }
  const InputShape& input() const { return input_; }
  // [C_l, H_l, W_l] of the feature hook.
  Shape feature_shape() const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;

  // Turns off gradient tracking on every parameter.
  void freeze();
  bool frozen() const;

  // Copies parameter values from a net of identical layout.
  void load_values(const ToyNet& other);

 private:
  Tensor forward_mlp(const Tensor& images, std::size_t batch) const;
  Tensor forward_conv(const Tensor& images, std::size_t batch) const;
  void add_linear(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                  std::uint64_t& stream);

  NetSpec spec_;
  InputShape input_;
  std::uint64_t seed_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  Shape feature_shape_;
};

// Checks the student is strictly smaller than the teacher; ConfigError otherwise.
void require_smaller(const ToyNet& student, const ToyNet& teacher);

}  // namespace trg
