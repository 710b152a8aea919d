#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace trg {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the define-by-run graph. Leaves have no inputs; every other
// node carries a closure that pushes its own gradient into its inputs.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily sized on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 array. Copies share the underlying node, so a
// Tensor behaves like a handle; values are never mutated by ops, only by
// optimizers writing to leaf parameters.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Direct write access, only legal on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  const char* op_name() const;

  bool has_grad() const;
  // Gradient of the most recent backward() w.r.t. this leaf; empty if none.
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Same values, cut from the graph.
  Tensor detach() const;
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  // Used by ops to create non-leaf results.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> value,
                        std::vector<Tensor> inputs,
                        std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the primitive applications reachable from a loss.
// Built at backward time by depth-first topological sort, so every node
// appears after all of its inputs.
class GradientTape {
 public:
  static GradientTape record(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

  // Seeds d(loss)/d(loss) = 1 and runs every closure once in reverse order.
  // Intermediate gradients and graph edges are released afterwards.
  void run(const Tensor& loss);

 private:
  std::vector<detail::Node*> order_;
  std::vector<std::shared_ptr<detail::Node>> keep_alive_;
};

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// loss. Throws UsageError unless loss is a one-element tensor on the tape.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables recording for its lifetime (teacher forward passes, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace trg
