#ifndef APRUNE_TENSOR_HPP_
#define APRUNE_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace aprune {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One vertex of the computation graph. Ops allocate a Node per output,
// capture their parents in backward_fn, and accumulate into parent grads
// when the sweep reaches them.
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;  // leaf flag, set on parameters
  bool needs_grad = false;     // propagated: some ancestor is a leaf with requires_grad
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return shape_numel(shape); }
  void ensure_grad();
};

// Value-semantics handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<float> values,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[i]; }
  int64_t numel() const { return node_->numel(); }

  std::vector<float>& data() { return node_->data; }
  const std::vector<float>& data() const { return node_->data; }

  // Allocates (zeroed) on first access.
  std::vector<float>& grad();
  bool has_grad() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v);
  void zero_grad();

  float item() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Parameter {
  Tensor tensor;
  std::string name;

  Parameter() = default;
  Parameter(Tensor t, std::string n) : tensor(std::move(t)), name(std::move(n)) {
    tensor.set_requires_grad(true);
  }
};

// Reverse-mode sweep from a scalar loss. Accumulates dLoss/d(leaf) into every
// requires_grad leaf reachable from the loss. Grads of interior nodes are
// reset at the start of each sweep, so a retained graph can be swept again
// after the caller zeroes the leaf grads.
void backward(const Tensor& loss);

// While alive, ops skip graph capture: outputs carry no parents or
// backward_fn. Use for evaluation passes so activations are freed eagerly.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

}  // namespace aprune

#endif  // APRUNE_TENSOR_HPP_
