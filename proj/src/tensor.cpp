#include "aprune/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "aprune/errors.hpp"

namespace aprune {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(static_cast<size_t>(numel()), 0.0f);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0f, requires_grad);
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> values,
                         bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape))
    throw ShapeError("from_data: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return Tensor(n);
}

std::vector<float>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  node_->needs_grad = node_->needs_grad || v;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) node_->grad.assign(node_->grad.size(), 0.0f);
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
  return node_->data[0];
}

namespace {

// Iterative post-order over parents; result holds each node once, parents
// before children.
void topo_order(const std::shared_ptr<Node>& root,
                std::vector<std::shared_ptr<Node>>& order) {
  std::unordered_set<const Node*> visited;
  struct Frame {
    std::shared_ptr<Node> node;
    size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  if (visited.insert(root.get()).second) stack.push_back({root});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      auto& p = f.node->parents[f.next_parent++];
      if (visited.insert(p.get()).second) stack.push_back({p});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

namespace {
int no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(loss.shape()));

  std::vector<std::shared_ptr<Node>> order;
  topo_order(loss.node(), order);

  // Interior grads are scratch for this sweep; leaf grads accumulate.
  for (auto& n : order) {
    if (n->backward_fn) {
      n->grad.assign(static_cast<size_t>(n->numel()), 0.0f);
    } else if (n->requires_grad) {
      n->ensure_grad();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward_fn && n.needs_grad) n.backward_fn(n);
  }
}

}  // namespace aprune
