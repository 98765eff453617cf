#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deanet {

// Extents in N, C, H, W order for 4-d tensors. Rank 0 is a scalar.
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on first use
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  T* grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

}  // namespace detail

/// Differentiable n-d array. Copies share the underlying node (handle
/// semantics); use clone() or detach() for an independent buffer.
///
/// Graphs are built dynamically: every op whose inputs require grad records
/// its parents and a backward closure on the result node.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor scalar(T value, bool requires_grad = false) { return Tensor(Shape{}, value, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return {node_->grad_buffer(), node_->data.size()}; }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return !node_->backward; }
  const char* op_name() const { return node_->op; }

  /// Backpropagates from this scalar. Leaf grads accumulate across calls;
  /// interior grads are recomputed from zero on each call.
  void backward() const;

  Tensor detach() const;  // fresh leaf with copied data, no grad
  Tensor clone() const { return detach(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) { return Tensor<T>(t.shape(), T(0)); }
template <typename T>
Tensor<T> ones_like(const Tensor<T>& t) { return Tensor<T>(t.shape(), T(1)); }

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace deanet
