#include "deanet/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "deanet/error.hpp"

namespace deanet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<detail::Node<T>>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) : node_(std::make_shared<detail::Node<T>>()) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
  }
  node_->data = std::move(data);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape()));
  return node_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw Error("set_requires_grad on a non-leaf tensor (" + std::string(op_name()) + ")");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(shape()));
  if (!requires_grad()) throw Error("backward: loss does not depend on any tensor that requires grad");

  // Iterative post-order DFS over grad-requiring nodes gives a topological
  // order with each node visited once.
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order)
    if (node->backward) node->grad.assign(node->data.size(), T(0));
  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace deanet
