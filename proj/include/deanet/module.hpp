#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deanet/ops.hpp"
#include "deanet/tensor.hpp"

namespace deanet {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
};

/// Owner of a flat, ordered list of named parameters. Order is the
/// registration order, which fixes checkpoint layout and optimizer state.
template <typename T>
class Module {
 public:
  const std::vector<NamedTensor<T>>& named_parameters() const { return params_; }
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;
  void set_trainable(bool trainable);
  void zero_grad();

 protected:
  // He-normal weights drawn from `rng`, zero bias, padding k/2.
  Conv2dLayer<T> make_conv(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
                           std::mt19937_64& rng);
  // Registers a parameter owned by a sub-module (shared handle).
  void adopt(const NamedTensor<T>& param) { params_.push_back(param); }

 private:
  std::vector<NamedTensor<T>> params_;
};

extern template class Module<float>;
extern template class Module<double>;

}  // namespace deanet
