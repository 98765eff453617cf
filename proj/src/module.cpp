#include "deanet/module.hpp"

#include <cmath>

namespace deanet {

template <typename T>
std::vector<Tensor<T>> Module<T>::parameters() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::size_t Module<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void Module<T>::set_trainable(bool trainable) {
  for (auto& p : params_) p.tensor.set_requires_grad(trainable);
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Conv2dLayer<T> Module<T>::make_conv(const std::string& name, int in_channels, int out_channels, int kernel,
                                    int stride, std::mt19937_64& rng) {
  const int fan_in = in_channels * kernel * kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  std::vector<T> w(static_cast<std::size_t>(out_channels) * fan_in);
  for (T& v : w) v = static_cast<T>(dist(rng));
  Conv2dLayer<T> layer;
  layer.weight = Tensor<T>(Shape{out_channels, in_channels, kernel, kernel}, std::move(w), true);
  layer.bias = Tensor<T>(Shape{out_channels}, T(0), true);
  layer.stride = stride;
  layer.padding = kernel / 2;
  params_.push_back({name + ".weight", layer.weight});
  params_.push_back({name + ".bias", layer.bias});
  return layer;
}

template class Module<float>;
template class Module<double>;

}  // namespace deanet
