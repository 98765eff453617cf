#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deanet/tensor.hpp"

namespace deanet {

/// Adam moments and hyperparameters. Moment buffers are created on the first
/// step and are matched to parameters by position.
template <typename T>
struct AdamState {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  std::int64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

// One bias-corrected Adam update. Leaves grads untouched; the caller zeroes
// them. Throws if a parameter has no grad or the moment buffers do not match
// the parameter shapes.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

extern template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&);
extern template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace deanet
