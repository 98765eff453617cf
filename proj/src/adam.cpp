#include "deanet/adam.hpp"

#include <cmath>
#include <string>

#include "deanet/error.hpp"

namespace deanet {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), T(0));
      state.second_moment.emplace_back(p.numel(), T(0));
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw Error("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                " parameters but " + std::to_string(params.size()) + " were given");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].has_grad()) throw Error("adam_step: parameter " + std::to_string(k) + " has no grad");
    if (state.first_moment[k].size() != params[k].numel() || state.second_moment[k].size() != params[k].numel()) {
      throw ShapeError("adam_step: moment buffer size mismatch for parameter " + std::to_string(k));
    }
  }

  state.step_count += 1;
  const T t = static_cast<T>(state.step_count);
  const T correction1 = T(1) - std::pow(state.beta1, t);
  const T correction2 = T(1) - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    const auto grad = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T g = grad[i];
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g * g;
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      data[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace deanet
