#pragma once

#include "batrul/nn/tensor.hpp"

namespace batrul::nn {

/// Mean of squared differences over all elements.
template <std::floating_point T>
T mse_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
  prediction.require_same_shape(target);
  if (prediction.empty()) return T(0);
  T sum = T(0);
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const T d = prediction[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<T>(prediction.size());
}

template <std::floating_point T>
Tensor<T> mse_grad(const Tensor<T>& prediction, const Tensor<T>& target) {
  prediction.require_same_shape(target);
  Tensor<T> g(prediction.shape());
  const T scale = T(2) / static_cast<T>(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) g[i] = scale * (prediction[i] - target[i]);
  return g;
}

}  // namespace batrul::nn
