#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "batrul/nn/tensor.hpp"

namespace batrul::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

template <std::floating_point T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Zero moments shaped like the parameters of `model`.
template <class Model>
AdamState<typename Model::scalar_type> make_adam_state(const Model& model, const AdamConfig& config = {}) {
  AdamState<typename Model::scalar_type> s;
  s.config = config;
  model.visit([&s](const auto& t) {
    s.m.emplace_back(t.shape());
    s.v.emplace_back(t.shape());
  });
  return s;
}

/// One bias-corrected Adam update of `params` in place.
template <class Model>
void adam_step(AdamState<typename Model::scalar_type>& state, Model& params, const Model& grads) {
  using T = typename Model::scalar_type;
  auto p = parameter_tensors(params);
  std::vector<const Tensor<T>*> g;
  grads.visit([&g](const Tensor<T>& t) { g.push_back(&t); });
  if (p.size() != g.size() || p.size() != state.m.size()) {
    throw Error(Errc::ShapeMismatch, "parameter, gradient and moment structures differ");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k]->require_same_shape(*g[k]);
    p[k]->require_same_shape(state.m[k]);
  }

  ++state.step;
  const auto& c = state.config;
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T correct1 = static_cast<T>(1.0 - std::pow(c.beta1, static_cast<double>(state.step)));
  const T correct2 = static_cast<T>(1.0 - std::pow(c.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(c.lr);
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t k = 0; k < p.size(); ++k) {
    T* w = p[k]->data();
    const T* gk = g[k]->data();
    T* m = state.m[k].data();
    T* v = state.v[k].data();
    for (std::size_t i = 0; i < p[k]->size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * gk[i];
      v[i] = b2 * v[i] + (T(1) - b2) * gk[i] * gk[i];
      const T m_hat = m[i] / correct1;
      const T v_hat = v[i] / correct2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <class Model>
double clip_grad_norm(Model& grads, double max_norm) {
  double sq = 0.0;
  grads.visit([&sq](const auto& t) {
    for (const auto v : t.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<typename Model::scalar_type>(max_norm / norm);
    grads.visit([scale](auto& t) { t *= scale; });
  }
  return norm;
}

}  // namespace batrul::nn
