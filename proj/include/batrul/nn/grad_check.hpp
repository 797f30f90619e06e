#pragma once

// Central finite-difference verification of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "batrul/nn/tensor.hpp"

namespace batrul::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;  // flat index over the visiting order
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is ~0 from amplifying rounding noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `loss(model)` returns the scalar loss, `grad(model)` the analytic gradient
/// as a model-shaped container. Models above `max_params` parameters are
/// checked on a seeded random subsample.
template <class Model, class LossFn, class GradFn>
GradCheckResult grad_check(Model& model, LossFn&& loss, GradFn&& grad, double eps = 1e-5,
                           std::size_t max_params = 10000, std::uint64_t seed = 0) {
  using T = typename Model::scalar_type;
  GradCheckResult result;
  const Model analytic = grad(model);
  std::vector<T> flat_grad;
  analytic.visit([&flat_grad](const Tensor<T>& t) { flat_grad.insert(flat_grad.end(), t.values().begin(), t.values().end()); });

  std::vector<T*> slots;
  model.visit([&slots](Tensor<T>& t) {
    for (auto& v : t.values()) slots.push_back(&v);
  });
  if (slots.size() != flat_grad.size()) throw Error(Errc::ShapeMismatch, "gradient structure differs from model");
  if (slots.empty()) return result;

  std::vector<std::size_t> indices(slots.size());
  std::iota(indices.begin(), indices.end(), 0);
  if (indices.size() > max_params) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < max_params; ++i) {
      std::swap(indices[i], indices[i + rng() % (indices.size() - i)]);
    }
    indices.resize(max_params);
    std::sort(indices.begin(), indices.end());
  }

  for (const std::size_t idx : indices) {
    T& w = *slots[idx];
    const T saved = w;
    w = saved + static_cast<T>(eps);
    const double plus = static_cast<double>(loss(model));
    w = saved - static_cast<T>(eps);
    const double minus = static_cast<double>(loss(model));
    w = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = relative_error(static_cast<double>(flat_grad[idx]), numeric);
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = idx;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace batrul::nn
