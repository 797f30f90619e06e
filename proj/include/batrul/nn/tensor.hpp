#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "batrul/error.hpp"

namespace batrul::nn {

/// Dense row-major array with a runtime shape.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)), values_(product(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != product(shape_)) {
      throw Error(Errc::ShapeMismatch, "value count " + std::to_string(values_.size()) +
                                           " does not match shape " + shape_string());
    }
  }

  /// Like the value constructor, additionally rejecting NaN / Inf.
  static Tensor checked(std::vector<std::size_t> shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    if (!t.all_finite()) throw Error(Errc::NonFinite, "tensor contains NaN or Inf");
    return t;
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  /// Pointer to row r of a rank-2 tensor.
  T* row(std::size_t r) { return values_.data() + r * shape_[1]; }
  const T* row(std::size_t r) const { return values_.data() + r * shape_[1]; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }

  Tensor& operator*=(T s) {
    for (auto& v : values_) v *= s;
    return *this;
  }

  void require_same_shape(const Tensor& o) const {
    if (!same_shape(o)) {
      throw Error(Errc::ShapeMismatch, "shape " + shape_string() + " vs " + o.shape_string());
    }
  }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<T> values_;
};

/// Collects pointers to every parameter tensor of a model, in the model's
/// fixed visiting order.
template <class Model>
auto parameter_tensors(Model& model) {
  using Scalar = typename Model::scalar_type;
  std::vector<Tensor<Scalar>*> out;
  model.visit([&out](Tensor<Scalar>& t) { out.push_back(&t); });
  return out;
}

template <class Model>
std::size_t parameter_count(const Model& model) {
  std::size_t n = 0;
  model.visit([&n](const auto& t) { n += t.size(); });
  return n;
}

/// Zero-filled model with the same structure as `model`.
template <class Model>
Model zeros_like(const Model& model) {
  Model z = model;
  z.visit([](auto& t) { t.fill(0); });
  return z;
}

namespace detail {

/// Uniform in [0, 1) from the top 53 bits; identical across standard
/// library implementations.
template <class Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Engine>
double uniform(Engine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace detail

}  // namespace batrul::nn
