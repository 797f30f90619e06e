#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "batrul/nn/tensor.hpp"

namespace batrul::nn {

enum class Activation { Linear, Tanh };

constexpr std::string_view to_string(Activation a) noexcept {
  return a == Activation::Tanh ? "tanh" : "linear";
}

/// y = act(W x + b), W is [out x in].
template <std::floating_point T>
struct Dense {
  using scalar_type = T;

  Tensor<T> weight;
  Tensor<T> bias;
  Activation activation = Activation::Linear;

  Dense() = default;
  Dense(std::size_t in, std::size_t out, Activation act = Activation::Linear)
      : weight({out, in}), bias({out}), activation(act) {}

  std::size_t in_size() const { return weight.dim(1); }
  std::size_t out_size() const { return weight.dim(0); }

  template <class F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
  template <class F>
  void visit(F&& f) const {
    f(weight);
    f(bias);
  }

  friend bool operator==(const Dense&, const Dense&) = default;
};

/// Xavier-uniform weights, zero bias.
template <std::floating_point T>
Dense<T> make_dense(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
  Dense<T> d(in, out, act);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : d.weight.values()) w = static_cast<T>(detail::uniform(rng, -limit, limit));
  return d;
}

namespace detail {

template <std::floating_point T>
T activate(Activation a, T z) {
  return a == Activation::Tanh ? std::tanh(z) : z;
}

/// d act / dz expressed through the activation output y.
template <std::floating_point T>
T activation_slope(Activation a, T y) {
  return a == Activation::Tanh ? T(1) - y * y : T(1);
}

/// Single-row kernel: y[out] = act(W x + b).
template <std::floating_point T>
void dense_row(const Dense<T>& d, const T* x, T* y) {
  const std::size_t in = d.in_size();
  const std::size_t out = d.out_size();
  const T* w = d.weight.data();
  for (std::size_t o = 0; o < out; ++o) {
    T z = d.bias[o];
    const T* wr = w + o * in;
    for (std::size_t i = 0; i < in; ++i) z += wr[i] * x[i];
    y[o] = activate(d.activation, z);
  }
}

template <std::floating_point T>
Tensor<T> as_matrix(const Tensor<T>& x, std::size_t cols) {
  if (x.rank() == 1 && x.dim(0) == cols) return Tensor<T>({1, cols}, std::vector<T>(x.values().begin(), x.values().end()));
  if (x.rank() == 2 && x.dim(1) == cols) return x;
  throw Error(Errc::ShapeMismatch, "expected [" + std::to_string(cols) + "] or [N x " + std::to_string(cols) +
                                       "], got " + x.shape_string());
}

}  // namespace detail

/// Accepts a single vector [in] or a batch of rows [N x in]; the output has
/// the same rank.
template <std::floating_point T>
Tensor<T> dense_forward(const Dense<T>& d, const Tensor<T>& x) {
  const auto xm = detail::as_matrix(x, d.in_size());
  const std::size_t n = xm.dim(0);
  Tensor<T> y({n, d.out_size()});
  for (std::size_t r = 0; r < n; ++r) detail::dense_row(d, xm.row(r), y.row(r));
  if (x.rank() == 1) return Tensor<T>({d.out_size()}, std::vector<T>(y.values().begin(), y.values().end()));
  return y;
}

template <std::floating_point T>
struct DenseBackward {
  Dense<T> param_grads;
  Tensor<T> input_grad;
};

/// Exact gradients of sum(upstream * y) with respect to W, b and x. The
/// forward pass is recomputed from `x`.
template <std::floating_point T>
DenseBackward<T> dense_backward(const Dense<T>& d, const Tensor<T>& x, const Tensor<T>& upstream) {
  const auto xm = detail::as_matrix(x, d.in_size());
  const auto gm = detail::as_matrix(upstream, d.out_size());
  if (xm.dim(0) != gm.dim(0)) throw Error(Errc::ShapeMismatch, "batch size of upstream gradient differs");
  const std::size_t n = xm.dim(0);
  const std::size_t in = d.in_size();
  const std::size_t out = d.out_size();
  DenseBackward<T> res{zeros_like(d), Tensor<T>({n, in})};
  std::vector<T> y(out);
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = xm.row(r);
    detail::dense_row(d, xr, y.data());
    T* dx = res.input_grad.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const T dz = gm(r, o) * detail::activation_slope(d.activation, y[o]);
      res.param_grads.bias[o] += dz;
      T* gw = res.param_grads.weight.data() + o * in;
      const T* w = d.weight.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += dz * xr[i];
        dx[i] += dz * w[i];
      }
    }
  }
  if (x.rank() == 1) {
    res.input_grad = Tensor<T>({in}, std::vector<T>(res.input_grad.values().begin(), res.input_grad.values().end()));
  }
  return res;
}

}  // namespace batrul::nn
