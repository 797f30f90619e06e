#pragma once

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "batrul/nn/dense.hpp"
#include "batrul/nn/loss.hpp"
#include "batrul/nn/tensor.hpp"

namespace batrul::nn {

/// Encoder in -> ... -> latent, decoder latent -> ... -> in. Every layer but
/// the final decoder layer uses the hidden activation.
template <std::floating_point T>
struct AutoencoderParams {
  using scalar_type = T;

  std::vector<Dense<T>> encoder;
  std::vector<Dense<T>> decoder;

  std::size_t input_dim() const { return encoder.front().in_size(); }
  std::size_t latent_dim() const { return encoder.back().out_size(); }

  template <class F>
  void visit(F&& f) {
    for (auto& l : encoder) l.visit(f);
    for (auto& l : decoder) l.visit(f);
  }
  template <class F>
  void visit(F&& f) const {
    for (const auto& l : encoder) l.visit(f);
    for (const auto& l : decoder) l.visit(f);
  }

  friend bool operator==(const AutoencoderParams&, const AutoencoderParams&) = default;
};

/// Throws ShapeMismatch unless the stacks chain and the decoder mirrors the
/// encoder.
template <std::floating_point T>
void validate_autoencoder(const AutoencoderParams<T>& ae) {
  if (ae.encoder.empty() || ae.encoder.size() != ae.decoder.size()) {
    throw Error(Errc::ShapeMismatch, "encoder and decoder must have the same non-zero depth");
  }
  const std::size_t n = ae.encoder.size();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& e = ae.encoder[l];
    const auto& d = ae.decoder[n - 1 - l];
    if (e.in_size() != d.out_size() || e.out_size() != d.in_size()) {
      throw Error(Errc::ShapeMismatch, "decoder layer sizes do not mirror the encoder");
    }
    if (l + 1 < n && e.out_size() != ae.encoder[l + 1].in_size()) {
      throw Error(Errc::ShapeMismatch, "encoder layers do not chain");
    }
  }
}

template <std::floating_point T>
AutoencoderParams<T> make_autoencoder(std::size_t input_dim, const std::vector<std::size_t>& hidden_sizes,
                                      std::size_t latent_dim, Activation hidden_activation, std::mt19937_64& rng) {
  if (input_dim == 0 || latent_dim == 0) throw Error(Errc::ShapeMismatch, "autoencoder dimensions must be >= 1");
  std::vector<std::size_t> sizes = {input_dim};
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(latent_dim);
  AutoencoderParams<T> ae;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    ae.encoder.push_back(make_dense<T>(sizes[l], sizes[l + 1], hidden_activation, rng));
  }
  for (std::size_t l = sizes.size() - 1; l > 0; --l) {
    const auto act = l == 1 ? Activation::Linear : hidden_activation;
    ae.decoder.push_back(make_dense<T>(sizes[l], sizes[l - 1], act, rng));
  }
  return ae;
}

template <std::floating_point T>
struct AutoencoderForward {
  Tensor<T> reconstruction;      // [N x in]
  Tensor<T> latent;              // [N x latent]
  std::vector<Tensor<T>> inputs;  // input of every layer, encoder then decoder
};

template <std::floating_point T>
AutoencoderForward<T> autoencoder_forward(const AutoencoderParams<T>& ae, const Tensor<T>& x) {
  AutoencoderForward<T> out;
  Tensor<T> h = detail::as_matrix(x, ae.input_dim());
  for (const auto& l : ae.encoder) {
    out.inputs.push_back(h);
    h = dense_forward(l, h);
  }
  out.latent = h;
  for (const auto& l : ae.decoder) {
    out.inputs.push_back(h);
    h = dense_forward(l, h);
  }
  out.reconstruction = std::move(h);
  return out;
}

/// Latent code of a single feature vector, written to `latent`.
template <std::floating_point T>
void encode_row(const AutoencoderParams<T>& ae, const T* x, T* latent, std::vector<T>& scratch_a,
                std::vector<T>& scratch_b) {
  scratch_a.assign(x, x + ae.input_dim());
  for (const auto& l : ae.encoder) {
    scratch_b.resize(l.out_size());
    detail::dense_row(l, scratch_a.data(), scratch_b.data());
    std::swap(scratch_a, scratch_b);
  }
  std::copy(scratch_a.begin(), scratch_a.end(), latent);
}

template <std::floating_point T>
struct AutoencoderBackward {
  AutoencoderParams<T> param_grads;
  Tensor<T> input_grad;
};

/// Gradients given dL/d(reconstruction) and optionally dL/d(latent).
template <std::floating_point T>
AutoencoderBackward<T> autoencoder_backward(const AutoencoderParams<T>& ae, const AutoencoderForward<T>& fwd,
                                            const Tensor<T>& upstream_reconstruction,
                                            const Tensor<T>& upstream_latent = {}) {
  fwd.reconstruction.require_same_shape(upstream_reconstruction);
  const std::size_t n_enc = ae.encoder.size();
  AutoencoderBackward<T> res{zeros_like(ae), {}};
  Tensor<T> g = upstream_reconstruction;
  for (std::size_t l = ae.decoder.size(); l-- > 0;) {
    auto b = dense_backward(ae.decoder[l], fwd.inputs[n_enc + l], g);
    res.param_grads.decoder[l] = std::move(b.param_grads);
    g = std::move(b.input_grad);
  }
  if (!upstream_latent.empty()) g += upstream_latent;
  for (std::size_t l = n_enc; l-- > 0;) {
    auto b = dense_backward(ae.encoder[l], fwd.inputs[l], g);
    res.param_grads.encoder[l] = std::move(b.param_grads);
    g = std::move(b.input_grad);
  }
  res.input_grad = std::move(g);
  return res;
}

/// Reconstruction MSE of a batch [N x in].
template <std::floating_point T>
T autoencoder_loss(const AutoencoderParams<T>& ae, const Tensor<T>& x) {
  const auto fwd = autoencoder_forward(ae, x);
  return mse_loss(fwd.reconstruction, detail::as_matrix(x, ae.input_dim()));
}

template <std::floating_point T>
std::pair<T, AutoencoderParams<T>> autoencoder_loss_and_grad(const AutoencoderParams<T>& ae, const Tensor<T>& x) {
  const auto fwd = autoencoder_forward(ae, x);
  const auto target = detail::as_matrix(x, ae.input_dim());
  const T loss = mse_loss(fwd.reconstruction, target);
  auto back = autoencoder_backward(ae, fwd, mse_grad(fwd.reconstruction, target));
  return {loss, std::move(back.param_grads)};
}

}  // namespace batrul::nn
