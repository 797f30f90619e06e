#pragma once

// Canonical LSTM (no peepholes):
//   i = sig(W_i x + U_i h + b_i)   f = sig(W_f x + U_f h + b_f)
//   o = sig(W_o x + U_o h + b_o)   g = tanh(W_g x + U_g h + b_g)
//   c' = f * c + i * g             h' = o * tanh(c')

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "batrul/nn/tensor.hpp"

namespace batrul::nn {

template <std::floating_point T>
struct LstmParams {
  using scalar_type = T;

  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor<T> w_i, w_f, w_o, w_g;  // [hidden x input]
  Tensor<T> u_i, u_f, u_o, u_g;  // [hidden x hidden]
  Tensor<T> b_i, b_f, b_o, b_g;  // [hidden]

  LstmParams() = default;
  LstmParams(std::size_t input, std::size_t hidden)
      : input_size(input),
        hidden_size(hidden),
        w_i({hidden, input}),
        w_f({hidden, input}),
        w_o({hidden, input}),
        w_g({hidden, input}),
        u_i({hidden, hidden}),
        u_f({hidden, hidden}),
        u_o({hidden, hidden}),
        u_g({hidden, hidden}),
        b_i({hidden}),
        b_f({hidden}),
        b_o({hidden}),
        b_g({hidden}) {}

  template <class F>
  void visit(F&& f) {
    f(w_i), f(w_f), f(w_o), f(w_g), f(u_i), f(u_f), f(u_o), f(u_g), f(b_i), f(b_f), f(b_o), f(b_g);
  }
  template <class F>
  void visit(F&& f) const {
    f(w_i), f(w_f), f(w_o), f(w_g), f(u_i), f(u_f), f(u_o), f(u_g), f(b_i), f(b_f), f(b_o), f(b_g);
  }

  friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

/// uniform(-k, k) with k = 1/sqrt(hidden) for W and U, zero biases except
/// the forget gate at 1.
template <std::floating_point T>
LstmParams<T> make_lstm(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams<T> p(input, hidden);
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Tensor<T>* t : {&p.w_i, &p.w_f, &p.w_o, &p.w_g, &p.u_i, &p.u_f, &p.u_o, &p.u_g}) {
    for (auto& v : t->values()) v = static_cast<T>(detail::uniform(rng, -k, k));
  }
  p.b_f.fill(T(1));
  return p;
}

/// Per-step activations needed by the backward pass. Rows are time steps.
template <std::floating_point T>
struct LstmCache {
  std::size_t steps = 0;
  std::size_t hidden = 0;
  std::vector<T> h_prev, c_prev, i, f, o, g, c, tanh_c;
};

template <std::floating_point T>
struct LstmForward {
  Tensor<T> hidden_seq;  // [steps x hidden]
  Tensor<T> h_final;     // [hidden]
  Tensor<T> c_final;     // [hidden]
  LstmCache<T> cache;
};

namespace detail {

template <std::floating_point T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

template <std::floating_point T>
void check_lstm_inputs(const LstmParams<T>& p, const Tensor<T>& seq) {
  if (seq.rank() != 2 || seq.dim(1) != p.input_size || seq.dim(0) == 0) {
    throw Error(Errc::ShapeMismatch, "LSTM expects a non-empty [steps x " + std::to_string(p.input_size) +
                                         "] sequence, got " + seq.shape_string());
  }
}

}  // namespace detail

/// h0 / c0 may be empty tensors, meaning zero initial state.
template <std::floating_point T>
LstmForward<T> lstm_forward(const LstmParams<T>& p, const Tensor<T>& seq, const Tensor<T>& h0 = {},
                            const Tensor<T>& c0 = {}) {
  detail::check_lstm_inputs(p, seq);
  const std::size_t H = p.hidden_size;
  const std::size_t I = p.input_size;
  const std::size_t steps = seq.dim(0);
  for (const Tensor<T>* s : {&h0, &c0}) {
    if (!s->empty() && (s->rank() != 1 || s->dim(0) != H)) {
      throw Error(Errc::ShapeMismatch, "initial state must be [" + std::to_string(H) + "]");
    }
  }

  LstmForward<T> out;
  auto& k = out.cache;
  k.steps = steps;
  k.hidden = H;
  for (auto* v : {&k.h_prev, &k.c_prev, &k.i, &k.f, &k.o, &k.g, &k.c, &k.tanh_c}) v->assign(steps * H, T(0));
  out.hidden_seq = Tensor<T>({steps, H});

  std::vector<T> h(H, T(0)), c(H, T(0));
  if (!h0.empty()) h.assign(h0.values().begin(), h0.values().end());
  if (!c0.empty()) c.assign(c0.values().begin(), c0.values().end());

  for (std::size_t t = 0; t < steps; ++t) {
    const T* x = seq.row(t);
    const std::size_t off = t * H;
    std::copy(h.begin(), h.end(), k.h_prev.begin() + off);
    std::copy(c.begin(), c.end(), k.c_prev.begin() + off);
    for (std::size_t r = 0; r < H; ++r) {
      T zi = p.b_i[r], zf = p.b_f[r], zo = p.b_o[r], zg = p.b_g[r];
      const T* wi = p.w_i.row(r);
      const T* wf = p.w_f.row(r);
      const T* wo = p.w_o.row(r);
      const T* wg = p.w_g.row(r);
      for (std::size_t j = 0; j < I; ++j) {
        zi += wi[j] * x[j];
        zf += wf[j] * x[j];
        zo += wo[j] * x[j];
        zg += wg[j] * x[j];
      }
      const T* ui = p.u_i.row(r);
      const T* uf = p.u_f.row(r);
      const T* uo = p.u_o.row(r);
      const T* ug = p.u_g.row(r);
      for (std::size_t j = 0; j < H; ++j) {
        const T hj = k.h_prev[off + j];
        zi += ui[j] * hj;
        zf += uf[j] * hj;
        zo += uo[j] * hj;
        zg += ug[j] * hj;
      }
      k.i[off + r] = detail::sigmoid(zi);
      k.f[off + r] = detail::sigmoid(zf);
      k.o[off + r] = detail::sigmoid(zo);
      k.g[off + r] = std::tanh(zg);
    }
    for (std::size_t r = 0; r < H; ++r) {
      c[r] = k.f[off + r] * k.c_prev[off + r] + k.i[off + r] * k.g[off + r];
      k.c[off + r] = c[r];
      k.tanh_c[off + r] = std::tanh(c[r]);
      h[r] = k.o[off + r] * k.tanh_c[off + r];
      out.hidden_seq(t, r) = h[r];
    }
  }
  out.h_final = Tensor<T>({H}, h);
  out.c_final = Tensor<T>({H}, c);
  return out;
}

template <std::floating_point T>
struct LstmBackward {
  LstmParams<T> param_grads;
  Tensor<T> input_grads;  // [steps x input]
  Tensor<T> h0_grad;      // [hidden]
  Tensor<T> c0_grad;      // [hidden]
};

/// Backpropagation through time. `upstream_hidden` is dL/dh_t for every
/// step [steps x hidden]; `upstream_c_final` (optional) is dL/dc_T.
template <std::floating_point T>
LstmBackward<T> lstm_backward(const LstmParams<T>& p, const Tensor<T>& seq, const LstmCache<T>& k,
                              const Tensor<T>& upstream_hidden, const Tensor<T>& upstream_c_final = {}) {
  detail::check_lstm_inputs(p, seq);
  const std::size_t H = p.hidden_size;
  const std::size_t I = p.input_size;
  const std::size_t steps = seq.dim(0);
  if (k.steps != steps || k.hidden != H) throw Error(Errc::ShapeMismatch, "forward cache does not match sequence");
  if (upstream_hidden.rank() != 2 || upstream_hidden.dim(0) != steps || upstream_hidden.dim(1) != H) {
    throw Error(Errc::ShapeMismatch, "upstream gradient must be [steps x hidden]");
  }
  if (!upstream_c_final.empty() && upstream_c_final.size() != H) {
    throw Error(Errc::ShapeMismatch, "upstream cell gradient must be [hidden]");
  }

  LstmBackward<T> res{zeros_like(p), Tensor<T>({steps, I}), Tensor<T>({H}), Tensor<T>({H})};
  auto& gp = res.param_grads;
  std::vector<T> dh_next(H, T(0)), dc_next(H, T(0));
  if (!upstream_c_final.empty()) dc_next.assign(upstream_c_final.values().begin(), upstream_c_final.values().end());
  std::vector<T> dzi(H), dzf(H), dzo(H), dzg(H);

  for (std::size_t t = steps; t-- > 0;) {
    const std::size_t off = t * H;
    const T* x = seq.row(t);
    for (std::size_t r = 0; r < H; ++r) {
      const T dh = upstream_hidden(t, r) + dh_next[r];
      const T i = k.i[off + r], f = k.f[off + r], o = k.o[off + r], g = k.g[off + r];
      const T tc = k.tanh_c[off + r];
      const T dc = dc_next[r] + dh * o * (T(1) - tc * tc);
      dzo[r] = dh * tc * o * (T(1) - o);
      dzi[r] = dc * g * i * (T(1) - i);
      dzf[r] = dc * k.c_prev[off + r] * f * (T(1) - f);
      dzg[r] = dc * i * (T(1) - g * g);
      dc_next[r] = dc * f;
    }
    std::fill(dh_next.begin(), dh_next.end(), T(0));
    T* dx = res.input_grads.row(t);
    for (std::size_t r = 0; r < H; ++r) {
      gp.b_i[r] += dzi[r];
      gp.b_f[r] += dzf[r];
      gp.b_o[r] += dzo[r];
      gp.b_g[r] += dzg[r];
      T* gwi = gp.w_i.row(r);
      T* gwf = gp.w_f.row(r);
      T* gwo = gp.w_o.row(r);
      T* gwg = gp.w_g.row(r);
      const T* wi = p.w_i.row(r);
      const T* wf = p.w_f.row(r);
      const T* wo = p.w_o.row(r);
      const T* wg = p.w_g.row(r);
      for (std::size_t j = 0; j < I; ++j) {
        gwi[j] += dzi[r] * x[j];
        gwf[j] += dzf[r] * x[j];
        gwo[j] += dzo[r] * x[j];
        gwg[j] += dzg[r] * x[j];
        dx[j] += dzi[r] * wi[j] + dzf[r] * wf[j] + dzo[r] * wo[j] + dzg[r] * wg[j];
      }
      T* gui = gp.u_i.row(r);
      T* guf = gp.u_f.row(r);
      T* guo = gp.u_o.row(r);
      T* gug = gp.u_g.row(r);
      const T* ui = p.u_i.row(r);
      const T* uf = p.u_f.row(r);
      const T* uo = p.u_o.row(r);
      const T* ug = p.u_g.row(r);
      for (std::size_t j = 0; j < H; ++j) {
        const T hj = k.h_prev[off + j];
        gui[j] += dzi[r] * hj;
        guf[j] += dzf[r] * hj;
        guo[j] += dzo[r] * hj;
        gug[j] += dzg[r] * hj;
        dh_next[j] += dzi[r] * ui[j] + dzf[r] * uf[j] + dzo[r] * uo[j] + dzg[r] * ug[j];
      }
    }
  }
  res.h0_grad = Tensor<T>({H}, dh_next);
  res.c0_grad = Tensor<T>({H}, dc_next);
  return res;
}

}  // namespace batrul::nn
