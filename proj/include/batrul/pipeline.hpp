#pragma once

// Two-stage RUL estimator: a per-timestep autoencoder compresses the
// normalized (V, I, T) vector, then an LSTM reads the latent sequence of a
// window and a linear head emits the normalized remaining Ah.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "batrul/error.hpp"
#include "batrul/features.hpp"
#include "batrul/ingest.hpp"
#include "batrul/labeling.hpp"
#include "batrul/nn/adam.hpp"
#include "batrul/nn/autoencoder.hpp"
#include "batrul/nn/dense.hpp"
#include "batrul/nn/loss.hpp"
#include "batrul/nn/lstm.hpp"
#include "batrul/nn/tensor.hpp"

namespace batrul {

inline constexpr const char* kBundleVersion = "batrul-bundle-1";

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 7;
  std::size_t early_stop_patience = 20;
  double clip_norm = 1.0;

  std::size_t latent_dim = 3;
  std::vector<std::size_t> ae_hidden = {8};
  nn::Activation ae_activation = nn::Activation::Tanh;
  std::size_t ae_epochs = 30;
  std::size_t ae_batch_size = 128;
  double ae_lr = 1e-2;
  std::size_t ae_max_vectors = 20000;

  std::size_t hidden_size = 32;

  std::size_t window_len = 64;
  std::size_t stride = 16;
  double rate_s = 120.0;
  double deadband_a = kDefaultDeadbandA;
  SplitRatios split;
};

inline void validate_train_config(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (c.epochs < 1) fail("epochs must be >= 1");
  if (c.batch_size < 1 || c.ae_batch_size < 1) fail("batch sizes must be >= 1");
  if (c.latent_dim < 1 || c.hidden_size < 1) fail("latent_dim and hidden_size must be >= 1");
  if (c.window_len < 1 || c.stride < 1) fail("window_len and stride must be >= 1");
  if (!(c.rate_s > 0.0)) fail("rate_s must be > 0");
  if (!(c.lr > 0.0) || !(c.ae_lr > 0.0)) fail("learning rates must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) fail("betas must be in [0, 1)");
  if (!(c.epsilon > 0.0)) fail("epsilon must be > 0");
  if (std::find(c.ae_hidden.begin(), c.ae_hidden.end(), std::size_t{0}) != c.ae_hidden.end()) {
    fail("ae_hidden sizes must be >= 1");
  }
}

/// LSTM over the latent sequence followed by a linear scalar head on the
/// final hidden state.
template <std::floating_point T>
struct RulModel {
  using scalar_type = T;

  nn::LstmParams<T> lstm;
  nn::Dense<T> head;

  template <class F>
  void visit(F&& f) {
    lstm.visit(f);
    head.visit(f);
  }
  template <class F>
  void visit(F&& f) const {
    lstm.visit(f);
    head.visit(f);
  }

  friend bool operator==(const RulModel&, const RulModel&) = default;
};

template <std::floating_point T>
RulModel<T> make_rul_model(std::size_t latent_dim, std::size_t hidden, std::mt19937_64& rng) {
  RulModel<T> m;
  m.lstm = nn::make_lstm<T>(latent_dim, hidden, rng);
  m.head = nn::make_dense<T>(hidden, 1, nn::Activation::Linear, rng);
  return m;
}

template <std::floating_point T>
struct ModelBundle {
  using scalar_type = T;

  nn::AutoencoderParams<T> autoencoder;
  RulModel<T> rul;
  NormStats norm;
  TrainConfig config;
  SplitSpec split;
  std::string version = kBundleVersion;
};

template <std::floating_point T>
void validate_bundle(const ModelBundle<T>& b) {
  if (b.version.empty()) throw Error(Errc::VersionMismatch, "bundle carries no version");
  nn::validate_autoencoder(b.autoencoder);
  if (b.autoencoder.input_dim() != kNumChannels || b.norm.channel_names().size() != kNumChannels) {
    throw Error(Errc::ShapeMismatch, "normalizer channels do not match autoencoder input");
  }
  if (b.rul.lstm.input_size != b.autoencoder.latent_dim()) {
    throw Error(Errc::ShapeMismatch, "LSTM input size does not match latent size");
  }
  if (b.rul.head.in_size() != b.rul.lstm.hidden_size || b.rul.head.out_size() != 1) {
    throw Error(Errc::ShapeMismatch, "head does not map hidden state to one output");
  }
}

namespace detail {

template <class Model>
void accumulate(Model& acc, const Model& g) {
  auto dst = nn::parameter_tensors(acc);
  std::size_t k = 0;
  g.visit([&](const auto& t) { *dst[k++] += t; });
}

template <std::floating_point T>
void require_normalized(const WindowSet& w) {
  if (w.count() > 0 && !w.normalized) {
    throw Error(Errc::InvalidConfig, "window set must be normalized with the model's statistics");
  }
}

inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
}

}  // namespace detail

/// Latent sequence [W x latent] of normalized window `w`.
template <std::floating_point T>
nn::Tensor<T> encode_window(const nn::AutoencoderParams<T>& ae, const WindowSet& windows, std::size_t w) {
  const std::size_t W = windows.window_len;
  const std::size_t L = ae.latent_dim();
  nn::Tensor<T> seq({W, L});
  std::vector<T> a, b;
  std::array<T, kNumChannels> x{};
  const double* src = windows.window(w);
  for (std::size_t r = 0; r < W; ++r) {
    for (std::size_t c = 0; c < kNumChannels; ++c) x[c] = static_cast<T>(src[r * kNumChannels + c]);
    nn::encode_row(ae, x.data(), seq.row(r), a, b);
  }
  return seq;
}

/// Normalized prediction for one latent sequence.
template <std::floating_point T>
T rul_forward(const RulModel<T>& m, const nn::Tensor<T>& latent_seq) {
  const auto fwd = nn::lstm_forward(m.lstm, latent_seq);
  T y = T(0);
  nn::detail::dense_row(m.head, fwd.h_final.data(), &y);
  return y;
}

/// Mean squared error over a batch and its exact gradient.
template <std::floating_point T>
std::pair<T, RulModel<T>> rul_loss_and_grad(const RulModel<T>& m, const std::vector<nn::Tensor<T>>& seqs,
                                            const std::vector<T>& targets, const std::vector<std::size_t>& batch) {
  RulModel<T> grad = nn::zeros_like(m);
  const std::size_t H = m.lstm.hidden_size;
  T loss = T(0);
  const T inv_n = T(1) / static_cast<T>(batch.size());
  for (const std::size_t idx : batch) {
    const auto& seq = seqs[idx];
    const auto fwd = nn::lstm_forward(m.lstm, seq);
    T y = T(0);
    nn::detail::dense_row(m.head, fwd.h_final.data(), &y);
    const T err = y - targets[idx];
    loss += err * err * inv_n;
    const T dy = T(2) * err * inv_n;
    grad.head.bias[0] += dy;
    nn::Tensor<T> upstream({seq.dim(0), H});
    T* last = upstream.row(seq.dim(0) - 1);
    for (std::size_t r = 0; r < H; ++r) {
      grad.head.weight[r] += dy * fwd.h_final[r];
      last[r] = dy * m.head.weight[r];
    }
    const auto back = nn::lstm_backward(m.lstm, seq, fwd.cache, upstream);
    detail::accumulate(grad.lstm, back.param_grads);
  }
  return {loss, std::move(grad)};
}

struct AutoencoderHistory {
  double initial_loss = 0.0;
  std::vector<double> loss;  // full-set reconstruction MSE after each epoch
};

template <std::floating_point T>
struct AutoencoderTraining {
  nn::AutoencoderParams<T> params;
  AutoencoderHistory history;
};

/// Trains the per-timestep autoencoder on the rows of normalized windows.
template <std::floating_point T>
AutoencoderTraining<T> train_autoencoder(const WindowSet& train, const TrainConfig& config) {
  validate_train_config(config);
  detail::require_normalized<T>(train);
  const std::size_t total_rows = train.count() * train.window_len;
  if (total_rows == 0) throw Error(Errc::EmptyTrainingSet, "no training rows for the autoencoder");

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> rows(total_rows);
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > config.ae_max_vectors && config.ae_max_vectors > 0) {
    detail::shuffle_indices(rows, rng);
    rows.resize(config.ae_max_vectors);
    std::sort(rows.begin(), rows.end());
  }
  const std::size_t n = rows.size();
  nn::Tensor<T> data({n, kNumChannels});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      data(r, c) = static_cast<T>(train.features[rows[r] * kNumChannels + c]);
    }
  }

  AutoencoderTraining<T> out;
  out.params = nn::make_autoencoder<T>(kNumChannels, config.ae_hidden, config.latent_dim, config.ae_activation, rng);
  auto adam = nn::make_adam_state(out.params, {config.ae_lr, config.beta1, config.beta2, config.epsilon});
  out.history.initial_loss = static_cast<double>(nn::autoencoder_loss(out.params, data));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::min(config.ae_batch_size, n);
  for (std::size_t epoch = 0; epoch < config.ae_epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      nn::Tensor<T> batch({end - start, kNumChannels});
      for (std::size_t i = start; i < end; ++i) {
        for (std::size_t c = 0; c < kNumChannels; ++c) batch(i - start, c) = data(order[i], c);
      }
      auto [loss, grad] = nn::autoencoder_loss_and_grad(out.params, batch);
      if (!std::isfinite(loss)) throw Error(Errc::DivergedLoss, "autoencoder loss is not finite");
      nn::clip_grad_norm(grad, config.clip_norm);
      nn::adam_step(adam, out.params, grad);
    }
    const double epoch_loss = static_cast<double>(nn::autoencoder_loss(out.params, data));
    if (!std::isfinite(epoch_loss)) throw Error(Errc::DivergedLoss, "autoencoder loss is not finite");
    out.history.loss.push_back(epoch_loss);
  }
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean normalized MSE over the epoch's batches
  double val_rmse = 0.0;    // Ah
};

template <std::floating_point T>
struct RulTraining {
  RulModel<T> model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double initial_train_rmse_ah = 0.0;
  double final_train_rmse_ah = 0.0;
};

namespace detail {

template <std::floating_point T>
double rmse_ah(const RulModel<T>& m, const std::vector<nn::Tensor<T>>& seqs, const std::vector<double>& targets_ah,
               double scale) {
  if (seqs.empty()) return 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const double pred = static_cast<double>(rul_forward(m, seqs[i])) * scale;
    sq += (pred - targets_ah[i]) * (pred - targets_ah[i]);
  }
  return std::sqrt(sq / static_cast<double>(seqs.size()));
}

template <std::floating_point T>
std::vector<nn::Tensor<T>> encode_all(const nn::AutoencoderParams<T>& ae, const WindowSet& w) {
  std::vector<nn::Tensor<T>> seqs;
  seqs.reserve(w.count());
  for (std::size_t i = 0; i < w.count(); ++i) seqs.push_back(encode_window(ae, w, i));
  return seqs;
}

}  // namespace detail

/// Trains the LSTM regressor on frozen latent sequences. Early stopping on
/// validation RMSE keeps the best epoch's parameters; with an empty
/// validation set the training RMSE is monitored instead.
template <std::floating_point T>
RulTraining<T> train_rul(const WindowSet& train, const WindowSet& val, const nn::AutoencoderParams<T>& ae,
                         const NormStats& norm, const TrainConfig& config) {
  validate_train_config(config);
  detail::require_normalized<T>(train);
  detail::require_normalized<T>(val);
  if (train.count() == 0) throw Error(Errc::EmptyTrainingSet, "no training windows");
  if (!(norm.target_scale_ah > 0.0)) throw Error(Errc::InvalidConfig, "target scale must be > 0");

  const auto train_seqs = detail::encode_all(ae, train);
  const auto val_seqs = detail::encode_all(ae, val);
  std::vector<T> train_targets(train.count());
  for (std::size_t i = 0; i < train.count(); ++i) {
    train_targets[i] = static_cast<T>(train.targets[i] / norm.target_scale_ah);
  }

  std::mt19937_64 rng(config.seed ^ 0x5255'4C00ULL);
  RulTraining<T> out;
  out.model = make_rul_model<T>(ae.latent_dim(), config.hidden_size, rng);
  auto adam = nn::make_adam_state(out.model, {config.lr, config.beta1, config.beta2, config.epsilon});
  out.initial_train_rmse_ah = detail::rmse_ah(out.model, train_seqs, train.targets, norm.target_scale_ah);

  const bool has_val = val.count() > 0;
  RulModel<T> best = out.model;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;
  std::vector<std::size_t> order(train.count());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(order.size(), start + config.batch_size)));
      auto [loss, grad] = rul_loss_and_grad(out.model, train_seqs, train_targets, batch);
      if (!std::isfinite(loss)) throw Error(Errc::DivergedLoss, "RUL loss is not finite at epoch " + std::to_string(epoch));
      nn::clip_grad_norm(grad, config.clip_norm);
      nn::adam_step(adam, out.model, grad);
      loss_sum += static_cast<double>(loss);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_rmse = has_val ? detail::rmse_ah(out.model, val_seqs, val.targets, norm.target_scale_ah)
                           : detail::rmse_ah(out.model, train_seqs, train.targets, norm.target_scale_ah);
    if (!std::isfinite(rec.val_rmse)) throw Error(Errc::DivergedLoss, "validation RMSE is not finite");
    out.history.push_back(rec);
    if (rec.val_rmse < best_score) {
      best_score = rec.val_rmse;
      best = out.model;
      out.best_epoch = epoch;
      stall = 0;
    } else if (++stall > config.early_stop_patience) {
      break;
    }
  }
  out.model = std::move(best);
  out.final_train_rmse_ah = detail::rmse_ah(out.model, train_seqs, train.targets, norm.target_scale_ah);
  return out;
}

/// Remaining-Ah predictions for every window of a normalized set.
template <std::floating_point T>
std::vector<double> predict_batch(const ModelBundle<T>& bundle, const WindowSet& windows) {
  detail::require_normalized<T>(windows);
  if (windows.count() > 0 && windows.window_len != bundle.config.window_len) {
    throw Error(Errc::ShapeMismatch, "window length differs from the model's");
  }
  std::vector<double> out;
  out.reserve(windows.count());
  for (std::size_t w = 0; w < windows.count(); ++w) {
    const auto seq = encode_window(bundle.autoencoder, windows, w);
    out.push_back(static_cast<double>(rul_forward(bundle.rul, seq)) * bundle.norm.target_scale_ah);
  }
  return out;
}

struct CellMetrics {
  std::string cell_id;
  std::size_t n_windows = 0;
  double rmse_ah = 0.0;
  double mae_ah = 0.0;
  double max_abs_err_ah = 0.0;
};

struct EvalReport {
  double rmse_ah = 0.0;
  double mae_ah = 0.0;
  double max_abs_err_ah = 0.0;
  std::size_t n_windows = 0;
  // RMSE divided by the mean throughput-to-EOL of the evaluated cells.
  std::optional<double> rmse_life_fraction;
  std::vector<CellMetrics> per_cell;
};

/// RMSE / MAE / max error overall and per cell (cells in first-seen order).
inline EvalReport compute_metrics(const std::vector<double>& predictions, const std::vector<double>& targets,
                                  const std::vector<WindowProvenance>& provenance = {}) {
  if (predictions.size() != targets.size()) throw Error(Errc::ShapeMismatch, "prediction / target counts differ");
  EvalReport rep;
  rep.n_windows = predictions.size();
  std::map<std::string, std::size_t> slot;
  std::vector<double> cell_sq;
  double sq = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = std::abs(predictions[i] - targets[i]);
    sq += e * e;
    abs_sum += e;
    rep.max_abs_err_ah = std::max(rep.max_abs_err_ah, e);
    if (!provenance.empty()) {
      const auto& id = provenance.at(i).cell_id;
      auto [it, inserted] = slot.try_emplace(id, rep.per_cell.size());
      if (inserted) {
        rep.per_cell.push_back({id, 0, 0.0, 0.0, 0.0});
        cell_sq.push_back(0.0);
      }
      auto& cm = rep.per_cell[it->second];
      ++cm.n_windows;
      cell_sq[it->second] += e * e;
      cm.mae_ah += e;
      cm.max_abs_err_ah = std::max(cm.max_abs_err_ah, e);
    }
  }
  if (rep.n_windows > 0) {
    rep.rmse_ah = std::sqrt(sq / static_cast<double>(rep.n_windows));
    rep.mae_ah = abs_sum / static_cast<double>(rep.n_windows);
  }
  for (std::size_t k = 0; k < rep.per_cell.size(); ++k) {
    auto& cm = rep.per_cell[k];
    cm.rmse_ah = std::sqrt(cell_sq[k] / static_cast<double>(cm.n_windows));
    cm.mae_ah /= static_cast<double>(cm.n_windows);
  }
  return rep;
}

/// `life_ah` maps cell_id to throughput-to-EOL; when given, the report also
/// expresses RMSE as a fraction of the mean life of the evaluated cells.
template <std::floating_point T>
EvalReport evaluate(const ModelBundle<T>& bundle, const WindowSet& windows,
                    const std::map<std::string, double>* life_ah = nullptr) {
  const auto predictions = predict_batch(bundle, windows);
  auto rep = compute_metrics(predictions, windows.targets, windows.provenance);
  if (life_ah && !rep.per_cell.empty()) {
    double sum = 0.0;
    for (const auto& cm : rep.per_cell) sum += life_ah->at(cm.cell_id);
    const double mean_life = sum / static_cast<double>(rep.per_cell.size());
    if (mean_life > 0.0) rep.rmse_life_fraction = rep.rmse_ah / mean_life;
  }
  return rep;
}

struct OnlineEstimate {
  double timestamp_s = 0.0;
  double remaining_ah = 0.0;
};

/// Streaming estimator: resamples incoming records onto the model's grid,
/// keeps the last W latent rows, and emits one estimate per resampled row
/// once W rows are available. Only V, I, T and time are read.
template <std::floating_point T>
class OnlinePredictor {
 public:
  explicit OnlinePredictor(const ModelBundle<T>& bundle) : bundle_(bundle) { validate_bundle(bundle); }

  std::vector<OnlineEstimate> push(const RawSample& s) {
    std::vector<OnlineEstimate> out;
    if (!std::isfinite(s.timestamp_s) || !std::isfinite(s.voltage_v) || !std::isfinite(s.current_a) ||
        !std::isfinite(s.temperature_c)) {
      throw Error(Errc::RangeViolation, "non-finite sample");
    }
    if (!has_prev_) {
      t0_ = s.timestamp_s;
      prev_ = s;
      has_prev_ = true;
      emit_row(s.timestamp_s, {s.voltage_v, s.current_a, s.temperature_c}, out);
      next_k_ = 1;
      return out;
    }
    if (!(s.timestamp_s > prev_.timestamp_s)) {
      throw Error(Errc::NonMonotonicTimestamp, "timestamp " + std::to_string(s.timestamp_s) + " after " +
                                                   std::to_string(prev_.timestamp_s));
    }
    const double rate = bundle_.config.rate_s;
    while (static_cast<double>(next_k_) <= (s.timestamp_s - t0_) / rate + 1e-9) {
      const double t = std::min(detail::grid_time(t0_, rate, next_k_), s.timestamp_s);
      emit_row(t, detail::lerp_channels(prev_, s, t), out);
      ++next_k_;
    }
    prev_ = s;
    return out;
  }

  std::size_t rows_seen() const noexcept { return next_k_; }

 private:
  void emit_row(double t, const std::array<double, kNumChannels>& x, std::vector<OnlineEstimate>& out) {
    std::array<T, kNumChannels> z{};
    for (std::size_t c = 0; c < kNumChannels; ++c) z[c] = static_cast<T>(bundle_.norm.normalize(c, x[c]));
    std::vector<T> latent(bundle_.autoencoder.latent_dim());
    nn::encode_row(bundle_.autoencoder, z.data(), latent.data(), scratch_a_, scratch_b_);
    buffer_.push_back(std::move(latent));
    const std::size_t W = bundle_.config.window_len;
    if (buffer_.size() > W) buffer_.pop_front();
    if (buffer_.size() < W) return;
    const std::size_t L = bundle_.autoencoder.latent_dim();
    nn::Tensor<T> seq({W, L});
    for (std::size_t r = 0; r < W; ++r) std::copy(buffer_[r].begin(), buffer_[r].end(), seq.row(r));
    const double y = static_cast<double>(rul_forward(bundle_.rul, seq)) * bundle_.norm.target_scale_ah;
    out.push_back({t, y});
  }

  const ModelBundle<T>& bundle_;
  bool has_prev_ = false;
  RawSample prev_{};
  double t0_ = 0.0;
  std::size_t next_k_ = 0;
  std::deque<std::vector<T>> buffer_;
  std::vector<T> scratch_a_, scratch_b_;
};

/// Resampled frame and throughput-indexed RUL targets of one labeled cell.
struct CellData {
  std::string cell_id;
  FeatureFrame frame;
  std::vector<RulTarget> targets;
  double eol_throughput_ah = 0.0;
};

/// `records` must be this cell's label rows in throughput order.
inline CellData prepare_cell(const CellSeries& series, const std::vector<LabelRecord>& records,
                             const TrainConfig& config) {
  if (records.empty()) throw Error(Errc::EmptyInput, "cell '" + series.cell_id + "' has no label records");
  CellData cd;
  cd.cell_id = series.cell_id;
  cd.frame = resample_uniform(series, config.rate_s, config.deadband_a);
  for (const auto& r : records) cd.targets.push_back({r.cumulative_discharge_ah, r.remaining_ah});
  std::sort(cd.targets.begin(), cd.targets.end(),
            [](const RulTarget& a, const RulTarget& b) { return a.cumulative_discharge_ah < b.cumulative_discharge_ah; });
  cd.eol_throughput_ah = cd.targets.front().cumulative_discharge_ah + cd.targets.front().remaining_ah;
  return cd;
}

inline WindowSet build_windows(const std::vector<const CellData*>& cells, const NormStats& norm,
                               std::size_t window_len, std::size_t stride) {
  WindowSet all;
  all.window_len = window_len;
  all.stride = stride;
  all.normalized = true;
  for (const auto* c : cells) all.append(make_windows(c->frame, c->targets, window_len, stride, &norm));
  return all;
}

template <std::floating_point T>
struct PipelineResult {
  ModelBundle<T> bundle;
  AutoencoderHistory ae_history;
  std::vector<EpochRecord> rul_history;
  std::size_t best_epoch = 0;
  double initial_train_rmse_ah = 0.0;
  double final_train_rmse_ah = 0.0;
};

/// Whole-cell split, normalizer on training cells, autoencoder, then the
/// LSTM regressor.
template <std::floating_point T>
PipelineResult<T> train_pipeline(const std::vector<CellData>& cells, const TrainConfig& config) {
  validate_train_config(config);
  std::vector<std::string> ids;
  for (const auto& c : cells) ids.push_back(c.cell_id);
  const auto split = split_by_cell(ids, config.split, config.seed);

  auto pick = [&cells](const std::vector<std::string>& wanted) {
    std::vector<const CellData*> out;
    for (const auto& c : cells) {
      if (std::find(wanted.begin(), wanted.end(), c.cell_id) != wanted.end()) out.push_back(&c);
    }
    return out;
  };
  const auto train_cells = pick(split.train);
  const auto val_cells = pick(split.val);

  std::vector<FeatureFrame> train_frames;
  double life_sum = 0.0;
  for (const auto* c : train_cells) {
    train_frames.push_back(c->frame);
    life_sum += c->eol_throughput_ah;
  }
  NormStats norm = fit_normalizer(train_frames);
  norm.target_scale_ah = life_sum / static_cast<double>(train_cells.size());
  if (!(norm.target_scale_ah > 0.0)) throw Error(Errc::EmptyTrainingSet, "training cells have zero life");

  const auto train_w = build_windows(train_cells, norm, config.window_len, config.stride);
  const auto val_w = build_windows(val_cells, norm, config.window_len, config.stride);

  PipelineResult<T> res;
  auto ae = train_autoencoder<T>(train_w, config);
  auto rul = train_rul<T>(train_w, val_w, ae.params, norm, config);
  res.bundle.autoencoder = std::move(ae.params);
  res.bundle.rul = std::move(rul.model);
  res.bundle.norm = norm;
  res.bundle.config = config;
  res.bundle.split = split;
  res.ae_history = std::move(ae.history);
  res.rul_history = std::move(rul.history);
  res.best_epoch = rul.best_epoch;
  res.initial_train_rmse_ah = rul.initial_train_rmse_ah;
  res.final_train_rmse_ah = rul.final_train_rmse_ah;
  return res;
}

}  // namespace batrul
