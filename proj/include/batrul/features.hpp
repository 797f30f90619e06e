#pragma once

// Uniform resampling, normalization, moving windows and cell-level splits.
//
// The model-visible channels are fixed to voltage, current and temperature.
// Throughput is carried alongside each row only to attach targets; it never
// enters a window.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "batrul/error.hpp"
#include "batrul/ingest.hpp"
#include "batrul/labeling.hpp"

namespace batrul {

inline constexpr std::size_t kNumChannels = 3;
inline constexpr std::array<const char*, kNumChannels> kChannelNames = {"V", "I", "T"};

struct FeatureRow {
  double t = 0.0;
  std::array<double, kNumChannels> x{};  // V, I, T
  double cumulative_discharge_ah = 0.0;
};

struct FeatureFrame {
  std::string cell_id;
  double rate_s = 0.0;
  std::vector<FeatureRow> rows;

  std::size_t size() const noexcept { return rows.size(); }
};

namespace detail {

/// Linear interpolation of the measurable channels between two samples.
inline std::array<double, kNumChannels> lerp_channels(const RawSample& a, const RawSample& b, double t) {
  const double frac = (t - a.timestamp_s) / (b.timestamp_s - a.timestamp_s);
  return {a.voltage_v + frac * (b.voltage_v - a.voltage_v), a.current_a + frac * (b.current_a - a.current_a),
          a.temperature_c + frac * (b.temperature_c - a.temperature_c)};
}

inline double grid_time(double t0, double rate_s, std::size_t k) {
  return t0 + static_cast<double>(k) * rate_s;
}

}  // namespace detail

/// Linear interpolation of V, I, T onto t0 + k * rate_s. Throughput is the
/// running integral of the deadbanded discharge current.
inline FeatureFrame resample_uniform(const CellSeries& series, double rate_s,
                                     double deadband_a = kDefaultDeadbandA) {
  if (!(rate_s > 0.0)) throw Error(Errc::InvalidConfig, "rate_s must be > 0");
  const auto& s = series.samples;
  if (s.size() < 2) throw Error(Errc::InvalidSeries, "series needs at least 2 samples");
  const double t0 = s.front().timestamp_s;
  const double t_end = s.back().timestamp_s;
  const auto n_rows = static_cast<std::size_t>(std::floor((t_end - t0) / rate_s + 1e-9)) + 1;
  if (n_rows < 2) throw Error(Errc::RateTooCoarse, "fewer than 2 resampled rows");

  const auto profile = discharge_throughput_profile(series, deadband_a);
  FeatureFrame frame;
  frame.cell_id = series.cell_id;
  frame.rate_s = rate_s;
  frame.rows.reserve(n_rows);
  std::size_t j = 0;     // interpolation interval [j, j + 1]
  std::size_t cell = 0;  // sample whose integration cell contains t
  for (std::size_t k = 0; k < n_rows; ++k) {
    const double t = std::min(detail::grid_time(t0, rate_s, k), t_end);
    while (j + 2 < s.size() && t > s[j + 1].timestamp_s) ++j;
    while (cell + 1 < s.size() && t > 0.5 * (s[cell].timestamp_s + s[cell + 1].timestamp_s)) ++cell;
    const double cell_left = cell == 0 ? s[0].timestamp_s : 0.5 * (s[cell - 1].timestamp_s + s[cell].timestamp_s);
    FeatureRow row;
    row.t = t;
    row.x = detail::lerp_channels(s[j], s[j + 1], t);
    row.cumulative_discharge_ah =
        profile[cell] + detail::effective_discharge_a(s[cell].current_a, deadband_a) * (t - cell_left) / 3600.0;
    frame.rows.push_back(row);
  }
  return frame;
}

/// Per-channel statistics of the training cells plus the scalar that maps
/// remaining Ah onto the unit-scale regression target.
struct NormStats {
  std::array<double, kNumChannels> mean{};
  std::array<double, kNumChannels> stddev{};
  double target_scale_ah = 1.0;

  std::vector<std::string> channel_names() const { return {kChannelNames.begin(), kChannelNames.end()}; }

  double normalize(std::size_t c, double x) const { return (x - mean[c]) / stddev[c]; }
  double denormalize(std::size_t c, double z) const { return z * stddev[c] + mean[c]; }
};

/// Global population mean / std over every row of every frame.
inline NormStats fit_normalizer(const std::vector<FeatureFrame>& frames) {
  if (frames.empty()) throw Error(Errc::EmptyInput, "no training frames");
  NormStats stats;
  std::size_t n = 0;
  std::array<double, kNumChannels> sum{};
  for (const auto& f : frames) {
    for (const auto& r : f.rows) {
      for (std::size_t c = 0; c < kNumChannels; ++c) sum[c] += r.x[c];
    }
    n += f.rows.size();
  }
  if (n == 0) throw Error(Errc::EmptyInput, "training frames have no rows");
  std::array<double, kNumChannels> sq{};
  for (std::size_t c = 0; c < kNumChannels; ++c) stats.mean[c] = sum[c] / static_cast<double>(n);
  for (const auto& f : frames) {
    for (const auto& r : f.rows) {
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        const double d = r.x[c] - stats.mean[c];
        sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    stats.stddev[c] = std::sqrt(sq[c] / static_cast<double>(n));
    if (!(stats.stddev[c] > 1e-12 * std::max(1.0, std::abs(stats.mean[c])))) {
      throw Error(Errc::ConstantChannel, std::string("channel ") + kChannelNames[c] + " is constant");
    }
  }
  return stats;
}

inline FeatureFrame apply_normalizer(const FeatureFrame& frame, const NormStats& stats) {
  FeatureFrame out = frame;
  for (auto& r : out.rows) {
    for (std::size_t c = 0; c < kNumChannels; ++c) r.x[c] = stats.normalize(c, r.x[c]);
  }
  return out;
}

inline FeatureFrame invert_normalizer(const FeatureFrame& frame, const NormStats& stats) {
  FeatureFrame out = frame;
  for (auto& r : out.rows) {
    for (std::size_t c = 0; c < kNumChannels; ++c) r.x[c] = stats.denormalize(c, r.x[c]);
  }
  return out;
}

struct WindowProvenance {
  std::string cell_id;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;  // exclusive
};

/// Windows stored flat: window w, row r, channel c at
/// features[(w * window_len + r) * kNumChannels + c].
struct WindowSet {
  std::size_t window_len = 0;
  std::size_t stride = 1;
  bool normalized = false;
  std::vector<double> features;
  std::vector<double> targets;  // remaining Ah at each window's last row
  std::vector<WindowProvenance> provenance;

  std::size_t count() const noexcept { return targets.size(); }
  const double* window(std::size_t w) const { return features.data() + w * window_len * kNumChannels; }

  void append(const WindowSet& other) {
    if (count() == 0 && window_len == 0) {
      window_len = other.window_len;
      stride = other.stride;
      normalized = other.normalized;
    }
    if (other.count() > 0 && count() > 0 && other.normalized != normalized) {
      throw Error(Errc::InvalidConfig, "cannot mix normalized and raw windows");
    }
    if (other.count() > 0 && other.window_len != window_len) {
      throw Error(Errc::ShapeMismatch, "window length differs");
    }
    features.insert(features.end(), other.features.begin(), other.features.end());
    targets.insert(targets.end(), other.targets.begin(), other.targets.end());
    provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
  }
};

/// Piecewise-linear remaining-Ah as a function of throughput, flat outside
/// the labeled range. `targets` must be sorted by throughput.
inline double interpolate_remaining(const std::vector<RulTarget>& targets, double throughput_ah) {
  if (targets.empty()) throw Error(Errc::EmptyInput, "no RUL targets");
  if (throughput_ah <= targets.front().cumulative_discharge_ah) return targets.front().remaining_ah;
  if (throughput_ah >= targets.back().cumulative_discharge_ah) return targets.back().remaining_ah;
  const auto it = std::upper_bound(targets.begin(), targets.end(), throughput_ah,
                                   [](double q, const RulTarget& t) { return q < t.cumulative_discharge_ah; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double frac = (throughput_ah - a.cumulative_discharge_ah) /
                      (b.cumulative_discharge_ah - a.cumulative_discharge_ah);
  return a.remaining_ah + frac * (b.remaining_ah - a.remaining_ah);
}

/// Sliding windows of `window_len` rows every `stride` rows. Features are
/// normalized when `norm` is given; targets come only from `targets` and the
/// frame's throughput column.
inline WindowSet make_windows(const FeatureFrame& frame, const std::vector<RulTarget>& targets,
                              std::size_t window_len, std::size_t stride, const NormStats* norm = nullptr) {
  if (window_len < 1 || stride < 1) throw Error(Errc::InvalidConfig, "window length and stride must be >= 1");
  if (frame.rows.size() < window_len) {
    throw Error(Errc::FrameTooShort, "frame '" + frame.cell_id + "' has " + std::to_string(frame.rows.size()) +
                                         " rows, window needs " + std::to_string(window_len));
  }
  WindowSet set;
  set.window_len = window_len;
  set.stride = stride;
  set.normalized = norm != nullptr;
  const std::size_t count = (frame.rows.size() - window_len) / stride + 1;
  set.features.reserve(count * window_len * kNumChannels);
  set.targets.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t begin = w * stride;
    for (std::size_t r = begin; r < begin + window_len; ++r) {
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        const double x = frame.rows[r].x[c];
        set.features.push_back(norm ? norm->normalize(c, x) : x);
      }
    }
    const auto& last = frame.rows[begin + window_len - 1];
    set.targets.push_back(interpolate_remaining(targets, last.cumulative_discharge_ah));
    set.provenance.push_back({frame.cell_id, begin, begin + window_len});
  }
  return set;
}

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Deterministic whole-cell split. Partition sizes use largest-remainder
/// rounding, then every partition is made non-empty by borrowing from the
/// largest one. Lists keep the input order.
inline SplitSpec split_by_cell(const std::vector<std::string>& cell_ids, const SplitRatios& ratios,
                               std::uint64_t seed) {
  const std::size_t n = cell_ids.size();
  if (n < 3) throw Error(Errc::TooFewCells, "need at least 3 cells, got " + std::to_string(n));
  const std::array<double, 3> r = {ratios.train, ratios.val, ratios.test};
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9 || r[0] < 0.0 || r[1] < 0.0 || r[2] < 0.0) {
    throw Error(Errc::InvalidConfig, "split ratios must be non-negative and sum to 1");
  }
  {
    auto sorted = cell_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(Errc::InvalidConfig, "duplicate cell id");
    }
  }

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    const double exact = r[p] * static_cast<double>(n);
    sizes[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[p] = exact - static_cast<double>(sizes[p]);
    assigned += sizes[p];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t p = 1; p < 3; ++p) {
      if (remainder[p] > remainder[best]) best = p;
    }
    ++sizes[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  for (std::size_t p = 0; p < 3; ++p) {
    if (sizes[p] > 0) continue;
    const auto largest = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    --sizes[largest];
    ++sizes[p];
  }

  // Fisher-Yates with raw engine output, so the order is identical across
  // standard library implementations.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

  std::vector<int> partition(n);
  for (std::size_t i = 0; i < n; ++i) {
    partition[order[i]] = i < sizes[0] ? 0 : (i < sizes[0] + sizes[1] ? 1 : 2);
  }
  SplitSpec split;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = partition[i] == 0 ? split.train : (partition[i] == 1 ? split.val : split.test);
    dst.push_back(cell_ids[i]);
  }
  return split;
}

}  // namespace batrul
