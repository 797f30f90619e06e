#pragma once

// Synthetic cell generator with a known capacity-fade law.
//
// The model is deliberately simple: SOC is coulomb-integrated against the
// current true capacity, capacity fades linearly in discharge throughput,
// terminal voltage is a piecewise-linear OCV(SOC) curve plus an IR term, and
// temperature follows a first-order lag towards ambient + Joule heating.
// Current is held constant over each sample period.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <future>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "batrul/error.hpp"
#include "batrul/ingest.hpp"

namespace batrul {

enum class SimProfile { ConstantCurrent, RandomizedPartial };

struct SocBounds {
  double low = 0.2;
  double high = 0.9;
};

struct NoiseStd {
  double voltage_v = 0.002;
  double current_a = 0.01;
  double temperature_c = 0.1;
};

struct SimConfig {
  std::string cell_id = "sim-000";
  double nominal_capacity_ah = 2.0;
  double fade_per_ah = 0.004;
  SimProfile profile = SimProfile::RandomizedPartial;
  double charge_rate_a = 1.0;
  double max_discharge_rate_a = 2.0;
  // Lower end of the randomized discharge current draw.
  double min_discharge_rate_a = 0.5;
  SocBounds soc_bounds;
  NoiseStd noise_std;
  double ambient_temp_c = 25.0;
  double sample_period_s = 10.0;
  std::uint64_t seed = 1;

  double internal_resistance_ohm = 0.05;
  // R = R0 * (1 + growth * (1 - C / C0))
  double resistance_growth = 2.0;
  double thermal_rise_c_per_w = 10.0;
  double thermal_time_constant_s = 600.0;
  // RandomizedPartial: a full reference cycle every this much discharge Ah.
  double reference_interval_ah = 5.0;
  double reference_current_a = 1.0;
  double rest_duration_s = 600.0;
  double max_duration_s = 5.0e6;
};

struct TruthPoint {
  double cumulative_discharge_ah = 0.0;
  double capacity_ah = 0.0;
  friend bool operator==(const TruthPoint&, const TruthPoint&) = default;
};

struct SimResult {
  CellSeries series;
  std::vector<TruthPoint> true_capacity_trace;
  // Internal discharge counter at the end of the run (zero-order hold).
  double total_discharge_ah = 0.0;
  friend bool operator==(const SimResult&, const SimResult&) = default;
};

/// Simulation stops once capacity falls to this fraction of nominal.
inline constexpr double kSimEndSohFraction = 0.6;

/// Synthetic open-circuit voltage: piecewise-linear through
/// (0, 3.0) (0.1, 3.5) (0.9, 4.0) (1.0, 4.2). Not fit to any chemistry.
inline double ocv_volts(double soc) {
  constexpr std::array<std::pair<double, double>, 4> anchors = {
      {{0.0, 3.0}, {0.1, 3.5}, {0.9, 4.0}, {1.0, 4.2}}};
  soc = std::clamp(soc, 0.0, 1.0);
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    if (soc <= anchors[i].first) {
      const auto [s0, v0] = anchors[i - 1];
      const auto [s1, v1] = anchors[i];
      return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
    }
  }
  return anchors.back().second;
}

/// Closed-form fade law, floored at zero.
inline double faded_capacity_ah(double nominal_ah, double fade_per_ah, double throughput_ah) {
  return std::max(0.0, nominal_ah * (1.0 - fade_per_ah * throughput_ah));
}

inline void validate_sim_config(const SimConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (!(c.nominal_capacity_ah > 0.0)) fail("nominal_capacity_ah must be > 0");
  if (!(c.fade_per_ah >= 0.0)) fail("fade_per_ah must be >= 0");
  if (!(c.sample_period_s > 0.0)) fail("sample_period_s must be > 0");
  if (!(c.soc_bounds.low >= 0.0 && c.soc_bounds.high <= 1.0 && c.soc_bounds.low < c.soc_bounds.high)) {
    fail("soc_bounds must satisfy 0 <= low < high <= 1");
  }
  if (!(c.charge_rate_a > 0.0)) fail("charge_rate_a must be > 0");
  if (!(c.max_discharge_rate_a > 0.0)) fail("max_discharge_rate_a must be > 0");
  if (!(c.min_discharge_rate_a > 0.0 && c.min_discharge_rate_a <= c.max_discharge_rate_a)) {
    fail("min_discharge_rate_a must be in (0, max_discharge_rate_a]");
  }
  if (!(c.noise_std.voltage_v >= 0.0 && c.noise_std.current_a >= 0.0 && c.noise_std.temperature_c >= 0.0)) {
    fail("noise_std entries must be >= 0");
  }
  if (!(c.internal_resistance_ohm >= 0.0) || !(c.resistance_growth >= 0.0)) fail("resistance must be >= 0");
  if (!(c.thermal_rise_c_per_w >= 0.0) || !(c.thermal_time_constant_s > 0.0)) fail("invalid thermal model");
  if (!(c.reference_interval_ah > 0.0) || !(c.reference_current_a > 0.0)) fail("invalid reference cycle");
  if (!(c.rest_duration_s >= 0.0)) fail("rest_duration_s must be >= 0");
  if (!(c.max_duration_s >= 2.0 * c.sample_period_s)) fail("max_duration_s must cover two samples");
  if (!(c.ambient_temp_c > -40.0 && c.ambient_temp_c < 120.0)) fail("ambient_temp_c outside (-40, 120)");
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Phase {
  CycleKind kind = CycleKind::Rest;
  double current_a = 0.0;   // magnitude
  double target_soc = 0.0;  // charge / discharge
  double rest_end_s = 0.0;  // rest
  bool reference = false;
};

class CellSimulator {
 public:
  explicit CellSimulator(const SimConfig& c)
      : cfg_(c), usage_rng_(c.seed), noise_rng_(splitmix64(c.seed ^ 0x6E6F697365ULL)) {}

  SimResult run() {
    SimResult result;
    result.series.cell_id = cfg_.cell_id;
    result.series.nominal_capacity_ah = cfg_.nominal_capacity_ah;
    result.true_capacity_trace.push_back({0.0, cfg_.nominal_capacity_ah});

    capacity_ = cfg_.nominal_capacity_ah;
    temperature_ = cfg_.ambient_temp_c;
    soc_ = 1.0;
    // Every profile opens with a rest at full charge followed by a full
    // discharge, so the fresh capacity is always measured.
    queue_rest(cfg_.rest_duration_s);
    queue_.push_back({CycleKind::Discharge, first_discharge_current(), 0.0, 0.0, true});

    const double dt = cfg_.sample_period_s;
    const double end_capacity = kSimEndSohFraction * cfg_.nominal_capacity_ah;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0;; ++k) {
      const double t = static_cast<double>(k) * dt;
      while (phase_done(t)) advance_phase(t);

      double current = 0.0;
      bool phase_finishes = false;
      if (phase_.kind != CycleKind::Rest) {
        const double sign = phase_.kind == CycleKind::Charge ? 1.0 : -1.0;
        const double full_step = phase_.current_a * dt / 3600.0 / capacity_;
        const double needed = std::abs(phase_.target_soc - soc_);
        if (full_step >= needed) {
          current = sign * needed * capacity_ * 3600.0 / dt;
          phase_finishes = true;
        } else {
          current = sign * phase_.current_a;
        }
      }

      const double resistance =
          cfg_.internal_resistance_ohm *
          (1.0 + cfg_.resistance_growth * (1.0 - capacity_ / cfg_.nominal_capacity_ah));
      RawSample s;
      s.timestamp_s = t;
      s.voltage_v = ocv_volts(soc_) + current * resistance;
      s.current_a = current;
      s.temperature_c = temperature_;
      if (cfg_.noise_std.voltage_v > 0.0) s.voltage_v += cfg_.noise_std.voltage_v * gauss(noise_rng_);
      if (cfg_.noise_std.current_a > 0.0) s.current_a += cfg_.noise_std.current_a * gauss(noise_rng_);
      if (cfg_.noise_std.temperature_c > 0.0) {
        s.temperature_c += cfg_.noise_std.temperature_c * gauss(noise_rng_);
      }
      result.series.samples.push_back(s);

      if (capacity_ <= end_capacity || t + dt > cfg_.max_duration_s) break;

      // Integrate over [t, t + dt).
      if (phase_finishes) {
        soc_ = phase_.target_soc;
        phase_.kind = CycleKind::Rest;
        phase_.rest_end_s = t + dt;  // done at next sample
      } else {
        soc_ = std::clamp(soc_ + current * dt / 3600.0 / capacity_, 0.0, 1.0);
      }
      if (current < 0.0) {
        discharged_ah_ += -current * dt / 3600.0;
        since_reference_ah_ += -current * dt / 3600.0;
        capacity_ = faded_capacity_ah(cfg_.nominal_capacity_ah, cfg_.fade_per_ah, discharged_ah_);
        if (phase_finishes) result.true_capacity_trace.push_back({discharged_ah_, capacity_});
      }
      const double heat_w = current * current * resistance;
      const double settle = cfg_.ambient_temp_c + cfg_.thermal_rise_c_per_w * heat_w;
      temperature_ += dt / cfg_.thermal_time_constant_s * (settle - temperature_);
    }
    if (result.true_capacity_trace.back().cumulative_discharge_ah != discharged_ah_) {
      result.true_capacity_trace.push_back({discharged_ah_, capacity_});
    }
    result.total_discharge_ah = discharged_ah_;
    return result;
  }

 private:
  double first_discharge_current() const {
    return cfg_.profile == SimProfile::ConstantCurrent ? cfg_.max_discharge_rate_a
                                                       : cfg_.reference_current_a;
  }

  bool phase_done(double t) const {
    if (phase_.kind == CycleKind::Rest) return t >= phase_.rest_end_s;
    return false;
  }

  void queue_rest(double duration_s) {
    queue_.push_back({CycleKind::Rest, 0.0, 0.0, duration_s, false});
  }

  void advance_phase(double t) {
    if (queue_.empty()) plan_next();
    Phase next = queue_.front();
    queue_.erase(queue_.begin());
    if (next.kind == CycleKind::Rest) next.rest_end_s = t + next.rest_end_s;
    phase_ = next;
  }

  void plan_next() {
    const auto& b = cfg_.soc_bounds;
    if (cfg_.profile == SimProfile::ConstantCurrent) {
      queue_.push_back({CycleKind::Charge, cfg_.charge_rate_a, 1.0, 0.0, false});
      queue_rest(cfg_.rest_duration_s);
      queue_.push_back({CycleKind::Discharge, cfg_.max_discharge_rate_a, 0.0, 0.0, true});
      queue_rest(cfg_.rest_duration_s);
      return;
    }
    if (since_reference_ah_ >= cfg_.reference_interval_ah) {
      since_reference_ah_ = 0.0;
      queue_.push_back({CycleKind::Charge, cfg_.charge_rate_a, 1.0, 0.0, false});
      queue_rest(cfg_.rest_duration_s);
      queue_.push_back({CycleKind::Discharge, cfg_.reference_current_a, 0.0, 0.0, true});
      queue_rest(cfg_.rest_duration_s);
      return;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double target = b.low + (b.high - b.low) * unit(usage_rng_);
    const double rest = cfg_.rest_duration_s * unit(usage_rng_);
    if (soc_ < b.high - 0.05 && (last_kind_ == CycleKind::Discharge || soc_ <= b.low + 0.05)) {
      if (target < soc_ + 0.05) target = b.high;
      queue_.push_back({CycleKind::Charge, cfg_.charge_rate_a, target, 0.0, false});
      last_kind_ = CycleKind::Charge;
    } else {
      if (target > soc_ - 0.05) target = b.low;
      const double current =
          cfg_.min_discharge_rate_a + (cfg_.max_discharge_rate_a - cfg_.min_discharge_rate_a) * unit(usage_rng_);
      queue_.push_back({CycleKind::Discharge, current, target, 0.0, false});
      last_kind_ = CycleKind::Discharge;
    }
    queue_rest(rest);
  }

  SimConfig cfg_;
  std::mt19937_64 usage_rng_;
  std::mt19937_64 noise_rng_;
  std::vector<Phase> queue_;
  Phase phase_{CycleKind::Rest, 0.0, 0.0, -1.0, false};
  CycleKind last_kind_ = CycleKind::Discharge;
  double soc_ = 1.0;
  double capacity_ = 0.0;
  double temperature_ = 0.0;
  double discharged_ah_ = 0.0;
  double since_reference_ah_ = 0.0;
};

}  // namespace detail

/// Deterministic for a fixed config (including seed).
inline SimResult simulate_cell(const SimConfig& config) {
  validate_sim_config(config);
  return detail::CellSimulator(config).run();
}

/// Per-cell variability applied by simulate_fleet.
struct FleetJitter {
  double fade_rel = 0.15;
  double rate_rel = 0.15;
  double ambient_abs_c = 5.0;
};

inline std::uint64_t fleet_cell_seed(std::uint64_t fleet_seed, std::size_t index) {
  return detail::splitmix64(fleet_seed * 0x100000001B3ULL + static_cast<std::uint64_t>(index) + 1);
}

inline std::string fleet_cell_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sim-%03zu", index);
  return buf;
}

/// The exact config simulate_fleet uses for member `index`.
inline SimConfig fleet_member_config(const SimConfig& base, std::uint64_t fleet_seed, std::size_t index,
                                     const FleetJitter& jitter = {}) {
  SimConfig c = base;
  c.seed = fleet_cell_seed(fleet_seed, index);
  c.cell_id = fleet_cell_id(index);
  std::mt19937_64 rng(detail::splitmix64(c.seed ^ 0x6A69747465ULL));
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  c.fade_per_ah *= 1.0 + jitter.fade_rel * sym(rng);
  const double rate_scale = 1.0 + jitter.rate_rel * sym(rng);
  c.max_discharge_rate_a *= rate_scale;
  c.min_discharge_rate_a *= rate_scale;
  c.charge_rate_a *= 1.0 + jitter.rate_rel * sym(rng);
  c.ambient_temp_c += jitter.ambient_abs_c * sym(rng);
  return c;
}

/// Cells are independent; `jobs > 1` runs them concurrently with identical
/// results to the serial path.
inline std::vector<SimResult> simulate_fleet(const SimConfig& base, std::size_t n_cells, std::uint64_t seed,
                                             const FleetJitter& jitter = {}, std::size_t jobs = 1) {
  if (n_cells == 0) throw Error(Errc::InvalidConfig, "n_cells must be >= 1");
  validate_sim_config(base);
  std::vector<SimConfig> configs;
  configs.reserve(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) {
    configs.push_back(fleet_member_config(base, seed, i, jitter));
    validate_sim_config(configs.back());
  }
  std::vector<SimResult> results(n_cells);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n_cells; ++i) results[i] = simulate_cell(configs[i]);
    return results;
  }
  for (std::size_t begin = 0; begin < n_cells; begin += jobs) {
    std::vector<std::future<SimResult>> batch;
    const std::size_t end = std::min(n_cells, begin + jobs);
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&configs, i] { return simulate_cell(configs[i]); }));
    }
    for (std::size_t i = begin; i < end; ++i) results[i] = batch[i - begin].get();
  }
  return results;
}

inline void write_truth_csv(std::ostream& sink, const SimResult& result) {
  std::string buf = "cumulative_discharge_ah,capacity_ah\n";
  for (const auto& p : result.true_capacity_trace) {
    detail::append_double(buf, p.cumulative_discharge_ah);
    buf.push_back(',');
    detail::append_double(buf, p.capacity_ah);
    buf.push_back('\n');
  }
  sink.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace batrul
