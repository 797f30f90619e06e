#pragma once

// Capacity, state-of-health, end-of-life and amp-hour RUL labels.
//
// Integration convention: every sample owns the time cell between the
// midpoints to its neighbours (half-width at the ends of the series). Summed
// over a whole series this is exactly the trapezoidal rule; per segment it
// partitions that integral, so segment counts add up and a rest segment of
// zero current integrates to zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "batrul/error.hpp"
#include "batrul/ingest.hpp"

namespace batrul {

struct CapacityPoint {
  double cumulative_discharge_ah = 0.0;
  double capacity_ah = 0.0;
};

struct SohPoint {
  double cumulative_discharge_ah = 0.0;
  double soh_pct = 0.0;
};

struct RulTarget {
  double cumulative_discharge_ah = 0.0;
  double remaining_ah = 0.0;
};

/// A discharge segment is a reference (full) discharge when its voltage
/// rises above v_high and falls below v_low.
struct FullDischargeCriteria {
  double v_high = 4.0;
  double v_low = 3.2;
};

inline constexpr double kManufacturerEolPct = 80.0;
inline constexpr double kPcoeEolPct = 70.0;

namespace detail {

/// Duration owned by sample k (seconds).
inline double sample_cell_width(const std::vector<RawSample>& s, std::size_t k) {
  const std::size_t n = s.size();
  if (n < 2) return 0.0;
  const double left = k == 0 ? s[0].timestamp_s : 0.5 * (s[k - 1].timestamp_s + s[k].timestamp_s);
  const double right = k + 1 == n ? s[n - 1].timestamp_s : 0.5 * (s[k].timestamp_s + s[k + 1].timestamp_s);
  return right - left;
}

inline double effective_discharge_a(double current_a, double deadband_a) {
  return current_a < -deadband_a ? -current_a : 0.0;
}

}  // namespace detail

inline void check_segment(const CellSeries& series, const CycleSegment& segment) {
  if (segment.start_idx >= segment.end_idx || segment.end_idx > series.samples.size()) {
    throw Error(Errc::SegmentOutOfRange, "segment [" + std::to_string(segment.start_idx) + ", " +
                                             std::to_string(segment.end_idx) + ") outside series of " +
                                             std::to_string(series.samples.size()) + " samples");
  }
  if (!segment.cell_id.empty() && !series.cell_id.empty() && segment.cell_id != series.cell_id) {
    throw Error(Errc::SegmentOutOfRange, "segment belongs to cell '" + segment.cell_id + "'");
  }
}

/// Charge moved during `segment`, in Ah: integral of |I| dt.
inline double coulomb_count(const CellSeries& series, const CycleSegment& segment) {
  check_segment(series, segment);
  double amp_seconds = 0.0;
  for (std::size_t k = segment.start_idx; k < segment.end_idx; ++k) {
    amp_seconds += std::abs(series.samples[k].current_a) * detail::sample_cell_width(series.samples, k);
  }
  return amp_seconds / 3600.0;
}

/// Cumulative discharge throughput (Ah) at the start of each sample's cell,
/// with one extra trailing entry holding the series total. Currents inside
/// the deadband count as zero.
inline std::vector<double> discharge_throughput_profile(const CellSeries& series,
                                                        double deadband_a = kDefaultDeadbandA) {
  const auto& s = series.samples;
  std::vector<double> profile(s.size() + 1, 0.0);
  double amp_seconds = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    profile[k] = amp_seconds / 3600.0;
    amp_seconds += detail::effective_discharge_a(s[k].current_a, deadband_a) * detail::sample_cell_width(s, k);
  }
  profile[s.size()] = amp_seconds / 3600.0;
  return profile;
}

inline bool is_reference_discharge(const CellSeries& series, const CycleSegment& segment,
                                   const FullDischargeCriteria& criteria) {
  if (segment.kind != CycleKind::Discharge) return false;
  double v_max = -1e300;
  double v_min = 1e300;
  for (std::size_t k = segment.start_idx; k < segment.end_idx; ++k) {
    v_max = std::max(v_max, series.samples[k].voltage_v);
    v_min = std::min(v_min, series.samples[k].voltage_v);
  }
  return v_max > criteria.v_high && v_min < criteria.v_low;
}

/// One point per reference discharge. The point is placed at the throughput
/// midway through its discharge, where the measured charge best represents
/// the capacity that was fading during the measurement.
inline std::vector<CapacityPoint> estimate_capacity_points(const CellSeries& series,
                                                           const std::vector<CycleSegment>& segments,
                                                           const FullDischargeCriteria& criteria = {}) {
  std::vector<CapacityPoint> points;
  double throughput = 0.0;
  for (const auto& seg : segments) {
    check_segment(series, seg);
    if (seg.kind != CycleKind::Discharge) continue;
    const double charge = coulomb_count(series, seg);
    if (is_reference_discharge(series, seg, criteria) && charge > 0.0) {
      points.push_back({throughput + 0.5 * charge, charge});
    }
    throughput += charge;
  }
  if (points.empty()) {
    throw Error(Errc::NoReferenceDischarges, "cell '" + series.cell_id + "' has no reference discharge");
  }
  return points;
}

inline std::vector<SohPoint> compute_soh(const std::vector<CapacityPoint>& points, double nominal_capacity_ah) {
  if (!(nominal_capacity_ah > 0.0)) throw Error(Errc::NonPositiveNominal, "nominal capacity must be > 0");
  std::vector<SohPoint> soh;
  soh.reserve(points.size());
  for (const auto& p : points) {
    const double pct = 100.0 * p.capacity_ah / nominal_capacity_ah;
    if (!(pct > 0.0 && pct <= 120.0)) {
      throw Error(Errc::RangeViolation, "SOH " + std::to_string(pct) + "% outside (0, 120]");
    }
    soh.push_back({p.cumulative_discharge_ah, pct});
  }
  return soh;
}

/// Throughput at which SOH first reaches `threshold_pct`, linearly
/// interpolated between the bracketing points; nullopt when never reached.
inline std::optional<double> detect_eol(const std::vector<SohPoint>& soh, double threshold_pct) {
  if (soh.empty()) throw Error(Errc::EmptyInput, "no SOH points");
  if (soh.front().soh_pct <= threshold_pct) return soh.front().cumulative_discharge_ah;
  for (std::size_t i = 1; i < soh.size(); ++i) {
    const auto& b = soh[i];
    if (b.soh_pct > threshold_pct) continue;
    const auto& a = soh[i - 1];
    const double frac = (a.soh_pct - threshold_pct) / (a.soh_pct - b.soh_pct);
    return a.cumulative_discharge_ah + frac * (b.cumulative_discharge_ah - a.cumulative_discharge_ah);
  }
  return std::nullopt;
}

inline std::vector<RulTarget> compute_rul_targets(double eol_throughput_ah, const std::vector<double>& queries) {
  std::vector<RulTarget> targets;
  targets.reserve(queries.size());
  for (const double q : queries) targets.push_back({q, std::max(0.0, eol_throughput_ah - q)});
  return targets;
}

/// The SOH history is not consulted once the EOL throughput is known.
inline std::vector<RulTarget> compute_rul_targets(const std::vector<SohPoint>& /*soh*/, double eol_throughput_ah,
                                                  const std::vector<double>& queries) {
  return compute_rul_targets(eol_throughput_ah, queries);
}

/// Reference cycles remaining after point `query_index` up to the EOL
/// crossing. Reporting shim for cycle-based comparisons only.
inline std::size_t cycle_rul_for_reference(const std::vector<SohPoint>& soh, std::size_t query_index,
                                           double eol_throughput_ah) {
  if (soh.empty()) throw Error(Errc::EmptyInput, "no SOH points");
  if (query_index >= soh.size()) throw Error(Errc::SegmentOutOfRange, "query index past last point");
  std::size_t count = 0;
  for (std::size_t j = query_index + 1; j < soh.size(); ++j) {
    if (soh[j].cumulative_discharge_ah <= eol_throughput_ah) ++count;
  }
  return count;
}

struct LabelOptions {
  double deadband_a = kDefaultDeadbandA;
  FullDischargeCriteria criteria;
  double threshold_pct = kManufacturerEolPct;
};

/// One JSONL label row. soh_pct is present only at reference-discharge
/// positions.
struct LabelRecord {
  std::string cell_id;
  double cumulative_discharge_ah = 0.0;
  std::optional<double> soh_pct;
  double remaining_ah = 0.0;
};

struct CellLabels {
  std::string cell_id;
  double nominal_capacity_ah = 0.0;
  std::vector<CapacityPoint> capacity;
  std::vector<SohPoint> soh;
  std::optional<double> eol_throughput_ah;
  double total_throughput_ah = 0.0;
  std::vector<LabelRecord> records;
  std::string censor_reason;

  bool censored() const noexcept { return !eol_throughput_ah.has_value(); }
};

/// Full labeling chain for one cell. Censored cells (no reference discharge
/// or SOH never reaching the threshold) carry no records.
inline CellLabels label_cell(const CellSeries& series, const LabelOptions& options = {}) {
  CellLabels out;
  out.cell_id = series.cell_id;
  out.nominal_capacity_ah = series.nominal_capacity_ah;
  const auto segments = segment_cycles(series, options.deadband_a);
  const auto profile = discharge_throughput_profile(series, options.deadband_a);
  out.total_throughput_ah = profile.back();
  try {
    out.capacity = estimate_capacity_points(series, segments, options.criteria);
  } catch (const Error& e) {
    if (e.code() != Errc::NoReferenceDischarges) throw;
    out.censor_reason = "no reference discharges";
    return out;
  }
  out.soh = compute_soh(out.capacity, series.nominal_capacity_ah);
  out.eol_throughput_ah = detect_eol(out.soh, options.threshold_pct);
  if (!out.eol_throughput_ah) {
    out.censor_reason = "SOH never reached " + std::to_string(options.threshold_pct) + "%";
    return out;
  }

  std::vector<double> positions = {0.0, *out.eol_throughput_ah, out.total_throughput_ah};
  for (const auto& p : out.soh) positions.push_back(p.cumulative_discharge_ah);
  for (const auto& seg : segments) {
    if (seg.kind == CycleKind::Discharge) positions.push_back(profile[seg.end_idx]);
  }
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  const auto targets = compute_rul_targets(*out.eol_throughput_ah, positions);
  std::size_t next_soh = 0;
  for (const auto& t : targets) {
    LabelRecord r{series.cell_id, t.cumulative_discharge_ah, std::nullopt, t.remaining_ah};
    while (next_soh < out.soh.size() && out.soh[next_soh].cumulative_discharge_ah < t.cumulative_discharge_ah) {
      ++next_soh;
    }
    if (next_soh < out.soh.size() && out.soh[next_soh].cumulative_discharge_ah == t.cumulative_discharge_ah) {
      r.soh_pct = out.soh[next_soh].soh_pct;
    }
    out.records.push_back(r);
  }
  return out;
}

}  // namespace batrul
