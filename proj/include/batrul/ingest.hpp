#pragma once

// Canonical cell logs: parsing, validation, serialization and segmentation
// into charge / discharge / rest runs.
//
// Current sign convention: positive = charge, negative = discharge.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "batrul/error.hpp"

namespace batrul {

inline constexpr std::string_view kCellCsvHeader =
    "timestamp_s,voltage_v,current_a,temperature_c";
inline constexpr double kDefaultDeadbandA = 0.05;

struct RawSample {
  double timestamp_s = 0.0;
  double voltage_v = 0.0;
  double current_a = 0.0;
  double temperature_c = 0.0;

  friend bool operator==(const RawSample&, const RawSample&) = default;
};

struct CellSeries {
  std::string cell_id;
  std::vector<RawSample> samples;
  double nominal_capacity_ah = 0.0;

  std::size_t size() const noexcept { return samples.size(); }
  friend bool operator==(const CellSeries&, const CellSeries&) = default;
};

enum class CycleKind { Charge, Discharge, Rest };

constexpr std::string_view to_string(CycleKind kind) noexcept {
  switch (kind) {
    case CycleKind::Charge: return "charge";
    case CycleKind::Discharge: return "discharge";
    case CycleKind::Rest: return "rest";
  }
  return "unknown";
}

/// Half-open sample range [start_idx, end_idx) of the parent series.
struct CycleSegment {
  CycleKind kind = CycleKind::Rest;
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;
  std::string cell_id;

  std::size_t length() const noexcept { return end_idx - start_idx; }
  friend bool operator==(const CycleSegment&, const CycleSegment&) = default;
};

namespace detail {

inline bool voltage_in_range(double v) { return v > 0.0 && v < 10.0; }
inline bool temperature_in_range(double t) { return t > -40.0 && t < 120.0; }

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

inline bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  // from_chars rejects a leading '+', which some loggers emit.
  if (text.front() == '+') text.remove_prefix(1);
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

inline void append_double(std::string& out, double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  out.append(buf.data(), ptr);
}

}  // namespace detail

/// Throws InvalidSeries unless the series satisfies the CellSeries invariants
/// (>= 2 samples, positive nominal capacity, strictly increasing timestamps,
/// voltage / temperature inside their physical windows).
inline void validate_series(const CellSeries& series) {
  if (series.samples.size() < 2) {
    throw Error(Errc::InvalidSeries, "cell '" + series.cell_id + "' has fewer than 2 samples");
  }
  if (!(series.nominal_capacity_ah > 0.0) || !std::isfinite(series.nominal_capacity_ah)) {
    throw Error(Errc::InvalidSeries, "nominal capacity must be > 0");
  }
  for (std::size_t i = 0; i < series.samples.size(); ++i) {
    const auto& s = series.samples[i];
    if (!(s.timestamp_s >= 0.0) || !std::isfinite(s.timestamp_s) || !std::isfinite(s.current_a)) {
      throw Error(Errc::RangeViolation, "sample " + std::to_string(i) + " has invalid time/current");
    }
    if (!detail::voltage_in_range(s.voltage_v) || !detail::temperature_in_range(s.temperature_c)) {
      throw Error(Errc::RangeViolation, "sample " + std::to_string(i) + " out of range");
    }
    if (i > 0 && !(s.timestamp_s > series.samples[i - 1].timestamp_s)) {
      throw Error(Errc::NonMonotonicTimestamp, "sample " + std::to_string(i));
    }
  }
}

/// Incremental row parser shared by the batch reader and streaming consumers.
/// Columns are located by header name; extra columns are ignored so logs that
/// carry derived quantities (SOC, SOH, ...) never reach the model.
class CellCsvReader {
 public:
  /// Consumes the header line (line 1). Throws EmptyFile / MalformedRow.
  explicit CellCsvReader(std::istream& in) : in_(in) {
    std::string header;
    if (!std::getline(in_, header)) throw Error(Errc::EmptyFile, "missing header", 1);
    line_no_ = 1;
    strip_cr(header);
    if (header.empty()) throw Error(Errc::EmptyFile, "missing header", 1);
    const auto names = detail::split_csv_line(header);
    n_fields_ = names.size();
    constexpr std::array<std::string_view, 4> required = {"timestamp_s", "voltage_v", "current_a",
                                                          "temperature_c"};
    for (std::size_t r = 0; r < required.size(); ++r) {
      bool found = false;
      for (std::size_t c = 0; c < names.size(); ++c) {
        if (names[c] == required[r]) {
          if (found) throw Error(Errc::MalformedRow, "duplicate column " + std::string(required[r]), 1);
          column_[r] = c;
          found = true;
        }
      }
      if (!found) throw Error(Errc::MalformedRow, "header lacks column " + std::string(required[r]), 1);
    }
  }

  /// Reads the next data row. Returns false at end of input. A trailing empty
  /// line is accepted; an empty line followed by more data is malformed.
  bool next(RawSample& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      strip_cr(line);
      if (line.empty()) {
        pending_blank_ = line_no_;
        continue;
      }
      if (pending_blank_ != 0) throw Error(Errc::MalformedRow, "blank line", pending_blank_);
      const auto fields = detail::split_csv_line(line);
      if (fields.size() != n_fields_) {
        throw Error(Errc::MalformedRow, "expected " + std::to_string(n_fields_) + " fields", line_no_);
      }
      std::array<double, 4> v{};
      for (std::size_t r = 0; r < 4; ++r) {
        if (!detail::parse_double(fields[column_[r]], v[r])) {
          throw Error(Errc::MalformedRow, "unparseable number '" + std::string(fields[column_[r]]) + "'",
                      line_no_);
        }
      }
      RawSample s{v[0], v[1], v[2], v[3]};
      if (s.timestamp_s < 0.0) throw Error(Errc::RangeViolation, "negative timestamp", line_no_);
      if (!detail::voltage_in_range(s.voltage_v)) {
        throw Error(Errc::RangeViolation, "voltage outside (0, 10) V", line_no_);
      }
      if (!detail::temperature_in_range(s.temperature_c)) {
        throw Error(Errc::RangeViolation, "temperature outside (-40, 120) C", line_no_);
      }
      if (has_prev_ && !(s.timestamp_s > prev_t_)) {
        throw Error(Errc::NonMonotonicTimestamp, "timestamp does not increase", line_no_);
      }
      has_prev_ = true;
      prev_t_ = s.timestamp_s;
      out = s;
      return true;
    }
    return false;
  }

  std::size_t line_number() const noexcept { return line_no_; }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
  std::size_t pending_blank_ = 0;
  std::size_t n_fields_ = 0;
  std::array<std::size_t, 4> column_{};
  bool has_prev_ = false;
  double prev_t_ = 0.0;
};

inline CellSeries parse_cell_csv(std::istream& source, double nominal_capacity_ah,
                                 std::string cell_id = {}) {
  if (!(nominal_capacity_ah > 0.0)) throw Error(Errc::InvalidSeries, "nominal capacity must be > 0");
  CellCsvReader reader(source);
  CellSeries series;
  series.cell_id = std::move(cell_id);
  series.nominal_capacity_ah = nominal_capacity_ah;
  RawSample s;
  while (reader.next(s)) series.samples.push_back(s);
  if (series.samples.empty()) throw Error(Errc::EmptyFile, "no data rows", reader.line_number());
  if (series.samples.size() < 2) throw Error(Errc::InvalidSeries, "a cell needs at least 2 samples");
  return series;
}

/// Canonical serialization: fixed header, shortest round-trip decimal
/// representation, LF endings.
inline void write_cell_csv(std::ostream& sink, const CellSeries& series) {
  std::string buf;
  buf.reserve(64 * (series.samples.size() + 1));
  buf.append(kCellCsvHeader);
  buf.push_back('\n');
  for (const auto& s : series.samples) {
    detail::append_double(buf, s.timestamp_s);
    buf.push_back(',');
    detail::append_double(buf, s.voltage_v);
    buf.push_back(',');
    detail::append_double(buf, s.current_a);
    buf.push_back(',');
    detail::append_double(buf, s.temperature_c);
    buf.push_back('\n');
  }
  sink.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

constexpr CycleKind classify_current(double current_a, double deadband_a) noexcept {
  if (current_a > deadband_a) return CycleKind::Charge;
  if (current_a < -deadband_a) return CycleKind::Discharge;
  return CycleKind::Rest;
}

/// Splits `series` into maximal runs of equal kind. Segments are ordered,
/// non-overlapping and cover [0, N).
inline std::vector<CycleSegment> segment_cycles(const CellSeries& series,
                                                double deadband_a = kDefaultDeadbandA) {
  if (!(deadband_a >= 0.0)) throw Error(Errc::InvalidConfig, "deadband must be >= 0");
  std::vector<CycleSegment> segments;
  const auto& samples = series.samples;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto kind = classify_current(samples[i].current_a, deadband_a);
    if (!segments.empty() && segments.back().kind == kind) {
      segments.back().end_idx = i + 1;
    } else {
      segments.push_back({kind, i, i + 1, series.cell_id});
    }
  }
  return segments;
}

}  // namespace batrul
