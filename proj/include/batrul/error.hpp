#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace batrul {

enum class Errc {
  MalformedRow,
  NonMonotonicTimestamp,
  RangeViolation,
  EmptyFile,
  InvalidSeries,
  InvalidConfig,
  SegmentOutOfRange,
  NoReferenceDischarges,
  NonPositiveNominal,
  EmptyInput,
  RateTooCoarse,
  ConstantChannel,
  FrameTooShort,
  TooFewCells,
  ShapeMismatch,
  NonFinite,
  EmptyTrainingSet,
  DivergedLoss,
  VersionMismatch,
  CorruptCheckpoint,
  Io,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case Errc::RangeViolation: return "RangeViolation";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::InvalidSeries: return "InvalidSeries";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::SegmentOutOfRange: return "SegmentOutOfRange";
    case Errc::NoReferenceDischarges: return "NoReferenceDischarges";
    case Errc::NonPositiveNominal: return "NonPositiveNominal";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::RateTooCoarse: return "RateTooCoarse";
    case Errc::ConstantChannel: return "ConstantChannel";
    case Errc::FrameTooShort: return "FrameTooShort";
    case Errc::TooFewCells: return "TooFewCells";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFinite: return "NonFinite";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. `line()` is the 1-based input
/// line for parse errors and 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        line_(line) {}

  Errc code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Errc code_;
  std::size_t line_;
};

}  // namespace batrul
