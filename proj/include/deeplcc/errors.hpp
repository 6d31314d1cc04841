#pragma once

#include <stdexcept>
#include <string>

namespace deeplcc {

enum class Errc {
  DimensionMismatch,
  DepthExceedsLength,
  InsufficientData,
  WellPosednessViolation,
  SingularMap,
  InvalidLiteralBounds,
  NotWarmedUp,
  ExcitationFailure,
  ConfigError,
  IoError,
};

/// Library-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DepthExceedsLength: return "DepthExceedsLength";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::WellPosednessViolation: return "WellPosednessViolation";
    case Errc::SingularMap: return "SingularMap";
    case Errc::InvalidLiteralBounds: return "InvalidLiteralBounds";
    case Errc::NotWarmedUp: return "NotWarmedUp";
    case Errc::ExcitationFailure: return "ExcitationFailure";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace deeplcc
