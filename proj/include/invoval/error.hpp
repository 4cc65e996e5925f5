#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace invoval {

enum class ErrorKind {
  MalformedManifest,
  UnknownClass,
  BoxOutOfBounds,
  ImageLoad,
  InvalidAngle,
  InvalidParams,
  HandwrittenRecord,
  MalformedRow,
  MalformedResponse,
  EmptyAnalysis,
  EmptyDocument,
  BackendFailure,
  LengthMismatch,
  ZeroGold,
  IndexOutOfRange,
  LocationOutsideBox,
  Config,
  Io,
  Usage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedManifest: return "MalformedManifest";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::BoxOutOfBounds: return "BoxOutOfBounds";
    case ErrorKind::ImageLoad: return "ImageLoad";
    case ErrorKind::InvalidAngle: return "InvalidAngle";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::HandwrittenRecord: return "HandwrittenRecord";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::EmptyAnalysis: return "EmptyAnalysis";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::BackendFailure: return "BackendFailure";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ZeroGold: return "ZeroGold";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::LocationOutsideBox: return "LocationOutsideBox";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is the stable,
/// machine-checkable part; the message carries context (paths, line numbers).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace invoval
