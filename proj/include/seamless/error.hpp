#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seamless {

// Every failure the library reports carries one of these codes. The numeric
// values double as CLI exit codes, so they must stay stable.
enum class ErrorCode : int {
  InvalidArgument = 2,
  ParseError = 3,
  BehindCamera = 4,
  DistortionInversionDiverged = 5,
  InsufficientObservations = 6,
  DegenerateGeometry = 7,
  MissingPose = 8,
  TooFewCorrespondences = 9,
  ReflectionRequired = 10,
  GaugeNotFixed = 11,
  Underconstrained = 12,
  SingularNormalEquations = 13,
  ImageTooSmall = 14,
  DimensionMismatch = 15,
  NoCommonIds = 16,
  TooFewPoints = 17,
  InvalidSpec = 18,
  TimestampOutOfRange = 19,
  IoError = 20,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::DistortionInversionDiverged: return "DistortionInversionDiverged";
    case ErrorCode::InsufficientObservations: return "InsufficientObservations";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::MissingPose: return "MissingPose";
    case ErrorCode::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::ReflectionRequired: return "ReflectionRequired";
    case ErrorCode::GaugeNotFixed: return "GaugeNotFixed";
    case ErrorCode::Underconstrained: return "Underconstrained";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoCommonIds: return "NoCommonIds";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::TimestampOutOfRange: return "TimestampOutOfRange";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace seamless
