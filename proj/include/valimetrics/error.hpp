#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace valimetrics {

enum class Errc {
  DecodeError,
  EncodeError,
  EmptyIntersection,
  QualityOutOfRange,
  ZeroEncodedSize,
  EmptySweep,
  DimensionMismatch,
  ImageTooSmall,
  ZeroVariance,
  BadMagic,
  TruncatedFile,
  ShapeOverflow,
  ExtractorMismatch,
  ShapeMismatch,
  TooFewSamples,
  EigenFailure,
  ZeroVector,
  ModelMismatch,
  AllIgnored,
  ConstantSeries,
  TooFewPoints,
  EmptyReport,
  IoError,
  ConfigError,
  ParseError,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so
// callers can turn a failed metric into an absent cell instead of aborting.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

}  // namespace valimetrics
