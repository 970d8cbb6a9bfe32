#include "valimetrics/error.hpp"

namespace valimetrics {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::DecodeError: return "DecodeError";
    case Errc::EncodeError: return "EncodeError";
    case Errc::EmptyIntersection: return "EmptyIntersection";
    case Errc::QualityOutOfRange: return "QualityOutOfRange";
    case Errc::ZeroEncodedSize: return "ZeroEncodedSize";
    case Errc::EmptySweep: return "EmptySweep";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::ShapeOverflow: return "ShapeOverflow";
    case Errc::ExtractorMismatch: return "ExtractorMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::EigenFailure: return "EigenFailure";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::ModelMismatch: return "ModelMismatch";
    case Errc::AllIgnored: return "AllIgnored";
    case Errc::ConstantSeries: return "ConstantSeries";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::IoError: return "IoError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace valimetrics
