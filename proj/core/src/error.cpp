#include "vce/error.hpp"

namespace vce {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::UnknownClassDir: return "UnknownClassDir";
    case ErrorKind::UnreadableImage: return "UnreadableImage";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::WrongRangeState: return "WrongRangeState";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::FusionMismatch: return "FusionMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::IncompatibleConfig: return "IncompatibleConfig";
    case ErrorKind::DegenerateClass: return "DegenerateClass";
    case ErrorKind::PerplexityUnreachable: return "PerplexityUnreachable";
    case ErrorKind::EmptyHistory: return "EmptyHistory";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace vce
