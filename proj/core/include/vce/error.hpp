#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vce {

enum class ErrorKind {
  InvalidArgument,
  IoError,
  ConfigError,
  EmptyClass,
  UnknownClassDir,
  UnreadableImage,
  TooFewSamples,
  WrongRangeState,
  ShapeMismatch,
  FusionMismatch,
  LabelOutOfRange,
  NonFiniteGradient,
  CorruptCheckpoint,
  IncompatibleConfig,
  DegenerateClass,
  PerplexityUnreachable,
  EmptyHistory,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so the
/// command layer can map it to a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vce
