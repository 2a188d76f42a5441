#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hmmcnn {

enum class ErrorKind {
  MissingSample,
  MalformedManifest,
  EmptyCorpus,
  InvalidDimension,
  SymbolOutOfRange,
  DegenerateSequence,
  SampleTooShort,
  ModelMismatch,
  EmptyInput,
  RaggedInput,
  DimensionMismatch,
  PayloadTooLarge,
  ShapeMismatch,
  StaleCache,
  LabelOutOfRange,
  LengthMismatch,
  EmptyMatrix,
  EmptyGrid,
  InvalidSpec,
  InvalidConfig,
  Io,
  NumericFailure,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Process exit code for an error kind: 2 configuration, 3 data, 4 numeric.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hmmcnn
