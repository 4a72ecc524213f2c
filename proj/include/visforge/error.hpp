#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace visforge {

enum class ErrorCode {
  ParseError,
  UnknownTool,
  SchemaError,
  DegenerateBox,
  Malformed,
  ArityMismatch,
  IncompleteChain,
  InvalidChain,
  ReservedToken,
  Unsatisfiable,
  CropTooSmall,
  BadFactor,
  InvalidImage,
  InvalidDialogue,
  MissingImage,
  Timeout,
  TransportError,
  FixtureExhausted,
  ProtocolError,
  LengthMismatch,
  InsufficientCandidates,
  UnresolvedImageDims,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as this type; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace visforge
