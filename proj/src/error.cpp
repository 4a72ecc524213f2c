#include "visforge/error.hpp"

namespace visforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::IncompleteChain: return "IncompleteChain";
    case ErrorCode::InvalidChain: return "InvalidChain";
    case ErrorCode::ReservedToken: return "ReservedToken";
    case ErrorCode::Unsatisfiable: return "Unsatisfiable";
    case ErrorCode::CropTooSmall: return "CropTooSmall";
    case ErrorCode::BadFactor: return "BadFactor";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::InvalidDialogue: return "InvalidDialogue";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::FixtureExhausted: return "FixtureExhausted";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::UnresolvedImageDims: return "UnresolvedImageDims";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace visforge
