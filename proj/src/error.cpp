#include "rsfiqa/error.hpp"

namespace rsfiqa {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidAxis: return "InvalidAxis";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::IndivisibleInput: return "IndivisibleInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidL: return "InvalidL";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptMaskFile: return "CorruptMaskFile";
    case ErrorCode::UnparseableResponse: return "UnparseableResponse";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::CorruptCacheLine: return "CorruptCacheLine";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::TargetMismatch: return "TargetMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

}  // namespace rsfiqa
