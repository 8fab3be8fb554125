// SPDX-License-Identifier: Apache-2.0
#include "gode/error.hpp"

namespace gode {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IsolatedNode: return "IsolatedNode";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoTraining: return "NoTraining";
    case ErrorCode::NodeNotInGraph: return "NodeNotInGraph";
  }
  return "Unknown";
}

}  // namespace gode
