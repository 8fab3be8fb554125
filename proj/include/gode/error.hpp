// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gode {

enum class ErrorCode {
  Io,
  MalformedLine,
  EmptyInput,
  EmptyResult,
  BadMagic,
  VersionMismatch,
  Truncated,
  DimensionMismatch,
  IsolatedNode,
  ZeroNorm,
  NonFinite,
  InvalidArgument,
  NoTraining,
  NodeNotInGraph,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-checkable error kind alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gode
