// Copyright 2026 The TrajFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TRAJFLOW_ERROR_HPP
#define TRAJFLOW_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajflow {

enum class ErrorKind {
  kDegenerateRotation,
  kInvalidSplit,
  kParseError,
  kIoError,
  kShapeMismatch,
  kNonFiniteGradient,
  kNonFiniteCost,
  kEmptyMask,
  kGenerationFailed,
  kLengthMismatch,
  kEmptyTrajectory,
  kBatchMismatch,
  kValidation,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateRotation: return "DegenerateRotation";
    case ErrorKind::kInvalidSplit: return "InvalidSplit";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::kNonFiniteCost: return "NonFiniteCost";
    case ErrorKind::kEmptyMask: return "EmptyMask";
    case ErrorKind::kGenerationFailed: return "GenerationFailed";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kEmptyTrajectory: return "EmptyTrajectory";
    case ErrorKind::kBatchMismatch: return "BatchMismatch";
    case ErrorKind::kValidation: return "Validation";
  }
  return "Unknown";
}

/// Library-wide exception. The kind is what callers branch on; the message
/// carries the diagnostic (row index, tensor name, offending file, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace trajflow

#endif  // TRAJFLOW_ERROR_HPP
