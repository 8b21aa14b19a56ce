// Copyright 2026 The tmenhance Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tmenhance {

enum class ErrorKind {
  kEmptyInput,
  kOrderTooHigh,
  kDegenerateFrame,
  kLengthMismatch,
  kUnstableFilter,
  kFrameTooLong,
  kRootCountError,
  kNotOrdered,
  kInsufficientData,
  kNumericalFailure,
  kDimMismatch,
  kUnknownPhone,
  kConfigMismatch,
  kBadGeometry,
  kParseError,
  kIoError,
  kUnsupportedFormat,
  kAlignmentError,
  kMissingLabels,
  kNoTestData,
};

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kOrderTooHigh: return "OrderTooHigh";
    case ErrorKind::kDegenerateFrame: return "DegenerateFrame";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kUnstableFilter: return "UnstableFilter";
    case ErrorKind::kFrameTooLong: return "FrameTooLong";
    case ErrorKind::kRootCountError: return "RootCountError";
    case ErrorKind::kNotOrdered: return "NotOrdered";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kNumericalFailure: return "NumericalFailure";
    case ErrorKind::kDimMismatch: return "DimMismatch";
    case ErrorKind::kUnknownPhone: return "UnknownPhone";
    case ErrorKind::kConfigMismatch: return "ConfigMismatch";
    case ErrorKind::kBadGeometry: return "BadGeometry";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::kAlignmentError: return "AlignmentError";
    case ErrorKind::kMissingLabels: return "MissingLabels";
    case ErrorKind::kNoTestData: return "NoTestData";
  }
  return "Unknown";
}

// All library failures are reported through this type; callers switch on
// kind() rather than parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tmenhance
