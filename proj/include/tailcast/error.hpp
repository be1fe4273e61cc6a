/*
 * Copyright 2026 The Tailcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tailcast {

enum class ErrorCode {
  kIo,
  kParseError,
  kMissingColumn,
  kNonUniformGrid,
  kAllRowsDropped,
  kEmptyFrame,
  kUnknownMetric,
  kFrameTooShort,
  kUnknownSeverity,
  kEmptySeries,
  kMissingQosMetric,
  kOutOfRange,
  kShapeMismatch,
  kDomainError,
  kNotScalar,
  kMissingGrad,
  kInvalidMixture,
  kEmptyBatch,
  kEmptySplit,
  kDivergedLoss,
  kVersionMismatch,
  kCorruptFile,
  kSingleClass,
  kInvalidConfig,
  kUnsatisfiable,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonUniformGrid: return "NonUniformGrid";
    case ErrorCode::kAllRowsDropped: return "AllRowsDropped";
    case ErrorCode::kEmptyFrame: return "EmptyFrame";
    case ErrorCode::kUnknownMetric: return "UnknownMetric";
    case ErrorCode::kFrameTooShort: return "FrameTooShort";
    case ErrorCode::kUnknownSeverity: return "UnknownSeverity";
    case ErrorCode::kEmptySeries: return "EmptySeries";
    case ErrorCode::kMissingQosMetric: return "MissingQosMetric";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kNotScalar: return "NotScalar";
    case ErrorCode::kMissingGrad: return "MissingGrad";
    case ErrorCode::kInvalidMixture: return "InvalidMixture";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kUnsatisfiable: return "Unsatisfiable";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace tailcast
