// Copyright 2026 The vmstitch Authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vmstitch {

enum class ErrorCode : std::uint8_t {
  kInvalidArgument,
  kInvalidLength,
  kPhysicalOom,
  kSizeMismatch,
  kAlreadyMapped,
  kNotLive,
  kOutOfMemory,
  kDoubleFree,
  kActiveBlocksRemain,
  kActiveBlock,
  kMisaligned,
  kRemainderBelowLimit,
  kTooFewMembers,
  kMemberBelowLimit,
  kMemberActive,
  kParseError,
  kUnbalancedFree,
  kDuplicateId,
  kActiveExceedsReserved,
  kLengthMismatch,
  kZeroDenominator,
  kOutOfOrder,
  kIoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Trace validation failures carry the 1-based line of the offending event.
class TraceError : public Error {
 public:
  TraceError(ErrorCode code, std::size_t line, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vmstitch
