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

#include "vmstitch/error.hpp"
#include "vmstitch/units.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <limits>
#include <utility>

namespace vmstitch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidLength: return "invalid-length";
    case ErrorCode::kPhysicalOom: return "physical-oom";
    case ErrorCode::kSizeMismatch: return "size-mismatch";
    case ErrorCode::kAlreadyMapped: return "already-mapped";
    case ErrorCode::kNotLive: return "not-live";
    case ErrorCode::kOutOfMemory: return "out-of-memory";
    case ErrorCode::kDoubleFree: return "double-free";
    case ErrorCode::kActiveBlocksRemain: return "active-blocks-remain";
    case ErrorCode::kActiveBlock: return "active-block";
    case ErrorCode::kMisaligned: return "misaligned";
    case ErrorCode::kRemainderBelowLimit: return "remainder-below-limit";
    case ErrorCode::kTooFewMembers: return "too-few-members";
    case ErrorCode::kMemberBelowLimit: return "member-below-limit";
    case ErrorCode::kMemberActive: return "member-active";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kUnbalancedFree: return "unbalanced-free";
    case ErrorCode::kDuplicateId: return "duplicate-id";
    case ErrorCode::kActiveExceedsReserved: return "active-exceeds-reserved";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kZeroDenominator: return "zero-denominator";
    case ErrorCode::kOutOfOrder: return "out-of-order";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown";
}

namespace {

constexpr std::array<std::pair<std::string_view, Bytes>, 13> kSuffixes{{
    {"", 1},        {"b", 1},        {"k", kKiB},     {"kb", kKiB},
    {"kib", kKiB},  {"m", kMiB},     {"mb", kMiB},    {"mib", kMiB},
    {"g", kGiB},    {"gb", kGiB},    {"gib", kGiB},   {"t", kTiB},
    {"tib", kTiB},
}};

}  // namespace

Bytes parse_bytes(std::string_view text) {
  const auto fail = [&] {
    return Error(ErrorCode::kInvalidArgument,
                 "cannot parse byte quantity '" + std::string(text) + "'");
  };
  std::uint64_t number = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, number);
  if (ec != std::errc{} || ptr == first) throw fail();

  std::string suffix;
  for (const char* p = ptr; p != last; ++p) {
    if (std::isspace(static_cast<unsigned char>(*p))) continue;
    suffix.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(*p))));
  }
  if (suffix == "tb") suffix = "tib";
  for (const auto& [name, scale] : kSuffixes) {
    if (suffix != name) continue;
    if (number > std::numeric_limits<Bytes>::max() / scale) throw fail();
    return number * scale;
  }
  throw fail();
}

std::string format_bytes(Bytes value) {
  constexpr std::array<std::pair<Bytes, std::string_view>, 4> kUnits{{
      {kTiB, "TiB"}, {kGiB, "GiB"}, {kMiB, "MiB"}, {kKiB, "KiB"}}};
  if (value != 0) {
    for (const auto& [scale, name] : kUnits) {
      if (value % scale == 0) return std::to_string(value / scale) + std::string(name);
    }
  }
  return std::to_string(value) + "B";
}

}  // namespace vmstitch
