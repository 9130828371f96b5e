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

#include <cstdint>
#include <string>
#include <string_view>

namespace vmstitch {

using Bytes = std::uint64_t;

inline constexpr Bytes kKiB = Bytes{1} << 10;
inline constexpr Bytes kMiB = Bytes{1} << 20;
inline constexpr Bytes kGiB = Bytes{1} << 30;
inline constexpr Bytes kTiB = Bytes{1} << 40;

constexpr Bytes round_up(Bytes value, Bytes quantum) {
  return (value + quantum - 1) / quantum * quantum;
}

constexpr bool is_aligned(Bytes value, Bytes quantum) {
  return value % quantum == 0;
}

constexpr bool is_power_of_two(Bytes value) {
  return value != 0 && (value & (value - 1)) == 0;
}

// Parses "4096", "512B", "64KiB", "128MiB", "2GiB", "1TiB". Suffixes are
// binary and case-insensitive; "K"/"M"/"G"/"T" and "KB"/"MB"/... are
// accepted as aliases. Throws Error{kInvalidArgument} on malformed input or
// overflow.
Bytes parse_bytes(std::string_view text);

// Largest exact binary unit, e.g. 3 * kMiB -> "3MiB", 1536 -> "1536B".
std::string format_bytes(Bytes value);

}  // namespace vmstitch
