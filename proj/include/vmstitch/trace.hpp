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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmstitch/units.hpp"

namespace vmstitch {

enum class TraceOp : std::uint8_t { kMalloc, kFree };

struct TraceEvent {
  std::uint64_t seq = 0;
  TraceOp op = TraceOp::kMalloc;
  std::uint64_t id = 0;
  Bytes size = 0;  // 0 for frees

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using Trace = std::vector<TraceEvent>;

// JSON Lines, one event per line, exactly the fields
//   {"seq":1,"op":"malloc","id":7,"size":4194304}
//   {"seq":2,"op":"free","id":7}
// Throws TraceError{kParseError | kUnbalancedFree | kDuplicateId | kOutOfOrder}
// naming the 1-based line.
Trace parse_trace(std::istream& in);
Trace parse_trace(std::string_view text);
Trace read_trace_file(const std::filesystem::path& path);

// Checks an in-memory trace against the same rules as the parser; the
// reported line is the event's 1-based position.
void validate_trace(std::span<const TraceEvent> trace);

std::string serialize_event(const TraceEvent& event);
std::string serialize_trace(std::span<const TraceEvent> trace);
void write_trace_file(const std::filesystem::path& path, std::span<const TraceEvent> trace);

// Generated sizes are clamped to this range.
inline constexpr Bytes kMinGeneratedSize = 2 * kMiB;
inline constexpr Bytes kMaxGeneratedSize = 2 * kGiB;

struct SizeDistribution {
  Bytes mean = 93 * kMiB;
  double sigma = 0.5;  // log-normal shape; 0 gives a constant size
};

struct Irregularity {
  // Short-lived extra allocations per iteration, as a fraction of the
  // iteration's allocations.
  double extra_alloc_fraction = 0.0;
  // Fraction of allocations that are freed and re-allocated at a shifted
  // size mid-iteration; also the fraction of perturbed positions in the
  // backward free order.
  double interleave_fraction = 0.0;
};

struct GeneratorParams {
  std::size_t iterations = 10;
  std::size_t allocs_per_iteration = 460;
  SizeDistribution size;
  Irregularity irregularity;
  std::uint64_t seed = 0;

  // Throws Error{kInvalidArgument}.
  void validate() const;
};

// Named parameter sets: "regular-desk" (460 allocations per iteration,
// 93 MiB mean) and "irregular-desk" (same skeleton at 85 MiB mean plus
// extra and re-sized allocations, about 760 per iteration). Throws
// Error{kInvalidArgument} for unknown names.
GeneratorParams generator_preset(std::string_view name);
std::vector<std::string> generator_preset_names();

// Regular training: every iteration allocates the same sequence of sizes
// and frees it in reverse order.
Trace gen_periodic(const GeneratorParams& params);

// The periodic skeleton plus short-lived extra allocations inside the
// forward phase, free/re-allocate pairs at shifted sizes, and a partially
// shuffled backward phase. Identical to gen_periodic when both
// irregularity fractions are zero.
Trace gen_irregular(const GeneratorParams& params);

// Allocation pattern that leaves `unit * 5` free in two non-adjacent holes
// of a `unit * 10` device and then requests `unit * 5`.
Trace gen_adversarial(Bytes unit);

struct TraceStats {
  std::size_t alloc_count = 0;
  std::size_t free_count = 0;
  double mean_size = 0.0;
  Bytes total_bytes = 0;
  Bytes peak_live_bytes = 0;
};

TraceStats trace_stats(std::span<const TraceEvent> trace);

}  // namespace vmstitch
