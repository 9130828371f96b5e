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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmstitch/units.hpp"

namespace vmstitch {

struct TimelinePoint {
  std::uint64_t seq = 0;
  Bytes active_bytes = 0;
  Bytes reserved_bytes = 0;
  friend bool operator==(const TimelinePoint&, const TimelinePoint&) = default;
};

struct ReplayReport {
  std::string allocator;
  Bytes peak_active = 0;
  Bytes peak_reserved = 0;
  // Peak of the bytes tensors asked for; the gap to peak_active is rounding
  // and unsplit-block padding, which counts as active.
  Bytes peak_requested = 0;
  double utilization_ratio = 1.0;
  double fragmentation_ratio = 0.0;
  double simulated_cost = 0.0;
  double teardown_cost = 0.0;
  bool oom = false;
  // Stitching allocator only: S1..S5 counts and the seq of the last malloc
  // not served by an exact match.
  std::optional<std::array<std::uint64_t, 5>> state_counts;
  std::optional<std::uint64_t> last_non_exact_seq;

  friend bool operator==(const ReplayReport&, const ReplayReport&) = default;
};

// Peak active over peak reserved; (0, 0) is 1.0. Throws
// Error{kActiveExceedsReserved}.
double utilization(Bytes peak_active, Bytes peak_reserved);

// (sum(baseline) - sum(candidate)) / sum(baseline) over paired workloads.
// Throws Error{kLengthMismatch} for unequal or empty lists and
// Error{kZeroDenominator} when the baseline sums to zero.
double mem_reduction_ratio(std::span<const Bytes> baseline_reserved,
                           std::span<const Bytes> candidate_reserved);

// Per-step memory series of one replay plus its running peaks.
class ReplayObservation {
 public:
  // Throws Error{kOutOfOrder} unless seq increases, and
  // Error{kActiveExceedsReserved}.
  void record_step(std::uint64_t seq, Bytes active, Bytes reserved);

  void note_requested(Bytes requested_live);
  void set_cost(double total, double teardown);
  void mark_oom() { oom_ = true; }
  void set_state_counts(const std::array<std::uint64_t, 5>& counts) { state_counts_ = counts; }
  void set_last_non_exact_seq(std::uint64_t seq) { last_non_exact_seq_ = seq; }

  Bytes peak_active() const { return peak_active_; }
  Bytes peak_reserved() const { return peak_reserved_; }
  bool oom() const { return oom_; }
  const std::vector<TimelinePoint>& timeline() const { return timeline_; }

  ReplayReport finalize(std::string allocator) const;

 private:
  std::vector<TimelinePoint> timeline_;
  Bytes peak_active_ = 0;
  Bytes peak_reserved_ = 0;
  Bytes peak_requested_ = 0;
  double cost_ = 0.0;
  double teardown_cost_ = 0.0;
  bool oom_ = false;
  std::optional<std::array<std::uint64_t, 5>> state_counts_;
  std::optional<std::uint64_t> last_non_exact_seq_;
};

std::string report_to_json(const ReplayReport& report);
// Throws Error{kParseError}.
ReplayReport report_from_json(std::string_view text);

// Header "seq,active_bytes,reserved_bytes", one row per step.
std::string timeline_csv(std::span<const TimelinePoint> timeline);

}  // namespace vmstitch
