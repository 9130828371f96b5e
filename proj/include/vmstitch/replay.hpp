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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmstitch/bfc_allocator.hpp"
#include "vmstitch/gmlake_allocator.hpp"
#include "vmstitch/metrics.hpp"
#include "vmstitch/trace.hpp"
#include "vmstitch/vm_model.hpp"

namespace vmstitch {

enum class AllocatorKind : std::uint8_t { kNative, kBfc, kGmlake };

std::string_view to_string(AllocatorKind kind);
// Accepts "native", "bfc", "gmlake". Throws Error{kInvalidArgument}.
AllocatorKind parse_allocator_kind(std::string_view name);

struct ReplayConfig {
  AllocatorKind allocator = AllocatorKind::kGmlake;
  DeviceConfig device;
  GmlakeConfig gmlake;
  BfcConfig bfc;
};

struct ReplayResult {
  ReplayReport report;
  std::vector<TimelinePoint> timeline;
  // Per event: the S1..S5 state of a stitching-allocator malloc, else 0.
  std::vector<std::uint8_t> event_states;
  // Diagnostic of the failing request when report.oom is set.
  std::string failure;
};

// Replays a validated trace on a fresh device until the end or the first
// out-of-memory. Throws TraceError for invalid traces.
ReplayResult replay(std::span<const TraceEvent> trace, const ReplayConfig& config);

}  // namespace vmstitch
