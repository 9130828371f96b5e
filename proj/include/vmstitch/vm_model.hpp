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
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vmstitch/error.hpp"
#include "vmstitch/units.hpp"

namespace vmstitch {

// Simulated device memory: fixed-size physical chunks plus a low-level
// virtual memory interface (reserve / create / map / unmap / release) and a
// native byte-granular allocator sharing the same capacity. Every call is
// charged against a cost model normalized so one native malloc costs 1.0.

struct DeviceConfig {
  Bytes capacity_bytes = 80 * kGiB;
  Bytes chunk_size = 2 * kMiB;

  // Throws Error{kInvalidArgument}.
  void validate() const;
};

struct ChunkId {
  std::uint64_t value = 0;
  friend auto operator<=>(const ChunkId&, const ChunkId&) = default;
};

struct MappingId {
  std::uint64_t value = 0;
  friend auto operator<=>(const MappingId&, const MappingId&) = default;
};

struct NativeRegionId {
  std::uint64_t value = 0;
  friend auto operator<=>(const NativeRegionId&, const NativeRegionId&) = default;
};

struct VirtualRange {
  std::uint64_t base = 0;
  Bytes length = 0;

  std::uint64_t end() const { return base + length; }
  friend auto operator<=>(const VirtualRange&, const VirtualRange&) = default;
};

struct Mapping {
  MappingId id;
  VirtualRange range;
  std::vector<ChunkId> chunks;
};

enum class VmApi : std::uint8_t {
  kReserve,
  kCreate,
  kMap,
  kSetAccess,
  kNativeMalloc,
  kNativeFree,
  // Tear-down counterparts, charged like their set-up API.
  kUnmap,
  kAddressFree,
  kRelease,
};

inline constexpr std::size_t kVmApiCount = 9;

std::string_view to_string(VmApi api);
bool is_teardown(VmApi api);

// One column of the VMM breakdown: the cost of each API when building a
// 2 GiB allocation out of chunks of `chunk_size`, normalized to one
// native malloc.
struct CostColumn {
  Bytes chunk_size = 0;
  double reserve = 0.0;
  double create = 0.0;
  double map = 0.0;
  double set_access = 0.0;
};

inline constexpr Bytes kCostReferenceAllocation = 2 * kGiB;

class CostModel {
 public:
  // Measured breakdown at 2 MiB / 128 MiB / 1024 MiB chunks.
  CostModel();
  explicit CostModel(std::vector<CostColumn> columns);

  static std::vector<CostColumn> measured_columns();

  // Cost of one call. Reserve, address-free, and the native APIs are
  // charged per call; create/map/set_access and their tear-downs per chunk.
  // Chunk sizes between columns interpolate linearly in log2(chunk_size);
  // outside the measured range the nearest column is used.
  double cost(VmApi api, Bytes chunk_size) const;

  const std::vector<CostColumn>& columns() const { return columns_; }

 private:
  std::vector<CostColumn> columns_;
};

class Device {
 public:
  explicit Device(DeviceConfig config = {}, CostModel costs = {});

  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const DeviceConfig& config() const { return config_; }
  Bytes chunk_size() const { return config_.chunk_size; }

  // Fresh range above every range handed out so far; addresses are never
  // reused. Throws kInvalidLength for zero or non chunk-aligned lengths.
  VirtualRange reserve_address(Bytes length);
  // Returns a live, unmapped range. Throws kNotLive / kAlreadyMapped.
  void free_address(VirtualRange range);

  // All-or-nothing. Throws kPhysicalOom without side effects.
  std::vector<ChunkId> create_chunks(std::size_t count);
  // Destroys chunks that no live mapping references. Throws kNotLive,
  // kAlreadyMapped.
  void release_chunks(std::span<const ChunkId> chunks);

  // Throws kNotLive, kAlreadyMapped, kSizeMismatch.
  MappingId map(VirtualRange range, std::span<const ChunkId> chunks);
  // Unmaps and frees the address range; with `release_chunks`, chunks left
  // without any mapping are destroyed. Throws kNotLive.
  void unmap_release(MappingId mapping, bool release_chunks);

  // Throws kPhysicalOom / kInvalidLength.
  NativeRegionId native_malloc(Bytes size);
  // Throws kNotLive.
  void native_free(NativeRegionId region);

  // Accumulated cost of every call since construction, tear-down included.
  double charge_query() const { return total_cost_; }
  double teardown_cost() const;
  double api_cost(VmApi api) const { return api_costs_[static_cast<std::size_t>(api)]; }
  std::uint64_t api_calls(VmApi api) const { return api_calls_[static_cast<std::size_t>(api)]; }

  std::size_t live_chunk_count() const { return chunk_refs_.size(); }
  Bytes chunk_bytes() const { return chunk_refs_.size() * config_.chunk_size; }
  Bytes native_bytes() const { return native_bytes_; }
  Bytes free_capacity() const { return config_.capacity_bytes - chunk_bytes() - native_bytes_; }

  bool chunk_live(ChunkId chunk) const { return chunk_refs_.contains(chunk.value); }
  // Number of live mappings referencing the chunk (0 for dead chunks).
  std::uint32_t mapping_refs(ChunkId chunk) const;
  const Mapping& mapping(MappingId id) const;
  std::size_t live_mapping_count() const { return mappings_.size(); }
  std::vector<VirtualRange> live_ranges() const;

 private:
  struct RangeState {
    Bytes length = 0;
    bool mapped = false;
  };

  void charge(VmApi api, std::uint64_t calls);

  DeviceConfig config_;
  CostModel costs_;
  std::uint64_t next_address_ = 0;
  std::uint64_t next_chunk_ = 1;
  std::uint64_t next_mapping_ = 1;
  std::uint64_t next_region_ = 1;
  std::map<std::uint64_t, RangeState> ranges_;
  std::unordered_map<std::uint64_t, std::uint32_t> chunk_refs_;
  std::unordered_map<std::uint64_t, Mapping> mappings_;
  std::unordered_map<std::uint64_t, Bytes> native_regions_;
  Bytes native_bytes_ = 0;
  double total_cost_ = 0.0;
  std::array<double, kVmApiCount> api_costs_{};
  std::array<std::uint64_t, kVmApiCount> api_calls_{};
};

}  // namespace vmstitch
