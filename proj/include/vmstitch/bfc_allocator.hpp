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
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vmstitch/units.hpp"
#include "vmstitch/vm_model.hpp"

namespace vmstitch {

// Best-fit-with-coalescing caching allocator over native device regions.
//
// malloc searches the inactive blocks for the smallest one that fits
// (earliest-created on ties), splits off the unused tail, and only falls
// back to a native allocation of exactly the request when nothing fits.
// free never returns memory to the device; it marks the block inactive and
// merges it with inactive neighbours in the same region.

struct BfcConfig {
  Bytes round_quantum = 512;
};

struct BfcHandle {
  std::uint64_t value = 0;
  friend auto operator<=>(const BfcHandle&, const BfcHandle&) = default;
};

struct BfcBlockInfo {
  std::uint64_t region = 0;
  Bytes offset = 0;
  Bytes size = 0;
  bool active = false;
  friend bool operator==(const BfcBlockInfo&, const BfcBlockInfo&) = default;
};

struct BfcStats {
  Bytes active_bytes = 0;
  Bytes reserved_bytes = 0;
  std::map<Bytes, std::size_t> inactive_histogram;
  std::uint64_t regions_created = 0;
  std::uint64_t regions_released = 0;
};

class BfcAllocator {
 public:
  explicit BfcAllocator(Device& device, BfcConfig config = {});

  BfcAllocator(const BfcAllocator&) = delete;
  BfcAllocator& operator=(const BfcAllocator&) = delete;

  // Throws Error{kInvalidArgument} for zero, kOutOfMemory when the device
  // cannot supply a region even after cached regions are released.
  BfcHandle malloc(Bytes size);
  // Throws Error{kDoubleFree}.
  void free(BfcHandle handle);

  BfcStats stats() const;
  Bytes active_bytes() const { return active_bytes_; }
  Bytes reserved_bytes() const { return reserved_bytes_; }

  // Returns every region to the device. Throws kActiveBlocksRemain.
  void reset();
  // Natively frees regions consisting of a single inactive block; returns
  // the number of bytes given back.
  Bytes release_cached();

  Bytes round_size(Bytes size) const { return round_up(size, config_.round_quantum); }

  // Introspection.
  BfcBlockInfo block_info(BfcHandle handle) const;
  // Blocks of each region in address order, regions in creation order.
  std::vector<std::vector<BfcBlockInfo>> regions() const;

 private:
  struct Block {
    std::uint64_t region = 0;
    Bytes offset = 0;
    Bytes size = 0;
    bool active = false;
    std::uint64_t prev = 0;  // 0 = none
    std::uint64_t next = 0;
  };
  struct Region {
    NativeRegionId native;
    Bytes size = 0;
    std::uint64_t first_block = 0;
  };
  // (size, block id): ascending size, then creation order.
  using InactiveKey = std::tuple<Bytes, std::uint64_t>;

  std::uint64_t new_region(Bytes size);
  void release_region(std::uint64_t region_id);
  void absorb_next(std::uint64_t id);

  Device& device_;
  BfcConfig config_;
  std::uint64_t next_block_ = 1;
  std::uint64_t next_region_ = 1;
  std::unordered_map<std::uint64_t, Block> blocks_;
  std::map<std::uint64_t, Region> regions_;
  std::set<InactiveKey> inactive_;
  Bytes active_bytes_ = 0;
  Bytes reserved_bytes_ = 0;
  std::uint64_t regions_created_ = 0;
  std::uint64_t regions_released_ = 0;
};

}  // namespace vmstitch
