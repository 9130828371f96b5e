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
#include <optional>
#include <ranges>
#include <set>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vmstitch/bfc_allocator.hpp"
#include "vmstitch/units.hpp"
#include "vmstitch/vm_model.hpp"

namespace vmstitch {

struct GmlakeConfig {
  // Blocks below this size are never split off or stitched from the pool.
  Bytes fragmentation_limit = 128 * kMiB;
  // Inactive stitched bytes allowed before LRU eviction; device capacity
  // when unset.
  std::optional<Bytes> spool_capacity;
  // Requests below this go to the embedded caching pool; chunk size when
  // unset.
  std::optional<Bytes> small_alloc_threshold;
  BfcConfig small_pool;
};

struct PBlockId {
  std::uint64_t value = 0;
  friend auto operator<=>(const PBlockId&, const PBlockId&) = default;
};

struct SBlockId {
  std::uint64_t value = 0;
  friend auto operator<=>(const SBlockId&, const SBlockId&) = default;
};

struct TensorHandle {
  std::uint64_t value = 0;
  friend auto operator<=>(const TensorHandle&, const TensorHandle&) = default;
};

// Allocation states S1..S5.
enum class AllocState : std::uint8_t {
  kExactMatch = 1,
  kSingleBlock = 2,
  kMultipleBlocks = 3,
  kInsufficient = 4,
  kOutOfMemory = 5,
};

enum class BlockKind : std::uint8_t { kPBlock, kSBlock, kSmall };

struct PoolEntry {
  BlockKind kind = BlockKind::kPBlock;
  std::uint64_t id = 0;
  Bytes size = 0;
  friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

struct BestFitResult {
  AllocState state = AllocState::kInsufficient;
  std::vector<PoolEntry> candidates;
  friend bool operator==(const BestFitResult&, const BestFitResult&) = default;
};

// Element of a pool range passed to best_fit: anything with `id` and `size`.
template <class T>
concept PoolElement = requires(const T& t) {
  { t.id } -> std::convertible_to<std::uint64_t>;
  { t.size } -> std::convertible_to<Bytes>;
};

// Picks blocks for a request of `size` bytes from the inactive sBlocks and
// pBlocks, both given in descending size order.
//
//   1 exact match  - any block of exactly `size`, sBlocks searched first;
//   2 single block - the smallest pBlock larger than `size`;
//   3 multiple     - no pBlock is large enough, but greedily accumulating
//                    pBlocks from the largest down covers `size`;
//   4 insufficient - the accumulation falls short; the partial list is
//                    still returned.
//
// pBlocks below `stitch_floor` are never accumulated (they can still match
// exactly or serve as the single block).
template <std::ranges::input_range SRange, std::ranges::input_range PRange>
  requires PoolElement<std::ranges::range_value_t<SRange>> &&
           PoolElement<std::ranges::range_value_t<PRange>>
BestFitResult best_fit(Bytes size, const SRange& sblocks, const PRange& pblocks,
                       Bytes stitch_floor = 0) {
  for (const auto& b : sblocks) {
    if (b.size == size) return {AllocState::kExactMatch, {{BlockKind::kSBlock, b.id, b.size}}};
  }
  for (const auto& b : pblocks) {
    if (b.size == size) return {AllocState::kExactMatch, {{BlockKind::kPBlock, b.id, b.size}}};
  }

  BestFitResult result;
  Bytes total = 0;
  for (const auto& b : pblocks) {
    if (b.size >= size) {
      result.candidates.assign(1, {BlockKind::kPBlock, b.id, b.size});
      total = b.size;
    } else if (b.size < stitch_floor || total >= size) {
      break;
    } else {
      result.candidates.push_back({BlockKind::kPBlock, b.id, b.size});
      total += b.size;
    }
  }
  if (result.candidates.size() == 1 && total > size) {
    result.state = AllocState::kSingleBlock;
  } else if (total >= size) {
    result.state = AllocState::kMultipleBlocks;
  } else {
    result.state = AllocState::kInsufficient;
  }
  return result;
}

struct TensorInfo {
  PoolEntry bound;
  Bytes requested = 0;
  Bytes rounded = 0;
  // Unset for requests served by the small pool.
  std::optional<AllocState> state;
};

struct PBlockView {
  PBlockId id;
  VirtualRange range;
  MappingId mapping;
  std::vector<ChunkId> chunks;
  Bytes size = 0;
  bool directly_assigned = false;
  bool active = false;
  std::uint64_t creation_seq = 0;
  std::uint64_t last_use_seq = 0;
  std::vector<SBlockId> stitched_into;
};

struct SBlockView {
  SBlockId id;
  VirtualRange range;
  MappingId mapping;
  std::vector<PBlockId> members;
  Bytes size = 0;
  bool directly_assigned = false;
  bool active = false;
  std::uint64_t creation_seq = 0;
  std::uint64_t last_use_seq = 0;
};

// Pools in pool order plus every live tensor.
struct GmlakeSnapshot {
  std::vector<PBlockView> ppool;
  std::vector<SBlockView> spool;
  std::vector<std::pair<TensorHandle, TensorInfo>> tensors;
};

struct GmlakeStats {
  Bytes active_bytes = 0;
  Bytes reserved_bytes = 0;
  Bytes peak_active_bytes = 0;
  Bytes peak_reserved_bytes = 0;
  // Bytes asked for by live tensors, before any rounding.
  Bytes requested_bytes = 0;
  Bytes small_pool_reserved_bytes = 0;
  std::map<Bytes, std::size_t> pblock_histogram;
  std::map<Bytes, std::size_t> sblock_histogram;
  // Index i counts state S(i+1).
  std::array<std::uint64_t, 5> state_counts{};
  std::uint64_t small_allocs = 0;
  std::uint64_t splits = 0;
  std::uint64_t stitches = 0;
  std::uint64_t evictions = 0;
  std::uint64_t invalidations = 0;
};

// Virtual memory stitching allocator.
//
// Physical memory lives in pBlocks: each owns an exclusive run of device
// chunks behind its own virtual range. sBlocks map a further virtual range
// over the chunks of two or more pBlocks, so memory that is scattered
// physically can be handed out as one contiguous block. Blocks are only
// handed out whole; a pBlock is active when it or an sBlock containing it is
// assigned, and an sBlock is active when any member is.
//
// Freed memory is never returned to the device.
class GmlakeAllocator {
 public:
  explicit GmlakeAllocator(Device& device, GmlakeConfig config = {});

  GmlakeAllocator(const GmlakeAllocator&) = delete;
  GmlakeAllocator& operator=(const GmlakeAllocator&) = delete;

  // Throws Error{kInvalidArgument} for zero, kOutOfMemory once every
  // fallback is exhausted.
  TensorHandle malloc(Bytes size);
  // Throws Error{kDoubleFree}.
  void free(TensorHandle handle);

  // New inactive pBlock backed by fresh chunks. Throws kMisaligned,
  // kPhysicalOom (pools untouched).
  PBlockId alloc_pblock(Bytes size);
  // Replaces an inactive pBlock with two covering the same chunks; sBlocks
  // that referenced it are dropped. Throws kNotLive, kActiveBlock,
  // kMisaligned, kRemainderBelowLimit.
  std::pair<PBlockId, PBlockId> split(PBlockId block, Bytes front_size);
  // Throws kTooFewMembers, kNotLive, kMemberActive, kMemberBelowLimit.
  SBlockId stitch(std::span<const PBlockId> members);
  BestFitResult best_fit(Bytes size) const;
  // Evicts least recently used inactive sBlocks while their total size
  // exceeds the sPool capacity. Returns the number evicted.
  std::size_t stitch_free();

  GmlakeStats stats() const;
  GmlakeSnapshot snapshot() const;
  const TensorInfo& tensor(TensorHandle handle) const;

  const GmlakeConfig& config() const { return config_; }
  Bytes round_size(Bytes size) const { return round_up(size, device_.chunk_size()); }
  Bytes small_alloc_threshold() const;
  Bytes spool_capacity() const;
  Bytes active_bytes() const { return active_bytes_ + small_.active_bytes(); }
  Bytes reserved_bytes() const { return pblock_bytes_ + small_.reserved_bytes(); }
  Bytes inactive_sblock_bytes() const { return inactive_sblock_bytes_; }

  const Device& device() const { return device_; }

 private:
  struct PBlock {
    VirtualRange range;
    MappingId mapping;
    std::vector<ChunkId> chunks;
    Bytes size = 0;
    bool directly_assigned = false;
    std::uint64_t held_by = 0;  // assigned sBlock containing this, 0 = none
    std::uint64_t last_use_seq = 0;
    std::set<std::uint64_t> stitched_into;

    bool active() const { return directly_assigned || held_by != 0; }
  };
  struct SBlock {
    VirtualRange range;
    MappingId mapping;
    std::vector<std::uint64_t> members;
    Bytes size = 0;
    bool directly_assigned = false;
    std::uint64_t last_use_seq = 0;
    std::size_t active_members = 0;

    bool active() const { return directly_assigned || active_members > 0; }
  };
  // Descending size, then creation order.
  struct PoolKey {
    Bytes size = 0;
    std::uint64_t id = 0;
    friend bool operator<(const PoolKey& a, const PoolKey& b) {
      return a.size != b.size ? a.size > b.size : a.id < b.id;
    }
  };
  using LruKey = std::pair<std::uint64_t, std::uint64_t>;  // (last_use_seq, id)

  PBlockId alloc_pblock_with_fallback(Bytes size);
  std::pair<std::uint64_t, std::uint64_t> split_impl(std::uint64_t id, Bytes front_size);
  std::uint64_t stitch_impl(std::span<const std::uint64_t> members);
  std::size_t evict_all_sblocks();
  void drop_sblock(std::uint64_t id);

  void pblock_became_active(std::uint64_t id);
  void pblock_became_inactive(std::uint64_t id);
  void sblock_became_active(std::uint64_t id);
  void sblock_became_inactive(std::uint64_t id);

  void assign(const PoolEntry& entry);
  void release(const PoolEntry& entry);
  void note_peaks();

  Device& device_;
  GmlakeConfig config_;
  BfcAllocator small_;

  std::uint64_t next_pblock_ = 1;
  std::uint64_t next_sblock_ = 1;
  std::uint64_t next_tensor_ = 1;
  std::uint64_t use_clock_ = 0;

  std::unordered_map<std::uint64_t, PBlock> pblocks_;
  std::unordered_map<std::uint64_t, SBlock> sblocks_;
  std::set<PoolKey> ppool_;
  std::set<PoolKey> ppool_inactive_;
  std::set<PoolKey> spool_;
  std::set<PoolKey> spool_inactive_;
  std::set<LruKey> spool_lru_;
  std::unordered_map<std::uint64_t, TensorInfo> tensors_;

  Bytes pblock_bytes_ = 0;
  Bytes active_bytes_ = 0;
  Bytes requested_bytes_ = 0;
  Bytes inactive_sblock_bytes_ = 0;
  Bytes peak_active_ = 0;
  Bytes peak_reserved_ = 0;
  std::array<std::uint64_t, 5> state_counts_{};
  std::uint64_t small_allocs_ = 0;
  std::uint64_t splits_ = 0;
  std::uint64_t stitches_ = 0;
  std::uint64_t evictions_ = 0;
  std::uint64_t invalidations_ = 0;
};

}  // namespace vmstitch
