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

#include "vmstitch/gmlake_allocator.hpp"

#include <algorithm>
#include <string>

namespace vmstitch {

GmlakeAllocator::GmlakeAllocator(Device& device, GmlakeConfig config)
    : device_(device), config_(config), small_(device, config.small_pool) {
  if (config_.fragmentation_limit < device_.chunk_size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "fragmentation limit must be at least one chunk (" +
                    format_bytes(device_.chunk_size()) + ")");
  }
  if (config_.spool_capacity && *config_.spool_capacity == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sPool capacity must be positive");
  }
  if (config_.small_alloc_threshold && *config_.small_alloc_threshold == 0) {
    throw Error(ErrorCode::kInvalidArgument, "small allocation threshold must be positive");
  }
}

Bytes GmlakeAllocator::small_alloc_threshold() const {
  return config_.small_alloc_threshold.value_or(device_.chunk_size());
}

Bytes GmlakeAllocator::spool_capacity() const {
  return config_.spool_capacity.value_or(device_.config().capacity_bytes);
}

// ------------------------------------------------------------ activity

void GmlakeAllocator::pblock_became_active(std::uint64_t id) {
  PBlock& p = pblocks_.at(id);
  ppool_inactive_.erase({p.size, id});
  for (std::uint64_t sid : p.stitched_into) {
    SBlock& s = sblocks_.at(sid);
    if (s.active_members++ == 0 && !s.directly_assigned) sblock_became_active(sid);
  }
}

void GmlakeAllocator::pblock_became_inactive(std::uint64_t id) {
  PBlock& p = pblocks_.at(id);
  ppool_inactive_.insert({p.size, id});
  for (std::uint64_t sid : p.stitched_into) {
    SBlock& s = sblocks_.at(sid);
    if (--s.active_members == 0 && !s.directly_assigned) sblock_became_inactive(sid);
  }
}

void GmlakeAllocator::sblock_became_active(std::uint64_t id) {
  const SBlock& s = sblocks_.at(id);
  spool_inactive_.erase({s.size, id});
  spool_lru_.erase({s.last_use_seq, id});
  inactive_sblock_bytes_ -= s.size;
}

void GmlakeAllocator::sblock_became_inactive(std::uint64_t id) {
  const SBlock& s = sblocks_.at(id);
  spool_inactive_.insert({s.size, id});
  spool_lru_.insert({s.last_use_seq, id});
  inactive_sblock_bytes_ += s.size;
}

void GmlakeAllocator::assign(const PoolEntry& entry) {
  if (entry.kind == BlockKind::kPBlock) {
    PBlock& p = pblocks_.at(entry.id);
    p.directly_assigned = true;
    p.last_use_seq = use_clock_;
    pblock_became_active(entry.id);
  } else {
    SBlock& s = sblocks_.at(entry.id);
    sblock_became_active(entry.id);
    s.directly_assigned = true;
    s.last_use_seq = use_clock_;
    for (std::uint64_t m : s.members) {
      pblocks_.at(m).held_by = entry.id;
      pblock_became_active(m);
    }
  }
  active_bytes_ += entry.size;
}

void GmlakeAllocator::release(const PoolEntry& entry) {
  if (entry.kind == BlockKind::kPBlock) {
    pblocks_.at(entry.id).directly_assigned = false;
    pblock_became_inactive(entry.id);
  } else {
    SBlock& s = sblocks_.at(entry.id);
    s.directly_assigned = false;
    for (std::uint64_t m : s.members) {
      pblocks_.at(m).held_by = 0;
      pblock_became_inactive(m);
    }
  }
  active_bytes_ -= entry.size;
}

void GmlakeAllocator::note_peaks() {
  peak_active_ = std::max(peak_active_, active_bytes());
  peak_reserved_ = std::max(peak_reserved_, reserved_bytes());
}

// ------------------------------------------------------- pool mutations

PBlockId GmlakeAllocator::alloc_pblock(Bytes size) {
  if (size == 0 || !is_aligned(size, device_.chunk_size())) {
    throw Error(ErrorCode::kMisaligned,
                "pBlock size " + std::to_string(size) + " is not a positive chunk multiple");
  }
  std::vector<ChunkId> chunks = device_.create_chunks(size / device_.chunk_size());
  const VirtualRange range = device_.reserve_address(size);
  const MappingId mapping = device_.map(range, chunks);

  const std::uint64_t id = next_pblock_++;
  PBlock p;
  p.range = range;
  p.mapping = mapping;
  p.chunks = std::move(chunks);
  p.size = size;
  pblocks_.emplace(id, std::move(p));
  ppool_.insert({size, id});
  ppool_inactive_.insert({size, id});
  pblock_bytes_ += size;
  return PBlockId{id};
}

PBlockId GmlakeAllocator::alloc_pblock_with_fallback(Bytes size) {
  try {
    return alloc_pblock(size);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kPhysicalOom) throw;
  }
  evict_all_sblocks();
  small_.release_cached();
  try {
    return alloc_pblock(size);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kPhysicalOom) throw;
    ++state_counts_[4];
    throw Error(ErrorCode::kOutOfMemory,
                "cannot allocate " + format_bytes(size) + " of new physical memory: " + e.what());
  }
}

void GmlakeAllocator::drop_sblock(std::uint64_t id) {
  SBlock& s = sblocks_.at(id);
  if (!s.active()) {
    spool_inactive_.erase({s.size, id});
    spool_lru_.erase({s.last_use_seq, id});
    inactive_sblock_bytes_ -= s.size;
  }
  spool_.erase({s.size, id});
  for (std::uint64_t m : s.members) pblocks_.at(m).stitched_into.erase(id);
  device_.unmap_release(s.mapping, /*release_chunks=*/false);
  sblocks_.erase(id);
}

std::pair<std::uint64_t, std::uint64_t> GmlakeAllocator::split_impl(std::uint64_t id,
                                                                    Bytes front_size) {
  const std::set<std::uint64_t> referencing = pblocks_.at(id).stitched_into;
  for (std::uint64_t sid : referencing) {
    drop_sblock(sid);
    ++invalidations_;
  }
  const PBlock old = std::move(pblocks_.at(id));

  const std::size_t front_chunks = front_size / device_.chunk_size();
  std::span<const ChunkId> all(old.chunks);
  std::pair<std::uint64_t, std::uint64_t> ids;
  for (int half = 0; half < 2; ++half) {
    std::span<const ChunkId> part =
        half == 0 ? all.first(front_chunks) : all.subspan(front_chunks);
    const Bytes size = part.size() * device_.chunk_size();
    const VirtualRange range = device_.reserve_address(size);
    const MappingId mapping = device_.map(range, part);
    const std::uint64_t new_id = next_pblock_++;
    PBlock p;
    p.range = range;
    p.mapping = mapping;
    p.chunks.assign(part.begin(), part.end());
    p.size = size;
    p.last_use_seq = old.last_use_seq;
    pblocks_.emplace(new_id, std::move(p));
    ppool_.insert({size, new_id});
    ppool_inactive_.insert({size, new_id});
    (half == 0 ? ids.first : ids.second) = new_id;
  }

  device_.unmap_release(old.mapping, /*release_chunks=*/false);
  ppool_.erase({old.size, id});
  ppool_inactive_.erase({old.size, id});
  pblocks_.erase(id);
  ++splits_;
  return ids;
}

std::pair<PBlockId, PBlockId> GmlakeAllocator::split(PBlockId block, Bytes front_size) {
  auto it = pblocks_.find(block.value);
  if (it == pblocks_.end()) throw Error(ErrorCode::kNotLive, "unknown pBlock");
  const PBlock& p = it->second;
  if (p.active()) throw Error(ErrorCode::kActiveBlock, "cannot split an active pBlock");
  if (front_size == 0 || front_size >= p.size || !is_aligned(front_size, device_.chunk_size())) {
    throw Error(ErrorCode::kMisaligned,
                "split point " + std::to_string(front_size) + " is not a chunk boundary inside " +
                    format_bytes(p.size));
  }
  if (p.size - front_size < config_.fragmentation_limit) {
    throw Error(ErrorCode::kRemainderBelowLimit,
                "remainder " + format_bytes(p.size - front_size) +
                    " is below the fragmentation limit");
  }
  auto [front, back] = split_impl(block.value, front_size);
  return {PBlockId{front}, PBlockId{back}};
}

std::uint64_t GmlakeAllocator::stitch_impl(std::span<const std::uint64_t> members) {
  std::vector<ChunkId> chunks;
  Bytes size = 0;
  for (std::uint64_t m : members) {
    const PBlock& p = pblocks_.at(m);
    chunks.insert(chunks.end(), p.chunks.begin(), p.chunks.end());
    size += p.size;
  }
  const VirtualRange range = device_.reserve_address(size);
  const MappingId mapping = device_.map(range, chunks);

  const std::uint64_t id = next_sblock_++;
  SBlock s;
  s.range = range;
  s.mapping = mapping;
  s.members.assign(members.begin(), members.end());
  s.size = size;
  s.last_use_seq = use_clock_;
  sblocks_.emplace(id, std::move(s));
  for (std::uint64_t m : members) pblocks_.at(m).stitched_into.insert(id);
  spool_.insert({size, id});
  sblock_became_inactive(id);
  ++stitches_;
  return id;
}

SBlockId GmlakeAllocator::stitch(std::span<const PBlockId> members) {
  std::vector<std::uint64_t> ids;
  ids.reserve(members.size());
  for (PBlockId m : members) {
    if (std::find(ids.begin(), ids.end(), m.value) != ids.end()) {
      throw Error(ErrorCode::kTooFewMembers, "stitch members must be distinct");
    }
    ids.push_back(m.value);
  }
  if (ids.size() < 2) throw Error(ErrorCode::kTooFewMembers, "stitching needs two pBlocks");
  for (std::uint64_t m : ids) {
    auto it = pblocks_.find(m);
    if (it == pblocks_.end()) throw Error(ErrorCode::kNotLive, "unknown pBlock");
    if (it->second.active()) throw Error(ErrorCode::kMemberActive, "cannot stitch an active pBlock");
    if (it->second.size < config_.fragmentation_limit) {
      throw Error(ErrorCode::kMemberBelowLimit,
                  format_bytes(it->second.size) + " pBlock is below the fragmentation limit");
    }
  }
  return SBlockId{stitch_impl(ids)};
}

std::size_t GmlakeAllocator::stitch_free() {
  std::size_t evicted = 0;
  const Bytes capacity = spool_capacity();
  while (inactive_sblock_bytes_ > capacity && !spool_lru_.empty()) {
    const std::uint64_t victim = spool_lru_.begin()->second;
    for (std::uint64_t m : sblocks_.at(victim).members) pblocks_.at(m).last_use_seq = 0;
    drop_sblock(victim);
    ++evicted;
  }
  evictions_ += evicted;
  return evicted;
}

std::size_t GmlakeAllocator::evict_all_sblocks() {
  std::size_t evicted = 0;
  while (!spool_lru_.empty()) {
    const std::uint64_t victim = spool_lru_.begin()->second;
    for (std::uint64_t m : sblocks_.at(victim).members) pblocks_.at(m).last_use_seq = 0;
    drop_sblock(victim);
    ++evicted;
  }
  evictions_ += evicted;
  return evicted;
}

BestFitResult GmlakeAllocator::best_fit(Bytes size) const {
  return vmstitch::best_fit(size, spool_inactive_, ppool_inactive_, config_.fragmentation_limit);
}

// ---------------------------------------------------------- malloc/free

TensorHandle GmlakeAllocator::malloc(Bytes size) {
  if (size == 0) throw Error(ErrorCode::kInvalidArgument, "malloc of zero bytes");

  const TensorHandle handle{next_tensor_++};
  if (size < small_alloc_threshold()) {
    const BfcHandle small = small_.malloc(size);
    const Bytes bound = small_.block_info(small).size;
    tensors_.emplace(handle.value,
                     TensorInfo{{BlockKind::kSmall, small.value, bound}, size, bound, std::nullopt});
    requested_bytes_ += size;
    ++small_allocs_;
    note_peaks();
    return handle;
  }

  stitch_free();
  ++use_clock_;
  const Bytes rounded = round_size(size);
  BestFitResult fit = best_fit(rounded);
  PoolEntry bound;

  switch (fit.state) {
    case AllocState::kExactMatch:
      bound = fit.candidates.front();
      break;

    case AllocState::kSingleBlock: {
      const PoolEntry& single = fit.candidates.front();
      if (single.size - rounded < config_.fragmentation_limit) {
        bound = single;
        break;
      }
      auto [front, back] = split_impl(single.id, rounded);
      if (rounded >= config_.fragmentation_limit) {
        const std::array<std::uint64_t, 2> pair{front, back};
        stitch_impl(pair);
      }
      bound = {BlockKind::kPBlock, front, rounded};
      break;
    }

    case AllocState::kMultipleBlocks: {
      std::vector<std::uint64_t> ids;
      Bytes total = 0;
      for (const PoolEntry& c : fit.candidates) {
        ids.push_back(c.id);
        total += c.size;
      }
      const Bytes overshoot = total - rounded;
      if (overshoot >= config_.fragmentation_limit) {
        const Bytes last_size = fit.candidates.back().size;
        ids.back() = split_impl(ids.back(), last_size - overshoot).first;
        total = rounded;
      }
      bound = {BlockKind::kSBlock, stitch_impl(ids), total};
      break;
    }

    case AllocState::kInsufficient:
    case AllocState::kOutOfMemory: {
      Bytes total = 0;
      std::vector<std::uint64_t> ids;
      for (const PoolEntry& c : fit.candidates) {
        ids.push_back(c.id);
        total += c.size;
      }
      const PBlockId fresh = alloc_pblock_with_fallback(rounded - total);
      if (ids.empty()) {
        bound = {BlockKind::kPBlock, fresh.value, rounded};
      } else {
        ids.push_back(fresh.value);
        bound = {BlockKind::kSBlock, stitch_impl(ids), rounded};
      }
      break;
    }
  }

  assign(bound);
  ++state_counts_[static_cast<std::size_t>(fit.state) - 1];
  tensors_.emplace(handle.value, TensorInfo{bound, size, rounded, fit.state});
  requested_bytes_ += size;
  note_peaks();
  return handle;
}

void GmlakeAllocator::free(TensorHandle handle) {
  auto it = tensors_.find(handle.value);
  if (it == tensors_.end()) {
    throw Error(ErrorCode::kDoubleFree,
                "tensor " + std::to_string(handle.value) + " is not allocated");
  }
  const TensorInfo& info = it->second;
  if (info.bound.kind == BlockKind::kSmall) {
    small_.free(BfcHandle{info.bound.id});
  } else {
    release(info.bound);
  }
  requested_bytes_ -= info.requested;
  tensors_.erase(it);
}

const TensorInfo& GmlakeAllocator::tensor(TensorHandle handle) const {
  auto it = tensors_.find(handle.value);
  if (it == tensors_.end()) throw Error(ErrorCode::kNotLive, "tensor is not allocated");
  return it->second;
}

// ------------------------------------------------------- introspection

GmlakeStats GmlakeAllocator::stats() const {
  GmlakeStats s;
  s.active_bytes = active_bytes();
  s.reserved_bytes = reserved_bytes();
  s.peak_active_bytes = peak_active_;
  s.peak_reserved_bytes = peak_reserved_;
  s.requested_bytes = requested_bytes_;
  s.small_pool_reserved_bytes = small_.reserved_bytes();
  for (const PoolKey& k : ppool_) ++s.pblock_histogram[k.size];
  for (const PoolKey& k : spool_) ++s.sblock_histogram[k.size];
  s.state_counts = state_counts_;
  s.small_allocs = small_allocs_;
  s.splits = splits_;
  s.stitches = stitches_;
  s.evictions = evictions_;
  s.invalidations = invalidations_;
  return s;
}

GmlakeSnapshot GmlakeAllocator::snapshot() const {
  GmlakeSnapshot snap;
  snap.ppool.reserve(ppool_.size());
  for (const PoolKey& k : ppool_) {
    const PBlock& p = pblocks_.at(k.id);
    PBlockView v{PBlockId{k.id}, p.range,  p.mapping,         p.chunks,       p.size,
                 p.directly_assigned, p.active(), k.id, p.last_use_seq, {}};
    for (std::uint64_t sid : p.stitched_into) v.stitched_into.push_back(SBlockId{sid});
    snap.ppool.push_back(std::move(v));
  }
  snap.spool.reserve(spool_.size());
  for (const PoolKey& k : spool_) {
    const SBlock& s = sblocks_.at(k.id);
    SBlockView v{SBlockId{k.id}, s.range, s.mapping, {}, s.size, s.directly_assigned,
                 s.active(),     k.id,    s.last_use_seq};
    for (std::uint64_t m : s.members) v.members.push_back(PBlockId{m});
    snap.spool.push_back(std::move(v));
  }
  snap.tensors.reserve(tensors_.size());
  for (const auto& [id, info] : tensors_) snap.tensors.emplace_back(TensorHandle{id}, info);
  std::sort(snap.tensors.begin(), snap.tensors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return snap;
}

}  // namespace vmstitch
