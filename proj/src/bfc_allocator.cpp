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

#include "vmstitch/bfc_allocator.hpp"

#include <string>

namespace vmstitch {

BfcAllocator::BfcAllocator(Device& device, BfcConfig config) : device_(device), config_(config) {
  if (config_.round_quantum == 0) {
    throw Error(ErrorCode::kInvalidArgument, "rounding quantum must be positive");
  }
}

std::uint64_t BfcAllocator::new_region(Bytes size) {
  NativeRegionId native = device_.native_malloc(size);
  const std::uint64_t region_id = next_region_++;
  const std::uint64_t block_id = next_block_++;
  blocks_.emplace(block_id, Block{region_id, 0, size, false, 0, 0});
  regions_.emplace(region_id, Region{native, size, block_id});
  reserved_bytes_ += size;
  ++regions_created_;
  return block_id;
}

void BfcAllocator::release_region(std::uint64_t region_id) {
  auto it = regions_.find(region_id);
  const Block& only = blocks_.at(it->second.first_block);
  inactive_.erase({only.size, it->second.first_block});
  blocks_.erase(it->second.first_block);
  device_.native_free(it->second.native);
  reserved_bytes_ -= it->second.size;
  ++regions_released_;
  regions_.erase(it);
}

BfcHandle BfcAllocator::malloc(Bytes size) {
  if (size == 0) throw Error(ErrorCode::kInvalidArgument, "malloc of zero bytes");
  const Bytes rounded = round_size(size);

  std::uint64_t id = 0;
  auto fit = inactive_.lower_bound({rounded, 0});
  if (fit != inactive_.end()) {
    id = std::get<1>(*fit);
    inactive_.erase(fit);
  } else {
    try {
      id = new_region(rounded);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kPhysicalOom) throw;
      release_cached();
      try {
        id = new_region(rounded);
      } catch (const Error& retry) {
        if (retry.code() != ErrorCode::kPhysicalOom) throw;
        throw Error(ErrorCode::kOutOfMemory,
                    "caching allocator cannot serve " + format_bytes(rounded) + ": " +
                        retry.what());
      }
    }
  }

  Block& block = blocks_.at(id);
  if (block.size > rounded) {
    const std::uint64_t rest_id = next_block_++;
    Block rest{block.region, block.offset + rounded, block.size - rounded, false, id, block.next};
    if (block.next != 0) blocks_.at(block.next).prev = rest_id;
    block.next = rest_id;
    block.size = rounded;
    inactive_.insert({rest.size, rest_id});
    blocks_.emplace(rest_id, rest);
  }
  Block& chosen = blocks_.at(id);
  chosen.active = true;
  active_bytes_ += chosen.size;
  return BfcHandle{id};
}

// Merges the block after `id` into `id`; both must be inactive.
void BfcAllocator::absorb_next(std::uint64_t id) {
  Block& block = blocks_.at(id);
  const std::uint64_t next_id = block.next;
  const Block next = blocks_.at(next_id);
  inactive_.erase({next.size, next_id});
  block.size += next.size;
  block.next = next.next;
  if (next.next != 0) blocks_.at(next.next).prev = id;
  blocks_.erase(next_id);
}

void BfcAllocator::free(BfcHandle handle) {
  auto it = blocks_.find(handle.value);
  if (it == blocks_.end() || !it->second.active) {
    throw Error(ErrorCode::kDoubleFree, "block " + std::to_string(handle.value) + " is not active");
  }
  std::uint64_t id = handle.value;
  it->second.active = false;
  active_bytes_ -= it->second.size;

  if (const std::uint64_t next = it->second.next; next != 0 && !blocks_.at(next).active) {
    absorb_next(id);
  }
  if (const std::uint64_t prev = blocks_.at(id).prev; prev != 0 && !blocks_.at(prev).active) {
    inactive_.erase({blocks_.at(prev).size, prev});
    absorb_next(prev);
    id = prev;
  }
  inactive_.insert({blocks_.at(id).size, id});
}

Bytes BfcAllocator::release_cached() {
  std::vector<std::uint64_t> idle;
  for (const auto& [region_id, region] : regions_) {
    const Block& first = blocks_.at(region.first_block);
    if (!first.active && first.next == 0) idle.push_back(region_id);
  }
  Bytes released = 0;
  for (std::uint64_t region_id : idle) {
    released += regions_.at(region_id).size;
    release_region(region_id);
  }
  return released;
}

void BfcAllocator::reset() {
  if (active_bytes_ != 0) {
    throw Error(ErrorCode::kActiveBlocksRemain,
                format_bytes(active_bytes_) + " still allocated");
  }
  release_cached();
}

BfcStats BfcAllocator::stats() const {
  BfcStats s;
  s.active_bytes = active_bytes_;
  s.reserved_bytes = reserved_bytes_;
  for (const auto& [size, id] : inactive_) ++s.inactive_histogram[size];
  s.regions_created = regions_created_;
  s.regions_released = regions_released_;
  return s;
}

BfcBlockInfo BfcAllocator::block_info(BfcHandle handle) const {
  auto it = blocks_.find(handle.value);
  if (it == blocks_.end()) throw Error(ErrorCode::kNotLive, "unknown block");
  const Block& b = it->second;
  return {b.region, b.offset, b.size, b.active};
}

std::vector<std::vector<BfcBlockInfo>> BfcAllocator::regions() const {
  std::vector<std::vector<BfcBlockInfo>> out;
  out.reserve(regions_.size());
  for (const auto& [region_id, region] : regions_) {
    auto& blocks = out.emplace_back();
    for (std::uint64_t id = region.first_block; id != 0; id = blocks_.at(id).next) {
      const Block& b = blocks_.at(id);
      blocks.push_back({b.region, b.offset, b.size, b.active});
    }
  }
  return out;
}

}  // namespace vmstitch
