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

#include "vmstitch/vm_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vmstitch {

void DeviceConfig::validate() const {
  if (chunk_size < 2 * kMiB || !is_power_of_two(chunk_size)) {
    throw Error(ErrorCode::kInvalidArgument,
                "chunk size must be a power of two >= 2MiB, got " + format_bytes(chunk_size));
  }
  if (capacity_bytes == 0 || !is_aligned(capacity_bytes, chunk_size)) {
    throw Error(ErrorCode::kInvalidArgument,
                "capacity must be a positive multiple of the chunk size, got " +
                    format_bytes(capacity_bytes));
  }
}

std::string_view to_string(VmApi api) {
  switch (api) {
    case VmApi::kReserve: return "reserve";
    case VmApi::kCreate: return "create";
    case VmApi::kMap: return "map";
    case VmApi::kSetAccess: return "set_access";
    case VmApi::kNativeMalloc: return "native_malloc";
    case VmApi::kNativeFree: return "native_free";
    case VmApi::kUnmap: return "unmap";
    case VmApi::kAddressFree: return "address_free";
    case VmApi::kRelease: return "release";
  }
  return "unknown";
}

bool is_teardown(VmApi api) {
  return api == VmApi::kUnmap || api == VmApi::kAddressFree || api == VmApi::kRelease;
}

// -------------------------------------------------------------- CostModel

std::vector<CostColumn> CostModel::measured_columns() {
  return {
      {2 * kMiB, 0.003, 18.1, 0.70, 96.8},
      {128 * kMiB, 0.003, 0.89, 0.01, 8.2},
      {1024 * kMiB, 0.002, 0.79, 0.002, 0.7},
  };
}

CostModel::CostModel() : CostModel(measured_columns()) {}

CostModel::CostModel(std::vector<CostColumn> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw Error(ErrorCode::kInvalidArgument, "cost model needs a column");
  for (const auto& c : columns_) {
    if (c.chunk_size == 0 || !is_power_of_two(c.chunk_size) ||
        c.chunk_size > kCostReferenceAllocation) {
      throw Error(ErrorCode::kInvalidArgument, "cost column chunk size out of range");
    }
    if (c.reserve < 0 || c.create < 0 || c.map < 0 || c.set_access < 0) {
      throw Error(ErrorCode::kInvalidArgument, "costs must be non-negative");
    }
  }
  std::sort(columns_.begin(), columns_.end(),
            [](const CostColumn& a, const CostColumn& b) { return a.chunk_size < b.chunk_size; });
}

namespace {

// Per-call (reserve) or per-chunk (everything else) cost in one column.
double unit_cost(const CostColumn& column, VmApi api) {
  const double chunks_per_reference =
      static_cast<double>(kCostReferenceAllocation / column.chunk_size);
  switch (api) {
    case VmApi::kReserve:
    case VmApi::kAddressFree:
      return column.reserve;
    case VmApi::kCreate:
    case VmApi::kRelease:
      return column.create / chunks_per_reference;
    case VmApi::kMap:
    case VmApi::kUnmap:
      return column.map / chunks_per_reference;
    case VmApi::kSetAccess:
      return column.set_access / chunks_per_reference;
    case VmApi::kNativeMalloc:
    case VmApi::kNativeFree:
      return 1.0;
  }
  return 0.0;
}

}  // namespace

double CostModel::cost(VmApi api, Bytes chunk_size) const {
  if (api == VmApi::kNativeMalloc || api == VmApi::kNativeFree) return 1.0;
  if (chunk_size <= columns_.front().chunk_size) return unit_cost(columns_.front(), api);
  if (chunk_size >= columns_.back().chunk_size) return unit_cost(columns_.back(), api);
  auto upper = std::find_if(columns_.begin(), columns_.end(),
                            [&](const CostColumn& c) { return c.chunk_size >= chunk_size; });
  if (upper->chunk_size == chunk_size) return unit_cost(*upper, api);
  const CostColumn& lo = *std::prev(upper);
  const CostColumn& hi = *upper;
  const double x = std::log2(static_cast<double>(chunk_size));
  const double x0 = std::log2(static_cast<double>(lo.chunk_size));
  const double x1 = std::log2(static_cast<double>(hi.chunk_size));
  const double t = (x - x0) / (x1 - x0);
  return unit_cost(lo, api) + t * (unit_cost(hi, api) - unit_cost(lo, api));
}

// ----------------------------------------------------------------- Device

Device::Device(DeviceConfig config, CostModel costs)
    : config_(config), costs_(std::move(costs)) {
  config_.validate();
}

void Device::charge(VmApi api, std::uint64_t calls) {
  if (calls == 0) return;
  const double amount = costs_.cost(api, config_.chunk_size) * static_cast<double>(calls);
  api_costs_[static_cast<std::size_t>(api)] += amount;
  api_calls_[static_cast<std::size_t>(api)] += calls;
  total_cost_ += amount;
}

double Device::teardown_cost() const {
  return api_cost(VmApi::kUnmap) + api_cost(VmApi::kAddressFree) + api_cost(VmApi::kRelease);
}

VirtualRange Device::reserve_address(Bytes length) {
  if (length == 0 || !is_aligned(length, config_.chunk_size)) {
    throw Error(ErrorCode::kInvalidLength,
                "reservation of " + std::to_string(length) + " bytes is not chunk-aligned");
  }
  VirtualRange range{next_address_, length};
  next_address_ += length;
  ranges_.emplace(range.base, RangeState{length, false});
  charge(VmApi::kReserve, 1);
  return range;
}

void Device::free_address(VirtualRange range) {
  auto it = ranges_.find(range.base);
  if (it == ranges_.end() || it->second.length != range.length) {
    throw Error(ErrorCode::kNotLive, "address range is not live");
  }
  if (it->second.mapped) throw Error(ErrorCode::kAlreadyMapped, "address range is still mapped");
  ranges_.erase(it);
  charge(VmApi::kAddressFree, 1);
}

std::vector<ChunkId> Device::create_chunks(std::size_t count) {
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "create_chunks needs count > 0");
  if (count > free_capacity() / config_.chunk_size) {
    throw Error(ErrorCode::kPhysicalOom,
                "cannot create " + std::to_string(count) + " chunks with " +
                    format_bytes(free_capacity()) + " free");
  }
  std::vector<ChunkId> chunks;
  chunks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ChunkId id{next_chunk_++};
    chunk_refs_.emplace(id.value, 0);
    chunks.push_back(id);
  }
  charge(VmApi::kCreate, count);
  return chunks;
}

void Device::release_chunks(std::span<const ChunkId> chunks) {
  for (ChunkId c : chunks) {
    auto it = chunk_refs_.find(c.value);
    if (it == chunk_refs_.end()) throw Error(ErrorCode::kNotLive, "chunk is not live");
    if (it->second != 0) throw Error(ErrorCode::kAlreadyMapped, "chunk is still mapped");
  }
  for (ChunkId c : chunks) chunk_refs_.erase(c.value);
  charge(VmApi::kRelease, chunks.size());
}

MappingId Device::map(VirtualRange range, std::span<const ChunkId> chunks) {
  auto it = ranges_.find(range.base);
  if (it == ranges_.end() || it->second.length != range.length) {
    throw Error(ErrorCode::kNotLive, "address range is not live");
  }
  if (it->second.mapped) throw Error(ErrorCode::kAlreadyMapped, "address range is already mapped");
  if (chunks.size() * config_.chunk_size != range.length) {
    throw Error(ErrorCode::kSizeMismatch,
                std::to_string(chunks.size()) + " chunks cannot back " +
                    format_bytes(range.length));
  }
  for (ChunkId c : chunks) {
    if (!chunk_refs_.contains(c.value)) throw Error(ErrorCode::kNotLive, "chunk is not live");
  }
  for (ChunkId c : chunks) ++chunk_refs_[c.value];
  it->second.mapped = true;
  MappingId id{next_mapping_++};
  mappings_.emplace(id.value, Mapping{id, range, {chunks.begin(), chunks.end()}});
  charge(VmApi::kMap, chunks.size());
  charge(VmApi::kSetAccess, chunks.size());
  return id;
}

void Device::unmap_release(MappingId mapping, bool release_chunks) {
  auto it = mappings_.find(mapping.value);
  if (it == mappings_.end()) throw Error(ErrorCode::kNotLive, "mapping is not live");
  const Mapping& m = it->second;
  std::uint64_t released = 0;
  for (ChunkId c : m.chunks) {
    auto ref = chunk_refs_.find(c.value);
    if (--ref->second == 0 && release_chunks) {
      chunk_refs_.erase(ref);
      ++released;
    }
  }
  charge(VmApi::kUnmap, m.chunks.size());
  charge(VmApi::kRelease, released);
  ranges_.erase(m.range.base);
  charge(VmApi::kAddressFree, 1);
  mappings_.erase(it);
}

NativeRegionId Device::native_malloc(Bytes size) {
  if (size == 0) throw Error(ErrorCode::kInvalidLength, "native_malloc of zero bytes");
  if (size > free_capacity()) {
    throw Error(ErrorCode::kPhysicalOom,
                "native_malloc of " + format_bytes(size) + " with " +
                    format_bytes(free_capacity()) + " free");
  }
  NativeRegionId id{next_region_++};
  native_regions_.emplace(id.value, size);
  native_bytes_ += size;
  charge(VmApi::kNativeMalloc, 1);
  return id;
}

void Device::native_free(NativeRegionId region) {
  auto it = native_regions_.find(region.value);
  if (it == native_regions_.end()) throw Error(ErrorCode::kNotLive, "native region is not live");
  native_bytes_ -= it->second;
  native_regions_.erase(it);
  charge(VmApi::kNativeFree, 1);
}

std::uint32_t Device::mapping_refs(ChunkId chunk) const {
  auto it = chunk_refs_.find(chunk.value);
  return it == chunk_refs_.end() ? 0 : it->second;
}

const Mapping& Device::mapping(MappingId id) const {
  auto it = mappings_.find(id.value);
  if (it == mappings_.end()) throw Error(ErrorCode::kNotLive, "mapping is not live");
  return it->second;
}

std::vector<VirtualRange> Device::live_ranges() const {
  std::vector<VirtualRange> out;
  out.reserve(ranges_.size());
  for (const auto& [base, state] : ranges_) out.push_back({base, state.length});
  return out;
}

}  // namespace vmstitch
