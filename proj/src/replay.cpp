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

#include "vmstitch/replay.hpp"

#include <memory>
#include <unordered_map>

#include "vmstitch/error.hpp"

namespace vmstitch {

std::string_view to_string(AllocatorKind kind) {
  switch (kind) {
    case AllocatorKind::kNative: return "native";
    case AllocatorKind::kBfc: return "bfc";
    case AllocatorKind::kGmlake: return "gmlake";
  }
  return "unknown";
}

AllocatorKind parse_allocator_kind(std::string_view name) {
  if (name == "native") return AllocatorKind::kNative;
  if (name == "bfc") return AllocatorKind::kBfc;
  if (name == "gmlake") return AllocatorKind::kGmlake;
  throw Error(ErrorCode::kInvalidArgument, "unknown allocator '" + std::string(name) + "'");
}

namespace {

// Uniform face over the three allocators for the replay loop.
class Backend {
 public:
  virtual ~Backend() = default;
  // Returns the S-state for stitching mallocs, 0 otherwise.
  virtual std::uint8_t malloc(std::uint64_t id, Bytes size) = 0;
  virtual void free(std::uint64_t id) = 0;
  virtual Bytes active() const = 0;
  virtual Bytes reserved() const = 0;
  virtual void finish(ReplayObservation&) const {}
};

class NativeBackend final : public Backend {
 public:
  explicit NativeBackend(Device& device) : device_(device) {}

  std::uint8_t malloc(std::uint64_t id, Bytes size) override {
    live_.emplace(id, std::make_pair(device_.native_malloc(size), size));
    active_ += size;
    return 0;
  }
  void free(std::uint64_t id) override {
    auto it = live_.find(id);
    device_.native_free(it->second.first);
    active_ -= it->second.second;
    live_.erase(it);
  }
  Bytes active() const override { return active_; }
  Bytes reserved() const override { return device_.native_bytes(); }

 private:
  Device& device_;
  std::unordered_map<std::uint64_t, std::pair<NativeRegionId, Bytes>> live_;
  Bytes active_ = 0;
};

class BfcBackend final : public Backend {
 public:
  BfcBackend(Device& device, BfcConfig config) : alloc_(device, config) {}

  std::uint8_t malloc(std::uint64_t id, Bytes size) override {
    live_.emplace(id, alloc_.malloc(size));
    return 0;
  }
  void free(std::uint64_t id) override {
    auto it = live_.find(id);
    alloc_.free(it->second);
    live_.erase(it);
  }
  Bytes active() const override { return alloc_.active_bytes(); }
  Bytes reserved() const override { return alloc_.reserved_bytes(); }

 private:
  BfcAllocator alloc_;
  std::unordered_map<std::uint64_t, BfcHandle> live_;
};

class GmlakeBackend final : public Backend {
 public:
  GmlakeBackend(Device& device, GmlakeConfig config) : alloc_(device, config) {}

  std::uint8_t malloc(std::uint64_t id, Bytes size) override {
    const TensorHandle h = alloc_.malloc(size);
    live_.emplace(id, h);
    const auto& state = alloc_.tensor(h).state;
    return state ? static_cast<std::uint8_t>(*state) : 0;
  }
  void free(std::uint64_t id) override {
    auto it = live_.find(id);
    alloc_.free(it->second);
    live_.erase(it);
  }
  Bytes active() const override { return alloc_.active_bytes(); }
  Bytes reserved() const override { return alloc_.reserved_bytes(); }
  void finish(ReplayObservation& obs) const override {
    obs.set_state_counts(alloc_.stats().state_counts);
  }

 private:
  GmlakeAllocator alloc_;
  std::unordered_map<std::uint64_t, TensorHandle> live_;
};

}  // namespace

ReplayResult replay(std::span<const TraceEvent> trace, const ReplayConfig& config) {
  validate_trace(trace);

  Device device(config.device);
  std::unique_ptr<Backend> backend;
  switch (config.allocator) {
    case AllocatorKind::kNative: backend = std::make_unique<NativeBackend>(device); break;
    case AllocatorKind::kBfc: backend = std::make_unique<BfcBackend>(device, config.bfc); break;
    case AllocatorKind::kGmlake:
      backend = std::make_unique<GmlakeBackend>(device, config.gmlake);
      break;
  }

  ReplayResult result;
  ReplayObservation obs;
  result.event_states.reserve(trace.size());
  std::unordered_map<std::uint64_t, Bytes> requested;
  Bytes requested_live = 0;

  for (const TraceEvent& e : trace) {
    std::uint8_t state = 0;
    if (e.op == TraceOp::kMalloc) {
      try {
        state = backend->malloc(e.id, e.size);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::kOutOfMemory && err.code() != ErrorCode::kPhysicalOom) throw;
        obs.mark_oom();
        result.failure = "seq " + std::to_string(e.seq) + ": " + err.what();
        break;
      }
      requested.emplace(e.id, e.size);
      requested_live += e.size;
      if (state > static_cast<std::uint8_t>(AllocState::kExactMatch)) {
        obs.set_last_non_exact_seq(e.seq);
      }
    } else {
      backend->free(e.id);
      requested_live -= requested.at(e.id);
      requested.erase(e.id);
    }
    result.event_states.push_back(state);
    obs.record_step(e.seq, backend->active(), backend->reserved());
    obs.note_requested(requested_live);
  }

  obs.set_cost(device.charge_query(), device.teardown_cost());
  backend->finish(obs);
  result.report = obs.finalize(std::string(to_string(config.allocator)));
  result.timeline = obs.timeline();
  return result;
}

}  // namespace vmstitch
