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

#include "vmstitch/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "vmstitch/error.hpp"

namespace vmstitch {

namespace {

using nlohmann::json;

// Tracks liveness and ordering while events stream in.
class TraceChecker {
 public:
  void check(const TraceEvent& e, std::size_t line) {
    if (any_ && e.seq <= last_seq_) {
      throw TraceError(ErrorCode::kOutOfOrder, line,
                       "seq " + std::to_string(e.seq) + " does not increase");
    }
    any_ = true;
    last_seq_ = e.seq;
    if (e.op == TraceOp::kMalloc) {
      if (e.size == 0) throw TraceError(ErrorCode::kParseError, line, "malloc size must be positive");
      if (!live_.insert(e.id).second) {
        throw TraceError(ErrorCode::kDuplicateId, line,
                         "id " + std::to_string(e.id) + " is already allocated");
      }
    } else if (live_.erase(e.id) == 0) {
      throw TraceError(ErrorCode::kUnbalancedFree, line,
                       "id " + std::to_string(e.id) + " is not allocated");
    }
  }

 private:
  bool any_ = false;
  std::uint64_t last_seq_ = 0;
  std::unordered_set<std::uint64_t> live_;
};

std::uint64_t unsigned_field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw TraceError(ErrorCode::kParseError, line, std::string("missing field '") + key + "'");
  }
  if (!it->is_number_unsigned()) {
    throw TraceError(ErrorCode::kParseError, line,
                     std::string("field '") + key + "' must be a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

TraceEvent parse_line(const std::string& text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw TraceError(ErrorCode::kParseError, line, e.what());
  }
  if (!obj.is_object()) throw TraceError(ErrorCode::kParseError, line, "event must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (key != "seq" && key != "op" && key != "id" && key != "size") {
      throw TraceError(ErrorCode::kParseError, line, "unknown field '" + key + "'");
    }
  }
  TraceEvent e;
  e.seq = unsigned_field(obj, "seq", line);
  e.id = unsigned_field(obj, "id", line);
  auto op = obj.find("op");
  if (op == obj.end() || !op->is_string()) {
    throw TraceError(ErrorCode::kParseError, line, "field 'op' must be \"malloc\" or \"free\"");
  }
  if (*op == "malloc") {
    e.op = TraceOp::kMalloc;
    e.size = unsigned_field(obj, "size", line);
  } else if (*op == "free") {
    e.op = TraceOp::kFree;
    if (obj.contains("size")) {
      throw TraceError(ErrorCode::kParseError, line, "free events carry no size");
    }
  } else {
    throw TraceError(ErrorCode::kParseError, line, "field 'op' must be \"malloc\" or \"free\"");
  }
  return e;
}

}  // namespace

Trace parse_trace(std::istream& in) {
  Trace trace;
  TraceChecker checker;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    TraceEvent e = parse_line(text, line);
    checker.check(e, line);
    trace.push_back(e);
  }
  return trace;
}

Trace parse_trace(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_trace(in);
}

Trace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open trace " + path.string());
  return parse_trace(in);
}

void validate_trace(std::span<const TraceEvent> trace) {
  TraceChecker checker;
  for (std::size_t i = 0; i < trace.size(); ++i) checker.check(trace[i], i + 1);
}

std::string serialize_event(const TraceEvent& e) {
  std::string out = "{\"seq\":" + std::to_string(e.seq);
  if (e.op == TraceOp::kMalloc) {
    out += ",\"op\":\"malloc\",\"id\":" + std::to_string(e.id) +
           ",\"size\":" + std::to_string(e.size) + "}";
  } else {
    out += ",\"op\":\"free\",\"id\":" + std::to_string(e.id) + "}";
  }
  return out;
}

std::string serialize_trace(std::span<const TraceEvent> trace) {
  std::string out;
  for (const TraceEvent& e : trace) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

void write_trace_file(const std::filesystem::path& path, std::span<const TraceEvent> trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write trace " + path.string());
  out << serialize_trace(trace);
  if (!out) throw Error(ErrorCode::kIoError, "failed writing trace " + path.string());
}

// ------------------------------------------------------------ generators

void GeneratorParams::validate() const {
  const auto fraction_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (iterations == 0 || allocs_per_iteration == 0) {
    throw Error(ErrorCode::kInvalidArgument, "iterations and allocations must be positive");
  }
  if (size.mean == 0 || !(size.sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "size mean must be positive and sigma >= 0");
  }
  if (!fraction_ok(irregularity.extra_alloc_fraction) ||
      !fraction_ok(irregularity.interleave_fraction)) {
    throw Error(ErrorCode::kInvalidArgument, "irregularity fractions must lie in [0, 1]");
  }
}

GeneratorParams generator_preset(std::string_view name) {
  GeneratorParams p;
  if (name == "regular-desk") {
    p.size.mean = 93 * kMiB;
    return p;
  }
  if (name == "irregular-desk") {
    p.size.mean = 85 * kMiB;
    p.irregularity.extra_alloc_fraction = 0.45;
    p.irregularity.interleave_fraction = 0.2;
    return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> generator_preset_names() { return {"regular-desk", "irregular-desk"}; }

namespace {

Bytes clamp_size(double bytes) {
  const double clamped = std::clamp(bytes, static_cast<double>(kMinGeneratedSize),
                                    static_cast<double>(kMaxGeneratedSize));
  return static_cast<Bytes>(std::llround(clamped));
}

class SizeSampler {
 public:
  explicit SizeSampler(const SizeDistribution& d)
      : mean_(static_cast<double>(d.mean)),
        sigma_(d.sigma),
        dist_(std::log(mean_) - d.sigma * d.sigma / 2.0, d.sigma > 0 ? d.sigma : 1.0) {}

  // One draw, resampled until it falls inside the generated-size range.
  double draw(std::mt19937_64& rng) {
    if (sigma_ == 0.0) return mean_;
    for (;;) {
      const double x = dist_(rng);
      if (x >= kMinGeneratedSize && x <= kMaxGeneratedSize) return x;
    }
  }

 private:
  double mean_;
  double sigma_;
  std::lognormal_distribution<double> dist_;
};

// Sizes of one iteration, rescaled so their mean is the target mean.
std::vector<Bytes> skeleton_sizes(const GeneratorParams& p) {
  std::mt19937_64 rng(p.seed);
  SizeSampler sampler(p.size);
  std::vector<double> raw(p.allocs_per_iteration);
  for (double& x : raw) x = sampler.draw(rng);
  const double sample_mean = std::accumulate(raw.begin(), raw.end(), 0.0) / raw.size();
  const double scale = static_cast<double>(p.size.mean) / sample_mean;
  std::vector<Bytes> sizes;
  sizes.reserve(raw.size());
  for (double x : raw) sizes.push_back(clamp_size(x * scale));
  return sizes;
}

Trace assemble_periodic(const GeneratorParams& p, const std::vector<Bytes>& sizes) {
  Trace trace;
  trace.reserve(2 * p.iterations * sizes.size());
  std::uint64_t seq = 1;
  for (std::size_t it = 0; it < p.iterations; ++it) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      trace.push_back({seq++, TraceOp::kMalloc, i + 1, sizes[i]});
    }
    for (std::size_t i = sizes.size(); i-- > 0;) {
      trace.push_back({seq++, TraceOp::kFree, i + 1, 0});
    }
  }
  return trace;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

Trace gen_periodic(const GeneratorParams& params) {
  params.validate();
  return assemble_periodic(params, skeleton_sizes(params));
}

Trace gen_irregular(const GeneratorParams& params) {
  params.validate();
  const std::vector<Bytes> sizes = skeleton_sizes(params);
  const Irregularity& irr = params.irregularity;
  if (irr.extra_alloc_fraction == 0.0 && irr.interleave_fraction == 0.0) {
    return assemble_periodic(params, sizes);
  }

  const std::size_t n = sizes.size();
  const auto n_extra = static_cast<std::size_t>(std::llround(irr.extra_alloc_fraction * n));
  const auto n_moved = static_cast<std::size_t>(std::llround(irr.interleave_fraction * n));
  constexpr std::size_t kMaxLag = 8;
  constexpr std::size_t kShuffleWindow = 4;

  std::seed_seq seeds{params.seed, std::uint64_t{0x6972726567}};
  std::mt19937_64 rng(seeds);
  SizeSampler sampler(params.size);
  std::uniform_real_distribution<double> shift(0.5, 1.5);

  struct Pending {
    std::size_t step;
    std::size_t order;
    TraceOp op;
    std::uint64_t id;
    Bytes size;
  };

  Trace trace;
  std::uint64_t seq = 1;
  std::vector<std::size_t> slots(n);
  for (std::size_t it = 0; it < params.iterations; ++it) {
    std::vector<Pending> pending;
    std::size_t order = 0;

    // Recomputation proxy: a short-lived allocation after skeleton step t.
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    std::vector<std::size_t> extra_slots(slots.begin(), slots.begin() + n_extra);
    std::sort(extra_slots.begin(), extra_slots.end());
    for (std::size_t k = 0; k < extra_slots.size(); ++k) {
      const std::size_t t = extra_slots[k];
      const std::uint64_t id = n + 1 + k;
      pending.push_back({t, order++, TraceOp::kMalloc, id, clamp_size(sampler.draw(rng))});
      pending.push_back({t + uniform_index(rng, 1, kMaxLag), order++, TraceOp::kFree, id, 0});
    }

    // Offload proxy: free a skeleton tensor and bring it back resized.
    std::shuffle(slots.begin(), slots.end(), rng);
    std::vector<std::size_t> moved(slots.begin(), slots.begin() + n_moved);
    std::sort(moved.begin(), moved.end());
    for (std::size_t i : moved) {
      const std::size_t out_step = i + uniform_index(rng, 1, kMaxLag);
      const std::size_t back_step = out_step + uniform_index(rng, 1, kMaxLag);
      const Bytes resized = clamp_size(static_cast<double>(sizes[i]) * shift(rng));
      pending.push_back({out_step, order++, TraceOp::kFree, i + 1, 0});
      pending.push_back({back_step, order++, TraceOp::kMalloc, i + 1, resized});
    }
    std::sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
      return a.step != b.step ? a.step < b.step : a.order < b.order;
    });

    auto next = pending.begin();
    for (std::size_t t = 0; t < n; ++t) {
      trace.push_back({seq++, TraceOp::kMalloc, t + 1, sizes[t]});
      for (; next != pending.end() && next->step <= t; ++next) {
        trace.push_back({seq++, next->op, next->id, next->size});
      }
    }
    for (; next != pending.end(); ++next) {
      trace.push_back({seq++, next->op, next->id, next->size});
    }

    std::vector<std::uint64_t> backward(n);
    for (std::size_t i = 0; i < n; ++i) backward[i] = n - i;
    for (std::size_t k = 0; k < n_moved && n > 1; ++k) {
      const std::size_t a = uniform_index(rng, 0, n - 2);
      const std::size_t b = std::min(n - 1, a + uniform_index(rng, 1, kShuffleWindow));
      std::swap(backward[a], backward[b]);
    }
    for (std::uint64_t id : backward) trace.push_back({seq++, TraceOp::kFree, id, 0});
  }
  return trace;
}

Trace gen_adversarial(Bytes unit) {
  if (unit == 0) throw Error(ErrorCode::kInvalidArgument, "unit must be positive");
  Trace t;
  std::uint64_t seq = 1;
  const auto malloc = [&](std::uint64_t id, Bytes units) {
    t.push_back({seq++, TraceOp::kMalloc, id, units * unit});
  };
  const auto free = [&](std::uint64_t id) { t.push_back({seq++, TraceOp::kFree, id, 0}); };
  // Warm the pool with one block spanning the device, then carve it up.
  malloc(1, 10);
  free(1);
  malloc(2, 3);
  malloc(3, 2);
  malloc(4, 2);
  malloc(5, 3);
  // Two holes of 3 and 2 units separated by live blocks.
  free(2);
  free(4);
  malloc(6, 5);
  free(3);
  free(5);
  free(6);
  return t;
}

TraceStats trace_stats(std::span<const TraceEvent> trace) {
  TraceStats s;
  std::unordered_map<std::uint64_t, Bytes> live;
  Bytes live_bytes = 0;
  for (const TraceEvent& e : trace) {
    if (e.op == TraceOp::kMalloc) {
      ++s.alloc_count;
      s.total_bytes += e.size;
      live[e.id] = e.size;
      live_bytes += e.size;
      s.peak_live_bytes = std::max(s.peak_live_bytes, live_bytes);
    } else {
      ++s.free_count;
      auto it = live.find(e.id);
      if (it != live.end()) {
        live_bytes -= it->second;
        live.erase(it);
      }
    }
  }
  if (s.alloc_count != 0) {
    s.mean_size = static_cast<double>(s.total_bytes) / static_cast<double>(s.alloc_count);
  }
  return s;
}

}  // namespace vmstitch
