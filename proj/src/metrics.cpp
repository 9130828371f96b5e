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

#include "vmstitch/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "vmstitch/error.hpp"

namespace vmstitch {

double utilization(Bytes peak_active, Bytes peak_reserved) {
  if (peak_active > peak_reserved) {
    throw Error(ErrorCode::kActiveExceedsReserved,
                std::to_string(peak_active) + " active > " + std::to_string(peak_reserved) +
                    " reserved");
  }
  if (peak_reserved == 0) return 1.0;
  return static_cast<double>(peak_active) / static_cast<double>(peak_reserved);
}

double mem_reduction_ratio(std::span<const Bytes> baseline_reserved,
                           std::span<const Bytes> candidate_reserved) {
  if (baseline_reserved.empty() || baseline_reserved.size() != candidate_reserved.size()) {
    throw Error(ErrorCode::kLengthMismatch, "workload lists must be non-empty and of equal length");
  }
  // Long double keeps byte sums exact well past 2^53.
  const long double baseline = std::accumulate(baseline_reserved.begin(), baseline_reserved.end(),
                                               static_cast<long double>(0));
  const long double candidate = std::accumulate(
      candidate_reserved.begin(), candidate_reserved.end(), static_cast<long double>(0));
  if (baseline == 0) throw Error(ErrorCode::kZeroDenominator, "baseline reserves nothing");
  return static_cast<double>((baseline - candidate) / baseline);
}

void ReplayObservation::record_step(std::uint64_t seq, Bytes active, Bytes reserved) {
  if (!timeline_.empty() && seq <= timeline_.back().seq) {
    throw Error(ErrorCode::kOutOfOrder, "step " + std::to_string(seq) + " is not after " +
                                            std::to_string(timeline_.back().seq));
  }
  if (active > reserved) {
    throw Error(ErrorCode::kActiveExceedsReserved,
                "step " + std::to_string(seq) + ": " + std::to_string(active) + " active > " +
                    std::to_string(reserved) + " reserved");
  }
  timeline_.push_back({seq, active, reserved});
  peak_active_ = std::max(peak_active_, active);
  peak_reserved_ = std::max(peak_reserved_, reserved);
}

void ReplayObservation::note_requested(Bytes requested_live) {
  peak_requested_ = std::max(peak_requested_, requested_live);
}

void ReplayObservation::set_cost(double total, double teardown) {
  cost_ = total;
  teardown_cost_ = teardown;
}

ReplayReport ReplayObservation::finalize(std::string allocator) const {
  ReplayReport r;
  r.allocator = std::move(allocator);
  r.peak_active = peak_active_;
  r.peak_reserved = peak_reserved_;
  r.peak_requested = peak_requested_;
  r.utilization_ratio = utilization(peak_active_, peak_reserved_);
  r.fragmentation_ratio = 1.0 - r.utilization_ratio;
  r.simulated_cost = cost_;
  r.teardown_cost = teardown_cost_;
  r.oom = oom_;
  r.state_counts = state_counts_;
  r.last_non_exact_seq = last_non_exact_seq_;
  return r;
}

std::string report_to_json(const ReplayReport& r) {
  nlohmann::ordered_json j;
  j["allocator"] = r.allocator;
  j["peak_active"] = r.peak_active;
  j["peak_reserved"] = r.peak_reserved;
  j["peak_requested"] = r.peak_requested;
  j["utilization_ratio"] = r.utilization_ratio;
  j["fragmentation_ratio"] = r.fragmentation_ratio;
  j["simulated_cost"] = r.simulated_cost;
  j["teardown_cost"] = r.teardown_cost;
  j["oom"] = r.oom;
  if (r.state_counts) {
    nlohmann::ordered_json counts;
    for (std::size_t i = 0; i < r.state_counts->size(); ++i) {
      counts["s" + std::to_string(i + 1)] = (*r.state_counts)[i];
    }
    j["state_counts"] = counts;
  }
  if (r.last_non_exact_seq) j["last_non_exact_seq"] = *r.last_non_exact_seq;
  return j.dump(2) + "\n";
}

ReplayReport report_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ReplayReport r;
    r.allocator = j.at("allocator").get<std::string>();
    r.peak_active = j.at("peak_active").get<Bytes>();
    r.peak_reserved = j.at("peak_reserved").get<Bytes>();
    r.peak_requested = j.at("peak_requested").get<Bytes>();
    r.utilization_ratio = j.at("utilization_ratio").get<double>();
    r.fragmentation_ratio = j.at("fragmentation_ratio").get<double>();
    r.simulated_cost = j.at("simulated_cost").get<double>();
    r.teardown_cost = j.at("teardown_cost").get<double>();
    r.oom = j.at("oom").get<bool>();
    if (j.contains("state_counts")) {
      std::array<std::uint64_t, 5> counts{};
      for (std::size_t i = 0; i < counts.size(); ++i) {
        counts[i] = j.at("state_counts").at("s" + std::to_string(i + 1)).get<std::uint64_t>();
      }
      r.state_counts = counts;
    }
    if (j.contains("last_non_exact_seq")) {
      r.last_non_exact_seq = j.at("last_non_exact_seq").get<std::uint64_t>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("bad report: ") + e.what());
  }
}

std::string timeline_csv(std::span<const TimelinePoint> timeline) {
  std::string out = "seq,active_bytes,reserved_bytes\n";
  for (const TimelinePoint& p : timeline) {
    out += std::to_string(p.seq);
    out += ',';
    out += std::to_string(p.active_bytes);
    out += ',';
    out += std::to_string(p.reserved_bytes);
    out += '\n';
  }
  return out;
}

}  // namespace vmstitch
