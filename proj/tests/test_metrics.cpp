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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "vmstitch/error.hpp"
#include "vmstitch/metrics.hpp"

using namespace vmstitch;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(UtilizationTest, DirectQuotient) {
  EXPECT_DOUBLE_EQ(utilization(72 * kGiB, 80 * kGiB), 0.9);
  EXPECT_DOUBLE_EQ(utilization(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(utilization(0, 8), 0.0);
  EXPECT_EQ(code_of([] { utilization(9, 8); }), ErrorCode::kActiveExceedsReserved);
  EXPECT_EQ(code_of([] { utilization(1, 0); }), ErrorCode::kActiveExceedsReserved);
}

TEST(MemReductionTest, WorkedExamples) {
  const std::vector<Bytes> base1{100};
  const std::vector<Bytes> gm1{75};
  EXPECT_DOUBLE_EQ(mem_reduction_ratio(base1, gm1), 0.25);
  const std::vector<Bytes> same{30, 70};
  EXPECT_DOUBLE_EQ(mem_reduction_ratio(same, same), 0.0);
  const std::vector<Bytes> base{80, 20};
  const std::vector<Bytes> gm{60, 20};
  EXPECT_DOUBLE_EQ(mem_reduction_ratio(base, gm), 0.2);
}

TEST(MemReductionTest, AggregatesSumsNotRatios) {
  // Per-workload ratios 0.5 and 0.0 average to 0.25; the sums give 0.05.
  const std::vector<Bytes> base{10, 90};
  const std::vector<Bytes> gm{5, 90};
  EXPECT_DOUBLE_EQ(mem_reduction_ratio(base, gm), 0.05);
}

TEST(MemReductionTest, MayBeNegative) {
  const std::vector<Bytes> base{100};
  const std::vector<Bytes> gm{150};
  EXPECT_DOUBLE_EQ(mem_reduction_ratio(base, gm), -0.5);
}

TEST(MemReductionTest, Errors) {
  const std::vector<Bytes> one{1};
  const std::vector<Bytes> two{1, 2};
  const std::vector<Bytes> none;
  const std::vector<Bytes> zero{0};
  EXPECT_EQ(code_of([&] { mem_reduction_ratio(one, two); }), ErrorCode::kLengthMismatch);
  EXPECT_EQ(code_of([&] { mem_reduction_ratio(none, none); }), ErrorCode::kLengthMismatch);
  EXPECT_EQ(code_of([&] { mem_reduction_ratio(zero, zero); }), ErrorCode::kZeroDenominator);
}

TEST(ObservationTest, TracksPeaks) {
  ReplayObservation obs;
  obs.record_step(1, 4, 8);
  obs.record_step(2, 2, 8);
  EXPECT_EQ(obs.peak_active(), 4u);
  EXPECT_EQ(obs.peak_reserved(), 8u);
  EXPECT_EQ(obs.timeline().size(), 2u);
}

TEST(ObservationTest, RejectsOutOfOrderAndOverCommitted) {
  ReplayObservation obs;
  obs.record_step(5, 1, 2);
  EXPECT_EQ(code_of([&] { obs.record_step(5, 1, 2); }), ErrorCode::kOutOfOrder);
  EXPECT_EQ(code_of([&] { obs.record_step(4, 1, 2); }), ErrorCode::kOutOfOrder);
  EXPECT_EQ(code_of([&] { obs.record_step(6, 3, 2); }), ErrorCode::kActiveExceedsReserved);
}

TEST(ObservationTest, PeaksEqualSeriesMaxima) {
  std::mt19937_64 rng(5);
  ReplayObservation obs;
  Bytes max_a = 0;
  Bytes max_r = 0;
  for (std::uint64_t seq = 1; seq <= 500; ++seq) {
    const Bytes reserved = rng() % 1000;
    const Bytes active = reserved == 0 ? 0 : rng() % (reserved + 1);
    obs.record_step(seq, active, reserved);
  }
  for (const TimelinePoint& p : obs.timeline()) {
    max_a = std::max(max_a, p.active_bytes);
    max_r = std::max(max_r, p.reserved_bytes);
  }
  EXPECT_EQ(obs.peak_active(), max_a);
  EXPECT_EQ(obs.peak_reserved(), max_r);
  const ReplayReport r = obs.finalize("bfc");
  EXPECT_EQ(r.peak_active, max_a);
  EXPECT_EQ(r.peak_reserved, max_r);
}

TEST(ObservationTest, FinalizeDerivesComplementaryRatios) {
  ReplayObservation obs;
  obs.record_step(1, 72 * kGiB, 80 * kGiB);
  obs.set_cost(12.5, 2.5);
  const ReplayReport r = obs.finalize("gmlake");
  EXPECT_EQ(r.allocator, "gmlake");
  EXPECT_DOUBLE_EQ(r.utilization_ratio, 0.9);
  EXPECT_NEAR(r.fragmentation_ratio, 0.1, 1e-15);
  EXPECT_EQ(r.fragmentation_ratio + r.utilization_ratio, 1.0);
  EXPECT_DOUBLE_EQ(r.simulated_cost, 12.5);
  EXPECT_DOUBLE_EQ(r.teardown_cost, 2.5);
  EXPECT_FALSE(r.oom);
}

TEST(ObservationTest, IdentityHoldsForArbitraryPeaks) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10000; ++i) {
    ReplayObservation obs;
    const Bytes reserved = 1 + rng() % (80 * kGiB);
    obs.record_step(1, rng() % (reserved + 1), reserved);
    const ReplayReport r = obs.finalize("x");
    ASSERT_EQ(r.fragmentation_ratio + r.utilization_ratio, 1.0) << reserved;
  }
}

TEST(ObservationTest, OomReportKeepsPeaksUpToFailure) {
  ReplayObservation obs;
  obs.record_step(1, 10, 10);
  obs.record_step(2, 30, 40);
  obs.mark_oom();
  const ReplayReport r = obs.finalize("bfc");
  EXPECT_TRUE(r.oom);
  EXPECT_EQ(r.peak_active, 30u);
  EXPECT_EQ(r.peak_reserved, 40u);
}

TEST(ReportTest, JsonRoundTrip) {
  ReplayObservation obs;
  obs.record_step(1, 3 * kGiB, 7 * kGiB);
  obs.note_requested(2 * kGiB);
  obs.set_cost(1234.5678, 12.0);
  obs.set_state_counts({5, 4, 3, 2, 1});
  obs.set_last_non_exact_seq(17);
  const ReplayReport r = obs.finalize("gmlake");
  const std::string text = report_to_json(r);
  EXPECT_EQ(report_from_json(text), r);
  EXPECT_EQ(report_to_json(report_from_json(text)), text);
  EXPECT_NE(text.find("\"fragmentation_ratio\""), std::string::npos);
  EXPECT_NE(text.find("\"s5\": 1"), std::string::npos);

  ReplayObservation plain;
  const ReplayReport empty = plain.finalize("native");
  EXPECT_EQ(report_from_json(report_to_json(empty)), empty);
  EXPECT_EQ(code_of([] { report_from_json("{"); }), ErrorCode::kParseError);
}

TEST(ReportTest, TimelineCsv) {
  const std::vector<TimelinePoint> points{{1, 4, 8}, {2, 2, 8}};
  EXPECT_EQ(timeline_csv(points), "seq,active_bytes,reserved_bytes\n1,4,8\n2,2,8\n");
}
