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

#include "support/oracles.hpp"
#include "vmstitch/gmlake_allocator.hpp"

using namespace vmstitch;

namespace {

constexpr Bytes kLimit = 128 * kMiB;

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kInvalidArgument;
}

class GmlakeTest : public testing::Test {
 protected:
  explicit GmlakeTest(GmlakeConfig config = {}, Bytes capacity = 8 * kGiB)
      : device_(DeviceConfig{capacity, 2 * kMiB}), gm_(device_, config) {}

  void expect_consistent() {
    for (const std::string& v : oracle::audit_gmlake(gm_)) ADD_FAILURE() << v;
  }
  std::vector<Bytes> ppool_sizes() const {
    std::vector<Bytes> out;
    for (const PBlockView& p : gm_.snapshot().ppool) out.push_back(p.size);
    return out;
  }
  const PBlockView* find_pblock(PBlockId id) const {
    snap_ = gm_.snapshot();
    for (const PBlockView& p : snap_.ppool) {
      if (p.id == id) return &p;
    }
    return nullptr;
  }
  std::optional<AllocState> state_of(TensorHandle h) const { return gm_.tensor(h).state; }

  Device device_;
  GmlakeAllocator gm_;
  mutable GmlakeSnapshot snap_;
};

}  // namespace

TEST_F(GmlakeTest, AllocPBlockBuildsSortedPool) {
  const PBlockId a = gm_.alloc_pblock(6 * kMiB);
  const PBlockView* p = find_pblock(a);
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(p->chunks.size(), 3u);
  EXPECT_FALSE(p->active);
  gm_.alloc_pblock(10 * kMiB);
  EXPECT_EQ(ppool_sizes(), (std::vector<Bytes>{10 * kMiB, 6 * kMiB}));
  EXPECT_EQ(gm_.reserved_bytes(), 16 * kMiB);
  expect_consistent();
}

TEST_F(GmlakeTest, AllocPBlockFailureLeavesPoolsUntouched) {
  gm_.alloc_pblock(6 * kGiB);
  EXPECT_EQ(code_of([&] { gm_.alloc_pblock(4 * kGiB); }), ErrorCode::kPhysicalOom);
  EXPECT_EQ(code_of([&] { gm_.alloc_pblock(3 * kMiB); }), ErrorCode::kMisaligned);
  EXPECT_EQ(ppool_sizes(), (std::vector<Bytes>{6 * kGiB}));
  expect_consistent();
}

TEST_F(GmlakeTest, SplitPartitionsChunkList) {
  const PBlockId big = gm_.alloc_pblock(512 * kMiB);
  const std::vector<ChunkId> chunks = find_pblock(big)->chunks;
  const auto [front, back] = gm_.split(big, 300 * kMiB);
  const PBlockView* f = find_pblock(front);
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->size, 300 * kMiB);
  EXPECT_EQ(f->chunks, std::vector<ChunkId>(chunks.begin(), chunks.begin() + 150));
  const PBlockView* b = find_pblock(back);
  ASSERT_NE(b, nullptr);
  EXPECT_EQ(b->size, 212 * kMiB);
  EXPECT_EQ(b->chunks, std::vector<ChunkId>(chunks.begin() + 150, chunks.end()));
  EXPECT_EQ(find_pblock(big), nullptr);
  EXPECT_EQ(device_.live_chunk_count(), 256u);
  expect_consistent();
}

TEST_F(GmlakeTest, SplitRejectsDegenerateAndSmallRemainders) {
  const PBlockId big = gm_.alloc_pblock(512 * kMiB);
  EXPECT_EQ(code_of([&] { gm_.split(big, 0); }), ErrorCode::kMisaligned);
  EXPECT_EQ(code_of([&] { gm_.split(big, 512 * kMiB); }), ErrorCode::kMisaligned);
  EXPECT_EQ(code_of([&] { gm_.split(big, 3 * kMiB); }), ErrorCode::kMisaligned);
  EXPECT_EQ(code_of([&] { gm_.split(big, 400 * kMiB); }), ErrorCode::kRemainderBelowLimit);
  EXPECT_EQ(code_of([&] { gm_.split(PBlockId{999}, 2 * kMiB); }), ErrorCode::kNotLive);
  expect_consistent();
}

TEST_F(GmlakeTest, SplitRejectsActiveBlock) {
  const TensorHandle h = gm_.malloc(512 * kMiB);
  const PBlockId id{gm_.tensor(h).bound.id};
  EXPECT_EQ(code_of([&] { gm_.split(id, 256 * kMiB); }), ErrorCode::kActiveBlock);
}

TEST_F(GmlakeTest, SplitInvalidatesReferencingSBlocks) {
  const PBlockId a = gm_.alloc_pblock(512 * kMiB);
  const PBlockId b = gm_.alloc_pblock(256 * kMiB);
  const std::array<PBlockId, 2> members{a, b};
  gm_.stitch(members);
  ASSERT_EQ(gm_.snapshot().spool.size(), 1u);
  gm_.split(a, 256 * kMiB);
  EXPECT_TRUE(gm_.snapshot().spool.empty());
  EXPECT_EQ(gm_.stats().invalidations, 1u);
  expect_consistent();
}

TEST_F(GmlakeTest, StitchAliasesMembersWithoutNewChunks) {
  const PBlockId a = gm_.alloc_pblock(1 * kGiB);
  const PBlockId b = gm_.alloc_pblock(2 * kGiB);
  const std::size_t chunks = device_.live_chunk_count();
  const Bytes reserved = gm_.reserved_bytes();
  const auto creates = device_.api_calls(VmApi::kCreate);
  const double cost = device_.charge_query();
  const std::array<PBlockId, 2> members{a, b};
  const SBlockId s = gm_.stitch(members);

  const GmlakeSnapshot snap = gm_.snapshot();
  ASSERT_EQ(snap.spool.size(), 1u);
  EXPECT_EQ(snap.spool[0].id, s);
  EXPECT_EQ(snap.spool[0].size, 3 * kGiB);
  EXPECT_EQ(device_.live_chunk_count(), chunks);
  EXPECT_EQ(gm_.reserved_bytes(), reserved);
  EXPECT_EQ(device_.api_calls(VmApi::kCreate), creates);
  const CostModel model;
  const double per_chunk =
      model.cost(VmApi::kMap, 2 * kMiB) + model.cost(VmApi::kSetAccess, 2 * kMiB);
  EXPECT_NEAR(device_.charge_query() - cost,
              model.cost(VmApi::kReserve, 2 * kMiB) + 1536 * per_chunk, 1e-9);
  expect_consistent();
}

TEST_F(GmlakeTest, StitchPreconditions) {
  const PBlockId a = gm_.alloc_pblock(256 * kMiB);
  const PBlockId small = gm_.alloc_pblock(64 * kMiB);
  const std::array<PBlockId, 1> one{a};
  EXPECT_EQ(code_of([&] { gm_.stitch(one); }), ErrorCode::kTooFewMembers);
  const std::array<PBlockId, 2> dup{a, a};
  EXPECT_EQ(code_of([&] { gm_.stitch(dup); }), ErrorCode::kTooFewMembers);
  const std::array<PBlockId, 2> below{a, small};
  EXPECT_EQ(code_of([&] { gm_.stitch(below); }), ErrorCode::kMemberBelowLimit);
  const std::array<PBlockId, 2> dead{a, PBlockId{999}};
  EXPECT_EQ(code_of([&] { gm_.stitch(dead); }), ErrorCode::kNotLive);

  const TensorHandle h = gm_.malloc(256 * kMiB);  // exact match takes `a`
  ASSERT_EQ(gm_.tensor(h).bound.id, a.value);
  const PBlockId c = gm_.alloc_pblock(256 * kMiB);
  const std::array<PBlockId, 2> active{a, c};
  EXPECT_EQ(code_of([&] { gm_.stitch(active); }), ErrorCode::kMemberActive);
  EXPECT_TRUE(gm_.snapshot().spool.empty());
}

TEST_F(GmlakeTest, FreshMallocIsS4WithoutStitch) {
  const TensorHandle h = gm_.malloc(6 * kMiB);
  EXPECT_EQ(state_of(h), AllocState::kInsufficient);
  EXPECT_EQ(gm_.snapshot().ppool.size(), 1u);
  EXPECT_TRUE(gm_.snapshot().spool.empty());
  const GmlakeStats s = gm_.stats();
  EXPECT_EQ(s.reserved_bytes, 6 * kMiB);
  EXPECT_EQ(s.active_bytes, 6 * kMiB);
  EXPECT_EQ(s.state_counts[3], 1u);

  gm_.free(h);
  EXPECT_EQ(gm_.stats().active_bytes, 0u);
  EXPECT_EQ(gm_.stats().reserved_bytes, 6 * kMiB);
  expect_consistent();
}

TEST_F(GmlakeTest, RoundsRequestsToChunks) {
  const TensorHandle h = gm_.malloc(5 * kMiB + 1);
  EXPECT_EQ(gm_.tensor(h).rounded, 6 * kMiB);
  EXPECT_EQ(gm_.tensor(h).bound.size, 6 * kMiB);
  EXPECT_EQ(gm_.stats().requested_bytes, 5 * kMiB + 1);
}

TEST_F(GmlakeTest, SmallRequestsUseEmbeddedPool) {
  const TensorHandle h = gm_.malloc(1 * kMiB);
  EXPECT_EQ(gm_.tensor(h).bound.kind, BlockKind::kSmall);
  EXPECT_FALSE(state_of(h).has_value());
  EXPECT_TRUE(gm_.snapshot().ppool.empty());
  EXPECT_TRUE(gm_.snapshot().spool.empty());
  const GmlakeStats s = gm_.stats();
  EXPECT_EQ(s.small_allocs, 1u);
  EXPECT_EQ(s.small_pool_reserved_bytes, 1 * kMiB);
  EXPECT_EQ(s.reserved_bytes, 1 * kMiB);
  gm_.free(h);
  expect_consistent();
}

TEST_F(GmlakeTest, FreeThenSameSizeIsExactMatch) {
  const TensorHandle a = gm_.malloc(300 * kMiB);
  const PoolEntry first = gm_.tensor(a).bound;
  gm_.free(a);
  const TensorHandle b = gm_.malloc(300 * kMiB);
  EXPECT_EQ(state_of(b), AllocState::kExactMatch);
  EXPECT_EQ(gm_.tensor(b).bound, first);
  expect_consistent();
}

TEST_F(GmlakeTest, DoubleFreeIsAnError) {
  const TensorHandle h = gm_.malloc(4 * kMiB);
  gm_.free(h);
  EXPECT_EQ(code_of([&] { gm_.free(h); }), ErrorCode::kDoubleFree);
  EXPECT_EQ(code_of([&] { gm_.malloc(0); }), ErrorCode::kInvalidArgument);
}

TEST_F(GmlakeTest, SingleBlockSplitsAndSeedsCompanionStitch) {
  gm_.free(gm_.malloc(1 * kGiB));
  const TensorHandle h = gm_.malloc(384 * kMiB);
  EXPECT_EQ(state_of(h), AllocState::kSingleBlock);
  EXPECT_EQ(gm_.tensor(h).bound.size, 384 * kMiB);
  EXPECT_EQ(ppool_sizes(), (std::vector<Bytes>{640 * kMiB, 384 * kMiB}));
  const GmlakeSnapshot snap = gm_.snapshot();
  ASSERT_EQ(snap.spool.size(), 1u);
  EXPECT_EQ(snap.spool[0].size, 1 * kGiB);
  EXPECT_TRUE(snap.spool[0].active);  // its front member is assigned
  expect_consistent();

  // The companion sBlock serves the original size once both halves are free.
  gm_.free(h);
  const TensorHandle again = gm_.malloc(1 * kGiB);
  EXPECT_EQ(state_of(again), AllocState::kExactMatch);
  EXPECT_EQ(gm_.tensor(again).bound.kind, BlockKind::kSBlock);
  expect_consistent();
}

TEST_F(GmlakeTest, SmallRemainderIsNotSplitOff) {
  gm_.free(gm_.malloc(300 * kMiB));
  const TensorHandle h = gm_.malloc(200 * kMiB);
  EXPECT_EQ(state_of(h), AllocState::kSingleBlock);
  EXPECT_EQ(gm_.tensor(h).bound.size, 300 * kMiB);
  EXPECT_EQ(gm_.tensor(h).rounded, 200 * kMiB);
  EXPECT_EQ(gm_.stats().splits, 0u);
  EXPECT_EQ(gm_.stats().active_bytes, 300 * kMiB);
  expect_consistent();
}

TEST_F(GmlakeTest, SmallFrontSkipsCompanionStitch) {
  gm_.free(gm_.malloc(1 * kGiB));
  const TensorHandle h = gm_.malloc(64 * kMiB);
  EXPECT_EQ(state_of(h), AllocState::kSingleBlock);
  EXPECT_EQ(gm_.stats().splits, 1u);
  EXPECT_TRUE(gm_.snapshot().spool.empty());
  expect_consistent();
}

TEST_F(GmlakeTest, MultipleBlocksAreStitchedExactly) {
  const TensorHandle a = gm_.malloc(512 * kMiB);
  const TensorHandle b = gm_.malloc(384 * kMiB);
  gm_.free(a);
  gm_.free(b);
  const std::size_t chunks = device_.live_chunk_count();
  const TensorHandle c = gm_.malloc(896 * kMiB);
  EXPECT_EQ(state_of(c), AllocState::kMultipleBlocks);
  EXPECT_EQ(gm_.tensor(c).bound.kind, BlockKind::kSBlock);
  EXPECT_EQ(gm_.tensor(c).bound.size, 896 * kMiB);
  EXPECT_EQ(device_.live_chunk_count(), chunks);
  expect_consistent();
}

TEST_F(GmlakeTest, MultipleBlocksSplitLargeOvershoot) {
  const TensorHandle a = gm_.malloc(512 * kMiB);
  const TensorHandle b = gm_.malloc(384 * kMiB);
  gm_.free(a);
  gm_.free(b);
  const TensorHandle c = gm_.malloc(640 * kMiB);  // 512 + 384 overshoots by 256
  EXPECT_EQ(state_of(c), AllocState::kMultipleBlocks);
  EXPECT_EQ(gm_.tensor(c).bound.size, 640 * kMiB);
  EXPECT_EQ(ppool_sizes(), (std::vector<Bytes>{512 * kMiB, 256 * kMiB, 128 * kMiB}));
  expect_consistent();
}

TEST_F(GmlakeTest, MultipleBlocksKeepSmallOvershoot) {
  const TensorHandle a = gm_.malloc(512 * kMiB);
  const TensorHandle b = gm_.malloc(384 * kMiB);
  gm_.free(a);
  gm_.free(b);
  const TensorHandle c = gm_.malloc(800 * kMiB);  // overshoot 96 MiB
  EXPECT_EQ(state_of(c), AllocState::kMultipleBlocks);
  EXPECT_EQ(gm_.tensor(c).bound.size, 896 * kMiB);
  EXPECT_EQ(gm_.stats().splits, 0u);
  expect_consistent();
}

TEST_F(GmlakeTest, InsufficientBlocksAreTopUpStitched) {
  const TensorHandle a = gm_.malloc(512 * kMiB);
  const TensorHandle b = gm_.malloc(256 * kMiB);
  gm_.free(a);
  gm_.free(b);
  const TensorHandle c = gm_.malloc(1 * kGiB);
  EXPECT_EQ(state_of(c), AllocState::kInsufficient);
  EXPECT_EQ(gm_.tensor(c).bound.kind, BlockKind::kSBlock);
  EXPECT_EQ(gm_.reserved_bytes(), 1 * kGiB);
  EXPECT_EQ(ppool_sizes(), (std::vector<Bytes>{512 * kMiB, 256 * kMiB, 256 * kMiB}));
  expect_consistent();
}

TEST_F(GmlakeTest, FreeingStitchedTensorReleasesMembers) {
  const TensorHandle a = gm_.malloc(512 * kMiB);
  const TensorHandle b = gm_.malloc(256 * kMiB);
  gm_.free(a);
  gm_.free(b);
  const TensorHandle c = gm_.malloc(768 * kMiB);
  ASSERT_EQ(gm_.tensor(c).bound.kind, BlockKind::kSBlock);
  for (const PBlockView& p : gm_.snapshot().ppool) EXPECT_TRUE(p.active);
  gm_.free(c);
  const GmlakeSnapshot snap = gm_.snapshot();
  for (const PBlockView& p : snap.ppool) EXPECT_FALSE(p.active);
  for (const SBlockView& s : snap.spool) EXPECT_FALSE(s.active);
  const TensorHandle d = gm_.malloc(768 * kMiB);
  EXPECT_EQ(state_of(d), AllocState::kExactMatch);
  EXPECT_EQ(gm_.tensor(d).bound.kind, BlockKind::kSBlock);
  expect_consistent();
}

TEST_F(GmlakeTest, AssigningMemberMarksSBlockActive) {
  const PBlockId a = gm_.alloc_pblock(256 * kMiB);
  const PBlockId b = gm_.alloc_pblock(128 * kMiB);
  const std::array<PBlockId, 2> members{a, b};
  gm_.stitch(members);
  const TensorHandle h = gm_.malloc(128 * kMiB);
  EXPECT_EQ(gm_.tensor(h).bound.id, b.value);
  EXPECT_TRUE(gm_.snapshot().spool[0].active);
  // The stitched 384 MiB alias cannot be handed out while `b` is in use.
  EXPECT_NE(state_of(gm_.malloc(384 * kMiB)), AllocState::kExactMatch);
  expect_consistent();
}

TEST_F(GmlakeTest, AdversarialStitchAvoidsOom) {
  Device dev({1280 * kMiB, 2 * kMiB});
  GmlakeAllocator gm(dev);
  const Bytes u = 128 * kMiB;
  gm.free(gm.malloc(10 * u));
  const TensorHandle h1 = gm.malloc(3 * u);
  const TensorHandle h2 = gm.malloc(2 * u);
  const TensorHandle h3 = gm.malloc(2 * u);
  const TensorHandle h4 = gm.malloc(3 * u);
  gm.free(h2);
  gm.free(h4);
  const TensorHandle h5 = gm.malloc(5 * u);
  EXPECT_EQ(gm.tensor(h5).state, AllocState::kMultipleBlocks);
  EXPECT_EQ(gm.stats().peak_reserved_bytes, 10 * u);
  EXPECT_EQ(gm.stats().active_bytes, 10 * u);
  for (const std::string& v : oracle::audit_gmlake(gm)) ADD_FAILURE() << v;
  (void)h1;
  (void)h3;
}

TEST_F(GmlakeTest, ReservedNeverShrinks) {
  const TensorHandle a = gm_.malloc(512 * kMiB);
  gm_.free(a);
  gm_.malloc(128 * kMiB);
  EXPECT_EQ(gm_.reserved_bytes(), 512 * kMiB);
  EXPECT_EQ(gm_.stats().peak_reserved_bytes, 512 * kMiB);
}

class GmlakeEvictionTest : public GmlakeTest {
 protected:
  GmlakeEvictionTest() : GmlakeTest(GmlakeConfig{kLimit, 511 * kMiB, std::nullopt, {}}) {}
};

TEST_F(GmlakeEvictionTest, UnderCapacityEvictsNothing) {
  const std::array<PBlockId, 2> m{gm_.alloc_pblock(128 * kMiB), gm_.alloc_pblock(128 * kMiB)};
  gm_.stitch(m);
  EXPECT_EQ(gm_.stitch_free(), 0u);
}

TEST_F(GmlakeEvictionTest, OldestInactiveSBlockGoesFirst) {
  const std::array<PBlockId, 2> m1{gm_.alloc_pblock(128 * kMiB), gm_.alloc_pblock(128 * kMiB)};
  const SBlockId older = gm_.stitch(m1);
  // Touch the next pair so the second sBlock is more recently used.
  gm_.free(gm_.malloc(6 * kMiB));
  const std::array<PBlockId, 2> m2{gm_.alloc_pblock(128 * kMiB), gm_.alloc_pblock(128 * kMiB)};
  const SBlockId newer = gm_.stitch(m2);
  const Bytes reserved = gm_.reserved_bytes();
  EXPECT_EQ(gm_.inactive_sblock_bytes(), 512 * kMiB);

  EXPECT_EQ(gm_.stitch_free(), 1u);
  const GmlakeSnapshot snap = gm_.snapshot();
  ASSERT_EQ(snap.spool.size(), 1u);
  EXPECT_EQ(snap.spool[0].id, newer);
  EXPECT_NE(snap.spool[0].id, older);
  EXPECT_EQ(gm_.reserved_bytes(), reserved);
  EXPECT_EQ(gm_.stats().evictions, 1u);
  expect_consistent();
}

TEST_F(GmlakeEvictionTest, ActiveSBlocksAreNeverEvicted) {
  const std::array<PBlockId, 2> m1{gm_.alloc_pblock(192 * kMiB), gm_.alloc_pblock(128 * kMiB)};
  const SBlockId held = gm_.stitch(m1);
  const TensorHandle h = gm_.malloc(320 * kMiB);  // assigns the sBlock
  ASSERT_EQ(gm_.tensor(h).bound.kind, BlockKind::kSBlock);
  const std::array<PBlockId, 2> m2{gm_.alloc_pblock(256 * kMiB), gm_.alloc_pblock(256 * kMiB)};
  gm_.stitch(m2);
  // Only the newer, inactive sBlock counts against the capacity.
  EXPECT_EQ(gm_.stitch_free(), 1u);
  ASSERT_EQ(gm_.snapshot().spool.size(), 1u);
  EXPECT_EQ(gm_.snapshot().spool[0].id, held);
  expect_consistent();
}

TEST(GmlakeOomTest, EvictionAndSmallPoolFlushBeforeOom) {
  Device dev({512 * kMiB, 2 * kMiB});
  GmlakeAllocator gm(dev);
  gm.free(gm.malloc(1 * kMiB));  // cached small-pool region
  const TensorHandle a = gm.malloc(512 * kMiB);
  EXPECT_EQ(gm.tensor(a).bound.size, 512 * kMiB);
  EXPECT_EQ(gm.stats().small_pool_reserved_bytes, 0u);
  try {
    gm.malloc(4 * kMiB);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfMemory);
  }
  EXPECT_EQ(gm.stats().state_counts[4], 1u);
  for (const std::string& v : oracle::audit_gmlake(gm)) ADD_FAILURE() << v;
}

TEST(GmlakeConfigTest, RejectsLimitBelowChunk) {
  Device dev;
  EXPECT_EQ(code_of([&] { GmlakeAllocator(dev, GmlakeConfig{kMiB, std::nullopt, std::nullopt, {}}); }),
            ErrorCode::kInvalidArgument);
}

TEST(GmlakeSteadyStateTest, PeriodicWorkloadConvergesToExactMatches) {
  Device dev;
  GmlakeAllocator gm(dev);
  std::mt19937_64 rng(3);
  std::vector<Bytes> sizes(120);
  for (Bytes& s : sizes) s = (2 + rng() % 400) * kMiB;
  std::vector<std::array<std::uint64_t, 5>> counts;
  for (int iter = 0; iter < 8; ++iter) {
    std::vector<TensorHandle> live;
    for (Bytes s : sizes) live.push_back(gm.malloc(s));
    while (!live.empty()) {
      gm.free(live.back());
      live.pop_back();
    }
    counts.push_back(gm.stats().state_counts);
  }
  // Once an iteration is all exact matches, every later one is too.
  auto non_exact = [](const std::array<std::uint64_t, 5>& c) { return c[1] + c[2] + c[3]; };
  EXPECT_EQ(non_exact(counts[4]), non_exact(counts.back()));
  EXPECT_EQ(counts.back()[0] - counts[6][0], sizes.size());
}

TEST(GmlakeRandomizedTest, InvariantsAndNoNewPeakAllocation) {
  Device dev({16 * kGiB, 2 * kMiB});
  GmlakeAllocator gm(dev, GmlakeConfig{kLimit, 2 * kGiB, std::nullopt, {}});
  std::mt19937_64 rng(11);
  std::vector<TensorHandle> live;
  for (int step = 0; step < 1500; ++step) {
    if (live.empty() || rng() % 100 < 55) {
      const Bytes size = rng() % 10 == 0 ? 1 + rng() % (2 * kMiB) : (1 + rng() % 900) * kMiB;
      const Bytes rounded = gm.round_size(size);
      Bytes stitchable = 0;
      for (const PBlockView& p : gm.snapshot().ppool) {
        if (!p.active && p.size >= kLimit) stitchable += p.size;
      }
      const std::uint64_t creates = dev.api_calls(VmApi::kCreate);
      try {
        const TensorHandle h = gm.malloc(size);
        live.push_back(h);
        if (dev.api_calls(VmApi::kCreate) != creates) {
          EXPECT_EQ(gm.tensor(h).state, AllocState::kInsufficient);
          EXPECT_LT(stitchable, rounded) << "step " << step;
        }
      } catch (const Error& e) {
        ASSERT_EQ(e.code(), ErrorCode::kOutOfMemory);
      }
    } else {
      const std::size_t i = rng() % live.size();
      gm.free(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    }
    for (const std::string& v : oracle::audit_gmlake(gm)) FAIL() << "step " << step << ": " << v;
    const BestFitResult got = gm.best_fit(64 * kMiB * (1 + step % 20));
    std::vector<oracle::Block> s;
    std::vector<oracle::Block> p;
    for (const SBlockView& b : gm.snapshot().spool) {
      if (!b.active) s.push_back({b.id.value, b.size});
    }
    for (const PBlockView& b : gm.snapshot().ppool) {
      if (!b.active) p.push_back({b.id.value, b.size});
    }
    EXPECT_EQ(got, oracle::brute_best_fit(64 * kMiB * (1 + step % 20), s, p, kLimit));
  }
}
