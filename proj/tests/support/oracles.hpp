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

// Independent oracles used by the unit and acceptance tests. None of them
// share code with the implementation they check.

#include <functional>
#include <string>
#include <vector>

#include "vmstitch/bfc_allocator.hpp"
#include "vmstitch/gmlake_allocator.hpp"
#include "vmstitch/trace.hpp"

namespace vmstitch::oracle {

struct Block {
  std::uint64_t id = 0;
  Bytes size = 0;
};

// Best-fit selection by exhaustive search: exact match over sBlocks then pBlocks,
// else the smallest block larger than `size`, else the largest blocks
// accumulated greedily. Inputs need not be sorted.
BestFitResult brute_best_fit(Bytes size, std::vector<Block> sblocks, std::vector<Block> pblocks,
                             Bytes stitch_floor = 0);

// Structural audit of a GMLake allocator. Returns one message per broken
// invariant; empty means consistent.
std::vector<std::string> audit_gmlake(const GmlakeAllocator& gm);

// Tiling and coalescing audit of a BFC allocator.
std::vector<std::string> audit_bfc(const BfcAllocator& bfc);

// Minimum-size inactive block able to hold `rounded`, as (region, offset)
// candidates; empty when none fits.
std::vector<BfcBlockInfo> bfc_best_candidates(const BfcAllocator& bfc, Bytes rounded);

// Shrinks `trace` while `fails` keeps returning true. Dropping a malloc also
// drops its free, so every intermediate trace stays balanced.
Trace minimize_trace(Trace trace, const std::function<bool(const Trace&)>& fails);

}  // namespace vmstitch::oracle
