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

#include <iosfwd>
#include <string>
#include <vector>

namespace vmstitch {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitOom = 2;

// Entry point of the `vmstitch` tool. `args` excludes the program name.
//
//   gen     --pattern {periodic|irregular|adversarial} --preset NAME --seed N --out PATH
//   replay  --trace PATH --allocator {native|bfc|gmlake} [device flags]
//           --report PATH --timeline PATH
//   compare --trace PATH... --allocators LIST --out PATH [device flags]
//
// Returns 0 on success, 2 when a replay runs out of memory, 1 on usage,
// parse, or I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vmstitch
