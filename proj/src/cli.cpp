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

#include "vmstitch/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "vmstitch/error.hpp"
#include "vmstitch/metrics.hpp"
#include "vmstitch/replay.hpp"
#include "vmstitch/trace.hpp"

namespace vmstitch {

namespace {

namespace fs = std::filesystem;

struct DeviceFlags {
  std::string capacity = "80GiB";
  std::string chunk_size = "2MiB";
  std::string frag_limit = "128MiB";
  std::string spool_capacity;

  void attach(CLI::App& cmd) {
    cmd.add_option("--capacity", capacity, "Simulated device memory")->capture_default_str();
    cmd.add_option("--chunk-size", chunk_size, "Physical chunk granularity")
        ->capture_default_str();
    cmd.add_option("--frag-limit", frag_limit, "Smallest block split off or stitched")
        ->capture_default_str();
    cmd.add_option("--spool-capacity", spool_capacity,
                   "Inactive stitched bytes kept before LRU eviction (default: capacity)");
  }

  ReplayConfig config(AllocatorKind kind) const {
    ReplayConfig c;
    c.allocator = kind;
    c.device.capacity_bytes = parse_bytes(capacity);
    c.device.chunk_size = parse_bytes(chunk_size);
    c.device.validate();
    c.gmlake.fragmentation_limit = parse_bytes(frag_limit);
    if (!spool_capacity.empty()) c.gmlake.spool_capacity = parse_bytes(spool_capacity);
    return c;
  }
};

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << contents;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

std::string fixed(double value, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << value;
  return s.str();
}

std::string gib(Bytes bytes) { return fixed(static_cast<double>(bytes) / kGiB, 3) + "GiB"; }

// ------------------------------------------------------------------ gen

struct GenArgs {
  std::string pattern;
  std::string preset = "regular-desk";
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> allocs;
  std::optional<std::string> mean;
  std::optional<double> sigma;
  std::optional<double> extra_fraction;
  std::optional<double> interleave_fraction;
  std::size_t gpus = 1;
  std::string unit = "128MiB";
};

fs::path rank_path(const fs::path& out, std::size_t rank) {
  fs::path p = out;
  p.replace_extension();
  return fs::path(p.string() + ".rank" + std::to_string(rank) + ".jsonl");
}

int run_gen(const GenArgs& a, std::ostream& out) {
  std::string pattern = a.pattern;
  if (pattern.empty()) {
    pattern = a.preset == "irregular-desk" ? "irregular"
              : a.preset == "adversarial"  ? "adversarial"
                                           : "periodic";
  }

  std::vector<std::pair<fs::path, Trace>> outputs;
  if (pattern == "adversarial") {
    outputs.emplace_back(a.out, gen_adversarial(parse_bytes(a.unit)));
  } else {
    if (pattern != "periodic" && pattern != "irregular") {
      throw Error(ErrorCode::kInvalidArgument, "unknown pattern '" + pattern + "'");
    }
    GeneratorParams params = generator_preset(a.preset);
    params.seed = a.seed;
    if (a.iterations) params.iterations = *a.iterations;
    if (a.allocs) params.allocs_per_iteration = *a.allocs;
    if (a.mean) params.size.mean = parse_bytes(*a.mean);
    if (a.sigma) params.size.sigma = *a.sigma;
    if (a.extra_fraction) params.irregularity.extra_alloc_fraction = *a.extra_fraction;
    if (a.interleave_fraction) params.irregularity.interleave_fraction = *a.interleave_fraction;
    if (a.gpus == 0) throw Error(ErrorCode::kInvalidArgument, "--gpus must be positive");

    // Scale-out: each rank holds 1/N of every tensor and its own seed.
    for (std::size_t rank = 0; rank < a.gpus; ++rank) {
      GeneratorParams p = params;
      p.size.mean = std::max<Bytes>(params.size.mean / a.gpus, kMinGeneratedSize);
      p.seed = params.seed + rank;
      Trace t = pattern == "periodic" ? gen_periodic(p) : gen_irregular(p);
      outputs.emplace_back(a.gpus == 1 ? fs::path(a.out) : rank_path(a.out, rank), std::move(t));
    }
  }

  for (const auto& [path, trace] : outputs) {
    write_trace_file(path, trace);
    const TraceStats s = trace_stats(trace);
    out << path.string() << ": events=" << trace.size() << " allocs=" << s.alloc_count
        << " mean_size=" << fixed(s.mean_size / kMiB, 2) << "MiB"
        << " peak_live=" << fixed(static_cast<double>(s.peak_live_bytes) / kGiB, 3) << "GiB\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------- replay

struct ReplayArgs {
  std::string trace;
  std::string allocator = "gmlake";
  DeviceFlags device;
  std::string report;
  std::string timeline;
};

void print_summary(std::ostream& out, const ReplayReport& r) {
  out << r.allocator << ": peak_active=" << gib(r.peak_active)
      << " peak_reserved=" << gib(r.peak_reserved)
      << " utilization=" << fixed(r.utilization_ratio, 4)
      << " fragmentation=" << fixed(r.fragmentation_ratio, 4)
      << " cost=" << fixed(r.simulated_cost, 3) << (r.oom ? " OOM" : "") << "\n";
  if (r.state_counts) {
    out << "  states:";
    for (std::size_t i = 0; i < r.state_counts->size(); ++i) {
      out << " S" << (i + 1) << "=" << (*r.state_counts)[i];
    }
    if (r.last_non_exact_seq) out << " last_non_exact_seq=" << *r.last_non_exact_seq;
    out << "\n";
  }
}

int run_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  const ReplayConfig config = a.device.config(parse_allocator_kind(a.allocator));
  const Trace trace = read_trace_file(a.trace);
  const ReplayResult result = replay(trace, config);
  if (!a.report.empty()) write_file(a.report, report_to_json(result.report));
  if (!a.timeline.empty()) write_file(a.timeline, timeline_csv(result.timeline));
  print_summary(out, result.report);
  if (result.report.oom) {
    err << "out of memory at " << result.failure << "\n";
    return kExitOom;
  }
  return kExitOk;
}

// -------------------------------------------------------------- compare

struct CompareArgs {
  std::vector<std::string> traces;
  std::vector<std::string> allocators{"bfc", "gmlake"};
  DeviceFlags device;
  std::string out;
};

int run_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<AllocatorKind> kinds;
  for (const std::string& name : a.allocators) {
    const AllocatorKind k = parse_allocator_kind(name);
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  if (kinds.size() < 2) {
    err << "compare needs at least two distinct allocators\n";
    return kExitUsage;
  }

  struct Row {
    std::string trace;
    std::size_t trace_index = 0;
    ReplayReport report;
  };
  std::vector<Row> rows;
  std::map<AllocatorKind, std::vector<Bytes>> reserved;
  std::vector<bool> trace_complete;
  for (const std::string& path : a.traces) {
    const Trace trace = read_trace_file(path);
    bool complete = true;
    for (AllocatorKind k : kinds) {
      ReplayResult r = replay(trace, a.device.config(k));
      complete = complete && !r.report.oom;
      reserved[k].push_back(r.report.peak_reserved);
      rows.push_back({path, trace_complete.size(), std::move(r.report)});
    }
    trace_complete.push_back(complete);
  }

  // Paired reduction over the traces every allocator completed.
  std::optional<double> reduction;
  if (reserved.contains(AllocatorKind::kBfc) && reserved.contains(AllocatorKind::kGmlake)) {
    std::vector<Bytes> base;
    std::vector<Bytes> cand;
    for (std::size_t i = 0; i < trace_complete.size(); ++i) {
      if (!trace_complete[i]) continue;
      base.push_back(reserved[AllocatorKind::kBfc][i]);
      cand.push_back(reserved[AllocatorKind::kGmlake][i]);
    }
    if (!base.empty()) reduction = mem_reduction_ratio(base, cand);
  }

  std::string csv =
      "trace,allocator,peak_active,peak_reserved,utilization_ratio,fragmentation_ratio,"
      "simulated_cost,oom,mem_reduction_vs_bfc\n";
  for (const Row& row : rows) {
    const ReplayReport& r = row.report;
    std::ostringstream line;
    line << std::setprecision(17) << row.trace << ',' << r.allocator << ',' << r.peak_active
         << ',' << r.peak_reserved << ',' << r.utilization_ratio << ',' << r.fragmentation_ratio
         << ',' << r.simulated_cost << ',' << (r.oom ? "true" : "false") << ',';
    if (r.allocator == "gmlake" && reduction && trace_complete[row.trace_index]) {
      const Bytes base = reserved[AllocatorKind::kBfc][row.trace_index];
      const Bytes cand = reserved[AllocatorKind::kGmlake][row.trace_index];
      line << mem_reduction_ratio(std::span(&base, 1), std::span(&cand, 1));
    }
    csv += line.str() + "\n";
  }
  if (!a.out.empty()) write_file(a.out, csv);

  out << std::left << std::setw(10) << "allocator" << std::right << std::setw(16)
      << "peak_active" << std::setw(16) << "peak_reserved" << std::setw(13) << "utilization"
      << std::setw(15) << "fragmentation" << std::setw(14) << "cost" << "  status\n";
  for (const Row& row : rows) {
    const ReplayReport& r = row.report;
    out << std::left << std::setw(10) << r.allocator << std::right << std::setw(16)
        << gib(r.peak_active) << std::setw(16) << gib(r.peak_reserved)
        << std::setw(13) << fixed(r.utilization_ratio, 4) << std::setw(15)
        << fixed(r.fragmentation_ratio, 4) << std::setw(14) << fixed(r.simulated_cost, 2) << "  "
        << (r.oom ? "OOM" : "ok") << (a.traces.size() > 1 ? "  " + row.trace : "") << "\n";
  }
  if (reduction) out << "mem_reduction_ratio(gmlake vs bfc) = " << fixed(*reduction, 4) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace-driven GPU memory allocator simulator", "vmstitch"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate an allocation trace");
  gen_cmd->add_option("--pattern", gen.pattern, "periodic | irregular | adversarial");
  gen_cmd->add_option("--preset", gen.preset, "regular-desk | irregular-desk | adversarial")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output .jsonl path")->required();
  gen_cmd->add_option("--iterations", gen.iterations);
  gen_cmd->add_option("--allocs", gen.allocs, "Allocations per iteration");
  gen_cmd->add_option("--mean", gen.mean, "Mean allocation size");
  gen_cmd->add_option("--sigma", gen.sigma, "Log-normal shape");
  gen_cmd->add_option("--extra-fraction", gen.extra_fraction);
  gen_cmd->add_option("--interleave-fraction", gen.interleave_fraction);
  gen_cmd->add_option("--gpus", gen.gpus, "Write one partitioned trace per GPU")
      ->capture_default_str();
  gen_cmd->add_option("--unit", gen.unit, "Block unit of the adversarial pattern")
      ->capture_default_str();

  ReplayArgs rep;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Replay a trace under one allocator");
  replay_cmd->add_option("--trace", rep.trace)->required();
  replay_cmd->add_option("--allocator", rep.allocator, "native | bfc | gmlake")
      ->capture_default_str();
  rep.device.attach(*replay_cmd);
  replay_cmd->add_option("--report", rep.report, "Report JSON path");
  replay_cmd->add_option("--timeline", rep.timeline, "Timeline CSV path");

  CompareArgs cmp;
  CLI::App* compare_cmd = app.add_subcommand("compare", "Replay traces under several allocators");
  compare_cmd->add_option("--trace", cmp.traces)->required();
  compare_cmd->add_option("--allocators", cmp.allocators, "Comma-separated list")
      ->delimiter(',')
      ->capture_default_str();
  cmp.device.attach(*compare_cmd);
  compare_cmd->add_option("--out", cmp.out, "Comparison CSV path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen, out);
    if (*replay_cmd) return run_replay(rep, out, err);
    if (*compare_cmd) return run_compare(cmp, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace vmstitch
