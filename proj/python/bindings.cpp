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


// Python bindings. Sizes are plain integers in bytes; handles and block ids
// are exposed as integers.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "vmstitch/replay.hpp"

namespace py = pybind11;
using namespace vmstitch;

namespace {

py::dict report_dict(const ReplayReport& r) {
  py::dict d;
  d["allocator"] = r.allocator;
  d["peak_active"] = r.peak_active;
  d["peak_reserved"] = r.peak_reserved;
  d["peak_requested"] = r.peak_requested;
  d["utilization_ratio"] = r.utilization_ratio;
  d["fragmentation_ratio"] = r.fragmentation_ratio;
  d["simulated_cost"] = r.simulated_cost;
  d["teardown_cost"] = r.teardown_cost;
  d["oom"] = r.oom;
  d["state_counts"] = r.state_counts;
  d["last_non_exact_seq"] = r.last_non_exact_seq;
  return d;
}

GeneratorParams params_from(const std::string& preset, std::uint64_t seed,
                            std::optional<std::size_t> iterations) {
  GeneratorParams p = generator_preset(preset);
  p.seed = seed;
  if (iterations) p.iterations = *iterations;
  return p;
}

}  // namespace

PYBIND11_MODULE(_vmstitch, m) {
  m.doc() = "Simulator for caching and virtual-memory-stitching GPU allocators.";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<TraceError>(m, "TraceError", error.ptr());

  m.attr("KiB") = kKiB;
  m.attr("MiB") = kMiB;
  m.attr("GiB") = kGiB;

  py::class_<DeviceConfig>(m, "DeviceConfig")
      .def(py::init([](Bytes capacity, Bytes chunk) { return DeviceConfig{capacity, chunk}; }),
           py::arg("capacity_bytes") = 80 * kGiB, py::arg("chunk_size") = 2 * kMiB)
      .def_readwrite("capacity_bytes", &DeviceConfig::capacity_bytes)
      .def_readwrite("chunk_size", &DeviceConfig::chunk_size);

  py::class_<Device>(m, "Device")
      .def(py::init([](Bytes capacity, Bytes chunk) {
             return std::make_unique<Device>(DeviceConfig{capacity, chunk});
           }),
           py::arg("capacity_bytes") = 80 * kGiB, py::arg("chunk_size") = 2 * kMiB)
      .def_property_readonly("chunk_size", &Device::chunk_size)
      .def_property_readonly("chunk_bytes", &Device::chunk_bytes)
      .def_property_readonly("native_bytes", &Device::native_bytes)
      .def_property_readonly("free_capacity", &Device::free_capacity)
      .def_property_readonly("live_chunk_count", &Device::live_chunk_count)
      .def_property_readonly("live_mapping_count", &Device::live_mapping_count)
      .def("charge_query", &Device::charge_query)
      .def("teardown_cost", &Device::teardown_cost)
      .def("reserve_address",
           [](Device& d, Bytes length) {
             const VirtualRange r = d.reserve_address(length);
             return py::make_tuple(r.base, r.length);
           })
      .def("create_chunks",
           [](Device& d, std::size_t count) {
             std::vector<std::uint64_t> ids;
             for (ChunkId c : d.create_chunks(count)) ids.push_back(c.value);
             return ids;
           })
      .def("map", [](Device& d, std::pair<std::uint64_t, Bytes> range,
                     const std::vector<std::uint64_t>& chunks) {
        std::vector<ChunkId> ids;
        for (std::uint64_t c : chunks) ids.push_back(ChunkId{c});
        return d.map(VirtualRange{range.first, range.second}, ids).value;
      });

  py::class_<BfcAllocator>(m, "BfcAllocator")
      .def(py::init<Device&>(), py::arg("device"), py::keep_alive<1, 2>())
      .def("malloc", [](BfcAllocator& a, Bytes size) { return a.malloc(size).value; })
      .def("free", [](BfcAllocator& a, std::uint64_t h) { a.free(BfcHandle{h}); })
      .def("round_size", &BfcAllocator::round_size)
      .def("release_cached", &BfcAllocator::release_cached)
      .def_property_readonly("active_bytes", &BfcAllocator::active_bytes)
      .def_property_readonly("reserved_bytes", &BfcAllocator::reserved_bytes);

  py::class_<GmlakeAllocator>(m, "GmlakeAllocator")
      .def(py::init([](Device& d, Bytes limit, std::optional<Bytes> spool) {
             GmlakeConfig c;
             c.fragmentation_limit = limit;
             c.spool_capacity = spool;
             return std::make_unique<GmlakeAllocator>(d, c);
           }),
           py::arg("device"), py::arg("fragmentation_limit") = 128 * kMiB,
           py::arg("spool_capacity") = py::none(), py::keep_alive<1, 2>())
      .def("malloc", [](GmlakeAllocator& a, Bytes size) { return a.malloc(size).value; })
      .def("free", [](GmlakeAllocator& a, std::uint64_t h) { a.free(TensorHandle{h}); })
      .def("round_size", &GmlakeAllocator::round_size)
      .def("state_of",
           [](const GmlakeAllocator& a, std::uint64_t h) -> std::optional<int> {
             const auto& s = a.tensor(TensorHandle{h}).state;
             if (!s) return std::nullopt;
             return static_cast<int>(*s);
           })
      .def("best_fit",
           [](const GmlakeAllocator& a, Bytes size) {
             const BestFitResult r = a.best_fit(size);
             std::vector<std::pair<std::string, std::uint64_t>> cands;
             for (const PoolEntry& e : r.candidates) {
               cands.emplace_back(e.kind == BlockKind::kSBlock ? "sblock" : "pblock", e.id);
             }
             return py::make_tuple(static_cast<int>(r.state), cands);
           })
      .def("stats",
           [](const GmlakeAllocator& a) {
             const GmlakeStats s = a.stats();
             py::dict d;
             d["active_bytes"] = s.active_bytes;
             d["reserved_bytes"] = s.reserved_bytes;
             d["peak_active_bytes"] = s.peak_active_bytes;
             d["peak_reserved_bytes"] = s.peak_reserved_bytes;
             d["state_counts"] = s.state_counts;
             d["splits"] = s.splits;
             d["stitches"] = s.stitches;
             d["evictions"] = s.evictions;
             d["pblocks"] = a.snapshot().ppool.size();
             d["sblocks"] = a.snapshot().spool.size();
             return d;
           })
      .def_property_readonly("active_bytes", &GmlakeAllocator::active_bytes)
      .def_property_readonly("reserved_bytes", &GmlakeAllocator::reserved_bytes);

  // Block selection over (id, size) pairs, pools in descending size order.
  m.def(
      "best_fit",
      [](Bytes size, const std::vector<std::pair<std::uint64_t, Bytes>>& sblocks,
         const std::vector<std::pair<std::uint64_t, Bytes>>& pblocks, Bytes floor) {
        struct Elem {
          std::uint64_t id;
          Bytes size;
        };
        std::vector<Elem> s;
        std::vector<Elem> p;
        for (const auto& [id, sz] : sblocks) s.push_back({id, sz});
        for (const auto& [id, sz] : pblocks) p.push_back({id, sz});
        const BestFitResult r = best_fit(size, s, p, floor);
        std::vector<std::uint64_t> ids;
        for (const PoolEntry& e : r.candidates) ids.push_back(e.id);
        return py::make_tuple(static_cast<int>(r.state), ids);
      },
      py::arg("size"), py::arg("sblocks"), py::arg("pblocks"), py::arg("stitch_floor") = 0);

  // Traces are lists of (seq, op, id, size) tuples with op "malloc" or "free".
  auto to_tuples = [](const Trace& t) {
    std::vector<std::tuple<std::uint64_t, std::string, std::uint64_t, Bytes>> out;
    out.reserve(t.size());
    for (const TraceEvent& e : t) {
      out.emplace_back(e.seq, e.op == TraceOp::kMalloc ? "malloc" : "free", e.id, e.size);
    }
    return out;
  };
  auto from_tuples =
      [](const std::vector<std::tuple<std::uint64_t, std::string, std::uint64_t, Bytes>>& in) {
        Trace t;
        t.reserve(in.size());
        for (const auto& [seq, op, id, size] : in) {
          if (op != "malloc" && op != "free") {
            throw Error(ErrorCode::kInvalidArgument, "unknown op '" + op + "'");
          }
          t.push_back({seq, op == "malloc" ? TraceOp::kMalloc : TraceOp::kFree, id, size});
        }
        return t;
      };

  m.def("generator_presets", &generator_preset_names);
  m.def(
      "gen_periodic",
      [=](const std::string& preset, std::uint64_t seed, std::optional<std::size_t> iterations) {
        return to_tuples(gen_periodic(params_from(preset, seed, iterations)));
      },
      py::arg("preset") = "regular-desk", py::arg("seed") = 0, py::arg("iterations") = py::none());
  m.def(
      "gen_irregular",
      [=](const std::string& preset, std::uint64_t seed, std::optional<std::size_t> iterations) {
        return to_tuples(gen_irregular(params_from(preset, seed, iterations)));
      },
      py::arg("preset") = "irregular-desk", py::arg("seed") = 0,
      py::arg("iterations") = py::none());
  m.def(
      "gen_adversarial", [=](Bytes unit) { return to_tuples(gen_adversarial(unit)); },
      py::arg("unit") = 128 * kMiB);
  m.def("parse_trace", [=](const std::string& text) { return to_tuples(parse_trace(text)); });
  m.def("serialize_trace", [=](const std::vector<std::tuple<std::uint64_t, std::string,
                                                             std::uint64_t, Bytes>>& t) {
    return serialize_trace(from_tuples(t));
  });
  m.def("trace_stats", [=](const std::vector<std::tuple<std::uint64_t, std::string,
                                                         std::uint64_t, Bytes>>& t) {
    const TraceStats s = trace_stats(from_tuples(t));
    py::dict d;
    d["alloc_count"] = s.alloc_count;
    d["free_count"] = s.free_count;
    d["mean_size"] = s.mean_size;
    d["total_bytes"] = s.total_bytes;
    d["peak_live_bytes"] = s.peak_live_bytes;
    return d;
  });

  m.def(
      "replay",
      [=](const std::vector<std::tuple<std::uint64_t, std::string, std::uint64_t, Bytes>>& t,
          const std::string& allocator, Bytes capacity, Bytes chunk, Bytes limit) {
        ReplayConfig c;
        c.allocator = parse_allocator_kind(allocator);
        c.device = DeviceConfig{capacity, chunk};
        c.gmlake.fragmentation_limit = limit;
        ReplayResult r;
        {
          py::gil_scoped_release release;
          r = replay(from_tuples(t), c);
        }
        return report_dict(r.report);
      },
      py::arg("trace"), py::arg("allocator") = "gmlake", py::arg("capacity_bytes") = 80 * kGiB,
      py::arg("chunk_size") = 2 * kMiB, py::arg("fragmentation_limit") = 128 * kMiB);

  m.def("utilization", &utilization, py::arg("peak_active"), py::arg("peak_reserved"));
  m.def(
      "mem_reduction_ratio",
      [](const std::vector<Bytes>& base, const std::vector<Bytes>& cand) {
        return mem_reduction_ratio(base, cand);
      },
      py::arg("baseline_reserved"), py::arg("candidate_reserved"));
}
