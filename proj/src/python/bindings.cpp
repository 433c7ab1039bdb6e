// Copyright 2026 The RoadWatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// The _roadwatch extension: size and skip rules, metrics, wire codecs and the
// simulation harness, with plain tuples, bytes and JSON strings at the edge.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "roadwatch/cli.h"
#include "roadwatch/core.h"
#include "roadwatch/errors.h"
#include "roadwatch/metrics.h"
#include "roadwatch/protocol.h"
#include "roadwatch/simharness.h"

namespace py = pybind11;
using namespace roadwatch;

namespace {

// (class_id, x, y, length, width[, confidence])
using BoxTuple = std::tuple<int, std::int64_t, std::int64_t, std::int64_t, std::int64_t, double>;

Detection to_detection(const BoxTuple& t) {
    const auto cls = class_from_id(std::get<0>(t));
    if (!cls) {
        throw py::value_error("unknown class id " + std::to_string(std::get<0>(t)));
    }
    return Detection{*cls, BoundingBox{std::get<1>(t), std::get<2>(t), std::get<3>(t), std::get<4>(t)}, std::get<5>(t)};
}

std::vector<Detection> to_detections(const std::vector<BoxTuple>& boxes) {
    std::vector<Detection> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        out.push_back(to_detection(b));
    }
    return out;
}

FrameDetections to_frames(const std::map<std::uint64_t, std::vector<BoxTuple>>& frames) {
    FrameDetections out;
    for (const auto& [seq, boxes] : frames) {
        out[seq] = to_detections(boxes);
    }
    return out;
}

py::bytes to_py(const Bytes& b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

Bytes from_py(const py::bytes& b) {
    const std::string_view v = b;
    return {v.begin(), v.end()};
}

py::dict counts_dict(const SessionCounts& c) {
    py::dict d;
    d["total"] = c.rsu.total();
    d["per_class"] = std::vector<std::uint64_t>(c.rsu.counts().begin(), c.rsu.counts().end());
    d["upload_seqs"] = c.upload_seqs;
    d["warnings"] = c.warnings;
    d["frames_seen"] = c.frames_seen;
    d["dropped_frames"] = c.dropped_frames;
    return d;
}

}  // namespace

PYBIND11_MODULE(_roadwatch, m) {
    m.doc() = "RoadWatch core bindings";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);

    m.attr("WARNING_TEXT") = std::string(kWarningText);
    m.attr("CHUNK_HEADER_SIZE") = kChunkHeaderSize;

    m.def(
        "classify_size",
        [](std::int64_t length, std::int64_t width, std::int64_t frame_w, std::int64_t frame_h, double rho) {
            return std::string(size_class_name(classify_size({0, 0, length, width}, frame_w, frame_h, SizeConfig{rho})));
        },
        py::arg("length"), py::arg("width"), py::arg("frame_w") = 640, py::arg("frame_h") = 640, py::arg("rho") = 0.1);
    m.def(
        "rho_pixels", [](std::int64_t w, std::int64_t h, double rho) { return rho_pixels(SizeConfig{rho}, w, h); },
        py::arg("frame_w") = 640, py::arg("frame_h") = 640, py::arg("rho") = 0.1);
    m.def(
        "compute_fsi", [](double speed_mps, double fps) { return compute_fsi({speed_mps, fps}); }, py::arg("speed_mps"),
        py::arg("fps"));
    m.def("skip_frames", [](double fsi) { return skip_policy(fsi).skip; }, py::arg("fsi"));
    m.def("kmh_to_mps", &kmh_to_mps);

    m.def(
        "iou", [](const BoxTuple& a, const BoxTuple& b) { return iou(to_detection(a).box, to_detection(b).box); },
        py::arg("a"), py::arg("b"));
    m.def(
        "match",
        [](const std::vector<BoxTuple>& preds, const std::vector<BoxTuple>& truths, double thr) {
            const auto c = match_detections(to_detections(preds), to_detections(truths), thr);
            return std::make_tuple(c.tp, c.fp, c.fn);
        },
        py::arg("preds"), py::arg("truths"), py::arg("iou_threshold") = kDefaultIou);
    m.def(
        "average_precision",
        [](const std::map<std::uint64_t, std::vector<BoxTuple>>& preds,
           const std::map<std::uint64_t, std::vector<BoxTuple>>& truths, int cls, double thr) {
            const auto c = class_from_id(cls);
            if (!c) {
                throw py::value_error("unknown class id " + std::to_string(cls));
            }
            return average_precision(to_frames(preds), to_frames(truths), *c, thr);
        },
        py::arg("preds"), py::arg("truths"), py::arg("class_id"), py::arg("iou_threshold") = kDefaultIou);

    m.def(
        "encode_control",
        [](const std::string& body) { return to_py(encode_control(decode_control_body(body))); }, py::arg("body"),
        "Length-prefixed frame for a JSON control body.");
    m.def(
        "decode_control", [](const py::bytes& frame) { return encode_control_body(decode_control(from_py(frame))); },
        py::arg("frame"));
    m.def("general_warning_text", &general_warning_text);
    m.def(
        "chunk_frame",
        [](const py::bytes& payload, std::uint32_t stream_id, std::uint32_t frame_seq, std::size_t mtu) {
            std::vector<py::bytes> out;
            for (const auto& c : chunk_frame(from_py(payload), stream_id, frame_seq, mtu)) {
                out.push_back(to_py(encode_chunk(c)));
            }
            return out;
        },
        py::arg("payload"), py::arg("stream_id"), py::arg("frame_seq"), py::arg("mtu") = kDefaultMtu);
    m.def(
        "reassemble",
        [](const std::vector<py::bytes>& datagrams) {
            Reassembler r;
            std::vector<std::tuple<std::uint32_t, std::uint32_t, py::bytes>> done;
            for (const auto& d : datagrams) {
                if (auto c = r.feed(decode_chunk(from_py(d)))) {
                    done.emplace_back(c->stream_id, c->frame_seq, to_py(c->payload));
                }
            }
            return done;
        },
        py::arg("datagrams"), "Completed (stream_id, frame_seq, payload) in completion order.");

    m.def(
        "random_scenario",
        [](std::uint64_t seed, bool exactly_once) {
            RandomScenarioOptions o;
            o.exactly_once = exactly_once;
            return scenario_to_json(random_scenario(seed, o));
        },
        py::arg("seed"), py::arg("exactly_once") = true);
    m.def(
        "oracle_count",
        [](const std::string& scenario, std::optional<std::uint32_t> skip) {
            const auto s = scenario_from_json(scenario);
            const auto o = oracle_count(s, skip ? SkipPolicy::manual(*skip) : skip_policy(s.fsi()));
            py::dict d;
            d["distinct"] = o.distinct_total;
            d["sightings"] = o.sightings;
            d["sighting_events"] = o.sighting_events;
            d["misses"] = o.misses;
            d["duplicates"] = o.duplicates;
            return d;
        },
        py::arg("scenario"), py::arg("skip") = py::none());
    m.def(
        "render_scenario",
        [](const std::string& scenario, const std::string& out_dir) {
            render_scenario(scenario_from_json(scenario), out_dir);
        },
        py::arg("scenario"), py::arg("out_dir"));
    m.def(
        "run_equivalence",
        [](const std::string& scenario) {
            EquivalenceReport r;
            {
                py::gil_scoped_release release;
                r = run_equivalence(scenario_from_json(scenario));
            }
            py::dict d;
            d["equal"] = r.equal;
            d["failure"] = r.failure;
            d["mode1"] = counts_dict(r.mode1);
            d["mode2"] = counts_dict(r.mode2);
            return d;
        },
        py::arg("scenario"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return std::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the roadwatch CLI in process; returns (exit_code, stdout, stderr).");
}
