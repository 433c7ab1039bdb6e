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

// Synthetic drives. The camera is a 1-D window: frame f sees the road
// interval [f*FSI, f*FSI + camera_span_m). Anomalies are points on the road
// that show up as one label per frame whose window contains them.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roadwatch/core.h"
#include "roadwatch/detector.h"
#include "roadwatch/protocol.h"

namespace roadwatch {

struct PlantedAnomaly {
    double position_m = 0.0;
    AnomalyClass cls = AnomalyClass::D40;
    double bbox_fraction = 0.05;  // of frame area

    bool operator==(const PlantedAnomaly&) const = default;
};

struct Scenario {
    double road_length_m = 100.0;
    std::vector<PlantedAnomaly> anomalies;
    double speed_mps = 5.0;
    double fps = 30.0;
    double camera_span_m = 5.0;
    int frame_width = 640;
    int frame_height = 640;
    std::uint64_t seed = 0;

    bool operator==(const Scenario&) const = default;

    MotionState motion() const { return {speed_mps, fps}; }
    double fsi() const { return speed_mps / fps; }
    // ceil(road_length_m / FSI). Throws ArgumentError when FSI is 0.
    std::uint64_t frame_count() const;
    // Throws ArgumentError.
    void validate() const;
};

std::string scenario_to_json(const Scenario& s);
// Accepts a bare scenario or a render manifest. Throws ParseError.
Scenario scenario_from_json(const std::string& text);
// Throws ParseError, or std::runtime_error naming a missing file.
Scenario load_scenario(const std::filesystem::path& path);

// Pixel box of an anomaly: area ~= bbox_fraction * w * h at aspect 1.6,
// slid horizontally with the anomaly's relative position in the window.
BoundingBox anomaly_box(const Scenario& s, const PlantedAnomaly& a, double rel);

// Label records per frame; frames without anomalies are absent.
std::map<std::uint64_t, std::vector<LabelRecord>> scenario_labels(const Scenario& s);

// Flat gray frame with a dark rectangle per label.
Bytes render_frame(const Scenario& s, const std::vector<LabelRecord>& labels);

// Writes frames/{f}.jpg, labels/{f}.txt (only non-empty) and manifest.json.
void render_scenario(const Scenario& s, const std::filesystem::path& out_dir);

struct OracleResult {
    std::array<std::uint64_t, kNumClasses> distinct{};  // anomalies sighted at least once, per class
    std::vector<std::uint64_t> sightings;               // per anomaly, on processed frames
    std::uint64_t sighting_events = 0;                  // sum of sightings
    std::uint64_t distinct_total = 0;
    std::uint64_t misses = 0;
    std::uint64_t duplicates = 0;
    std::array<std::uint64_t, kNumClasses> events_by_class{};
};

// Brute force over processed frames k * stride.
OracleResult oracle_count(const Scenario& s, const SkipPolicy& policy);

struct RandomScenarioOptions {
    std::size_t min_anomalies = 3;
    std::size_t max_anomalies = 12;
    double min_speed_mps = 2.0;
    double max_speed_mps = 25.0;
    double min_road_m = 60.0;
    double max_road_m = 160.0;
    double fps = 30.0;
    // camera_span_m = stride * FSI, with positions kept off window edges.
    bool exactly_once = true;
    ClassSet classes = ClassSet::Four;
};

Scenario random_scenario(std::uint64_t seed, const RandomScenarioOptions& opts = {});

struct SessionCounts {
    AnomalyCounter endnode;  // Mode 1 only
    AnomalyCounter rsu;
    std::vector<std::uint64_t> upload_seqs;  // sorted
    std::vector<std::string> warnings;       // "TYPE|text|class_id|frame_seq", sorted
    std::uint64_t frames_seen = 0;
    std::uint64_t frames_processed = 0;
    std::uint64_t reports_or_frames = 0;  // reports sent (mode 1) or frames streamed (mode 2)
    std::uint64_t dropped_frames = 0;
};

struct SessionOptions {
    std::optional<std::uint32_t> skip_override;
    std::uint64_t threshold = 10;
    double loss_rate = 0.0;
    std::uint64_t seed = 0;
    ClassSet classes = ClassSet::Four;
};

// Full session against a fresh in-process RSU bound to ephemeral loopback
// ports. Throws SessionError when the session does not settle.
SessionCounts run_session(const Scenario& s, OperatingMode mode, const SessionOptions& opts = {});

struct EquivalenceReport {
    SessionCounts mode1;
    SessionCounts mode2;
    bool counts_equal = false;
    bool uploads_equal = false;
    bool warnings_equal = false;
    bool equal = false;
    std::string failure;  // set when a session failed
};

EquivalenceReport run_equivalence(const Scenario& s, const SessionOptions& opts = {});

struct LatencyReport {
    std::size_t frames = 0;
    double mean_s = 0.0;
    double p50_s = 0.0;
    double p95_s = 0.0;
    std::string host;
};

std::string host_descriptor();

// Wall-clock per detect call, warmup excluded. Throws ArgumentError with
// fewer than n_warmup + 10 frames.
LatencyReport measure_latency(Detector& detector, const std::vector<Frame>& frames, std::size_t n_warmup = 5,
                              const DetectorConfig& cfg = {});

struct SweepRow {
    double speed_kmh = 0.0;
    double fsi = 0.0;
    std::uint32_t skip = 0;
    bool automatic = false;  // skip chosen by the FSI rule
    std::uint64_t planted = 0;
    std::uint64_t distinct = 0;
    std::uint64_t sightings = 0;
    std::uint64_t misses = 0;
    std::uint64_t duplicates = 0;
};

// Oracle counts for one anomaly layout driven at several speeds and skips.
// A skip value of -1 stands for the automatic FSI rule.
std::vector<SweepRow> sweep(const Scenario& base, const std::vector<double>& speeds_kmh,
                            const std::vector<int>& skips);

std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace roadwatch
