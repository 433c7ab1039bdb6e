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

// Detector backends. The replay backend reads YOLO-style `{seq}.txt` label
// files; the bridge backend talks newline-delimited JSON to an external
// model process so a real CNN can stand in.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "roadwatch/bytes.h"
#include "roadwatch/core.h"

namespace roadwatch {

struct FrameMeta {
    std::int64_t timestamp_ms = 0;
    double speed_mps = 0.0;
    double fps = 30.0;
};

struct Frame {
    std::uint64_t seq = 0;
    int width = 0;
    int height = 0;
    Bytes jpeg;
    FrameMeta meta;
};

struct DetectorConfig {
    double confidence_threshold = 0.25;
    ClassSet class_set = ClassSet::Four;
};

// One line of a label file: class and normalized centre/size, optional
// confidence.
struct LabelRecord {
    int class_id = 0;
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
    std::optional<double> conf;

    bool operator==(const LabelRecord&) const = default;
};

// Pixel box for a normalized record, rounded to the nearest pixel and
// clamped so it lies inside the frame with length, width >= 1.
BoundingBox denormalize(const LabelRecord& r, int frame_w, int frame_h);
// Inverse of denormalize (class id and confidence are not carried).
LabelRecord normalize(const BoundingBox& box, int frame_w, int frame_h);

// Throws ParseError for malformed text or out-of-range values.
LabelRecord parse_label_line(std::string_view line);
std::string format_label_line(const LabelRecord& r);
LabelRecord to_label(const Detection& d, int frame_w, int frame_h, bool with_conf);

// Frame seq -> records, parsed from every `{n}.txt` in `dir`. Class ids
// outside `set` are rejected with a ParseError naming file and line.
std::map<std::uint64_t, std::vector<LabelRecord>> load_label_dir(const std::filesystem::path& dir,
                                                                 ClassSet set);
void write_label_file(const std::filesystem::path& path, const std::vector<LabelRecord>& records);

// Turns records into detections for a frame: denormalize, confidence
// filter, class-set filter.
std::vector<Detection> records_to_detections(const std::vector<LabelRecord>& records, int frame_w,
                                             int frame_h, const DetectorConfig& cfg);

class Detector {
public:
    virtual ~Detector() = default;
    // Throws DetectorError on backend failure.
    virtual std::vector<Detection> detect(const Frame& frame, const DetectorConfig& cfg) = 0;
    virtual std::string describe() const = 0;
};

class ReplayDetector final : public Detector {
public:
    static std::unique_ptr<ReplayDetector> load(const std::filesystem::path& label_dir, ClassSet set);
    static std::unique_ptr<ReplayDetector> from_records(std::map<std::uint64_t, std::vector<LabelRecord>> records);

    std::vector<Detection> detect(const Frame& frame, const DetectorConfig& cfg) override;
    std::string describe() const override;

    const std::map<std::uint64_t, std::vector<LabelRecord>>& records() const { return records_; }

private:
    explicit ReplayDetector(std::map<std::uint64_t, std::vector<LabelRecord>> records, std::string origin);

    std::map<std::uint64_t, std::vector<LabelRecord>> records_;
    std::string origin_;
};

// Endpoint syntax:
//   exec:<command line>   spawn via /bin/sh, talk over stdin/stdout
//   unix:<path>           local stream socket
//   tcp:<host>:<port>     stream socket
class BridgeDetector final : public Detector {
public:
    explicit BridgeDetector(std::string endpoint,
                            std::chrono::milliseconds timeout = std::chrono::seconds(10));
    ~BridgeDetector() override;
    BridgeDetector(const BridgeDetector&) = delete;
    BridgeDetector& operator=(const BridgeDetector&) = delete;

    std::vector<Detection> detect(const Frame& frame, const DetectorConfig& cfg) override;
    std::string describe() const override { return "bridge(" + endpoint_ + ")"; }

private:
    void connect();
    void disconnect();
    void write_line(const std::string& line);
    std::string read_line();

    std::string endpoint_;
    std::chrono::milliseconds timeout_;
    int write_fd_ = -1;
    int read_fd_ = -1;
    int child_pid_ = -1;
    std::string buffer_;
};

// Build a detector from "labels dir" or "bridge endpoint" (exactly one set).
std::unique_ptr<Detector> make_detector(const std::optional<std::filesystem::path>& label_dir,
                                        const std::optional<std::string>& bridge_endpoint, ClassSet set);

}  // namespace roadwatch
