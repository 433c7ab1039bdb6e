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

#include "roadwatch/detector.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "roadwatch/errors.h"

namespace roadwatch {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
            ++i;
        }
        if (i > start) {
            out.push_back(line.substr(start, i - start));
        }
    }
    return out;
}

double parse_unit_real(std::string_view token, const char* what) {
    double value = 0.0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw ParseError(std::string("invalid ") + what + " '" + std::string(token) + "'");
    }
    if (value < 0.0 || value > 1.0) {
        throw ParseError(std::string(what) + " out of [0,1]: " + std::string(token));
    }
    return value;
}

std::string shortest(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::optional<std::uint64_t> seq_from_stem(const fs::path& path) {
    const auto stem = path.stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    std::uint64_t seq = 0;
    const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), seq);
    if (ec != std::errc{}) {
        return std::nullopt;
    }
    return seq;
}

}  // namespace

BoundingBox denormalize(const LabelRecord& r, int frame_w, int frame_h) {
    if (frame_w <= 0 || frame_h <= 0) {
        throw ArgumentError("frame dimensions must be positive");
    }
    const std::int64_t fw = frame_w;
    const std::int64_t fh = frame_h;
    const auto length = std::clamp<std::int64_t>(std::llround(r.w * fw), 1, fw);
    const auto width = std::clamp<std::int64_t>(std::llround(r.h * fh), 1, fh);
    const auto x = std::clamp<std::int64_t>(std::llround(r.cx * fw - length / 2.0), 0, fw - length);
    const auto y = std::clamp<std::int64_t>(std::llround(r.cy * fh - width / 2.0), 0, fh - width);
    return BoundingBox{x, y, length, width};
}

LabelRecord normalize(const BoundingBox& box, int frame_w, int frame_h) {
    if (frame_w <= 0 || frame_h <= 0) {
        throw ArgumentError("frame dimensions must be positive");
    }
    const double fw = frame_w;
    const double fh = frame_h;
    LabelRecord r;
    r.cx = (box.x + box.length / 2.0) / fw;
    r.cy = (box.y + box.width / 2.0) / fh;
    r.w = box.length / fw;
    r.h = box.width / fh;
    return r;
}

LabelRecord parse_label_line(std::string_view line) {
    const auto tokens = split_ws(line);
    if (tokens.size() != 5 && tokens.size() != 6) {
        throw ParseError("expected 5 or 6 fields, got " + std::to_string(tokens.size()));
    }
    LabelRecord r;
    const auto [ptr, ec] = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), r.class_id);
    if (ec != std::errc{} || ptr != tokens[0].data() + tokens[0].size()) {
        throw ParseError("invalid class id '" + std::string(tokens[0]) + "'");
    }
    r.cx = parse_unit_real(tokens[1], "cx");
    r.cy = parse_unit_real(tokens[2], "cy");
    r.w = parse_unit_real(tokens[3], "w");
    r.h = parse_unit_real(tokens[4], "h");
    if (tokens.size() == 6) {
        r.conf = parse_unit_real(tokens[5], "conf");
    }
    return r;
}

std::string format_label_line(const LabelRecord& r) {
    std::string out = std::to_string(r.class_id);
    for (double v : {r.cx, r.cy, r.w, r.h}) {
        out += ' ';
        out += shortest(v);
    }
    if (r.conf) {
        out += ' ';
        out += shortest(*r.conf);
    }
    return out;
}

LabelRecord to_label(const Detection& d, int frame_w, int frame_h, bool with_conf) {
    auto r = normalize(d.box, frame_w, frame_h);
    r.class_id = class_id(d.cls);
    if (with_conf) {
        r.conf = d.confidence;
    }
    return r;
}

std::map<std::uint64_t, std::vector<LabelRecord>> load_label_dir(const fs::path& dir, ClassSet set) {
    if (!fs::is_directory(dir)) {
        throw ArgumentError("label directory does not exist: " + dir.string());
    }
    std::map<std::uint64_t, std::vector<LabelRecord>> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") {
            continue;
        }
        const auto seq = seq_from_stem(entry.path());
        if (!seq) {
            continue;
        }
        std::ifstream in(entry.path());
        std::string line;
        std::size_t line_no = 0;
        std::vector<LabelRecord> records;
        while (std::getline(in, line)) {
            ++line_no;
            if (split_ws(line).empty()) {
                continue;
            }
            const auto where = entry.path().string() + ":" + std::to_string(line_no);
            LabelRecord r;
            try {
                r = parse_label_line(line);
            } catch (const ParseError& e) {
                throw ParseError(where + ": " + e.what());
            }
            const auto cls = class_from_id(r.class_id);
            if (!cls || !in_class_set(*cls, set)) {
                throw ParseError(where + ": unknown class id " + std::to_string(r.class_id));
            }
            records.push_back(r);
        }
        out.emplace(*seq, std::move(records));
    }
    return out;
}

void write_label_file(const fs::path& path, const std::vector<LabelRecord>& records) {
    std::string text;
    for (const auto& r : records) {
        text += format_label_line(r);
        text += '\n';
    }
    write_file_atomic(path, text);
}

std::vector<Detection> records_to_detections(const std::vector<LabelRecord>& records, int frame_w,
                                             int frame_h, const DetectorConfig& cfg) {
    std::vector<Detection> out;
    for (const auto& r : records) {
        const double conf = r.conf.value_or(1.0);
        if (conf < cfg.confidence_threshold) {
            continue;
        }
        const auto cls = class_from_id(r.class_id);
        if (!cls || !in_class_set(*cls, cfg.class_set)) {
            continue;
        }
        out.push_back(Detection{*cls, denormalize(r, frame_w, frame_h), conf});
    }
    return out;
}

ReplayDetector::ReplayDetector(std::map<std::uint64_t, std::vector<LabelRecord>> records, std::string origin)
    : records_(std::move(records)), origin_(std::move(origin)) {}

std::unique_ptr<ReplayDetector> ReplayDetector::load(const fs::path& label_dir, ClassSet set) {
    return std::unique_ptr<ReplayDetector>(new ReplayDetector(load_label_dir(label_dir, set), label_dir.string()));
}

std::unique_ptr<ReplayDetector> ReplayDetector::from_records(
    std::map<std::uint64_t, std::vector<LabelRecord>> records) {
    return std::unique_ptr<ReplayDetector>(new ReplayDetector(std::move(records), "<memory>"));
}

std::vector<Detection> ReplayDetector::detect(const Frame& frame, const DetectorConfig& cfg) {
    if (frame.width <= 0 || frame.height <= 0) {
        throw ArgumentError("frame dimensions must be positive");
    }
    const auto it = records_.find(frame.seq);
    if (it == records_.end()) {
        return {};
    }
    return records_to_detections(it->second, frame.width, frame.height, cfg);
}

std::string ReplayDetector::describe() const {
    return "replay(" + origin_ + ", " + std::to_string(records_.size()) + " label files)";
}

std::unique_ptr<Detector> make_detector(const std::optional<fs::path>& label_dir,
                                        const std::optional<std::string>& bridge_endpoint, ClassSet set) {
    if (label_dir && bridge_endpoint) {
        throw ArgumentError("choose either a label directory or a bridge endpoint, not both");
    }
    if (label_dir) {
        return ReplayDetector::load(*label_dir, set);
    }
    if (bridge_endpoint) {
        return std::make_unique<BridgeDetector>(*bridge_endpoint);
    }
    throw ArgumentError("a detector needs --labels or --bridge");
}

}  // namespace roadwatch
