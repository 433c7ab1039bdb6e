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

#include "roadwatch/simharness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <sys/utsname.h>

#include <json.hpp>

#include "roadwatch/cloudsink.h"
#include "roadwatch/endnode.h"
#include "roadwatch/errors.h"
#include "roadwatch/image.h"
#include "roadwatch/log.h"
#include "roadwatch/rsu.h"

namespace roadwatch {

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kBoxAspect = 1.6;
constexpr std::uint8_t kRoadGray = 128;
constexpr std::uint8_t kAnomalyDark = 40;
constexpr int kFrameQuality = 75;

bool visible(const Scenario& s, std::uint64_t frame, double position) {
    const double start = static_cast<double>(frame) * s.fsi();
    return position >= start && position < start + s.camera_span_m;
}

}  // namespace

std::uint64_t Scenario::frame_count() const {
    const double f = fsi();
    if (!(f > 0.0)) {
        throw ArgumentError("FSI is zero (speed 0): the drive never ends");
    }
    // Tolerate representation error in road / FSI so 10 / (1/1) stays 10.
    return static_cast<std::uint64_t>(std::ceil(road_length_m / f - 1e-9));
}

void Scenario::validate() const {
    if (!(road_length_m > 0.0)) {
        throw ArgumentError("road_length_m must be positive");
    }
    if (!(fps > 0.0)) {
        throw ArgumentError("fps must be positive");
    }
    if (!(speed_mps > 0.0)) {
        throw ArgumentError("speed_mps must be positive (FSI = 0 gives infinite frames)");
    }
    if (!(camera_span_m > 0.0)) {
        throw ArgumentError("camera_span_m must be positive");
    }
    if (frame_width <= 0 || frame_height <= 0) {
        throw ArgumentError("frame dimensions must be positive");
    }
    for (const auto& a : anomalies) {
        if (!(a.position_m >= 0.0 && a.position_m < road_length_m)) {
            throw ArgumentError("anomaly position " + std::to_string(a.position_m) + " outside [0, road_length_m)");
        }
        if (!(a.bbox_fraction > 0.0 && a.bbox_fraction <= 1.0)) {
            throw ArgumentError("bbox_fraction must lie in (0, 1]");
        }
    }
}

std::string scenario_to_json(const Scenario& s) {
    ojson anomalies = ojson::array();
    for (const auto& a : s.anomalies) {
        anomalies.push_back(
            {{"position_m", a.position_m}, {"class", class_name(a.cls)}, {"bbox_fraction", a.bbox_fraction}});
    }
    return ojson{{"road_length_m", s.road_length_m},
                 {"anomalies", anomalies},
                 {"speed_mps", s.speed_mps},
                 {"fps", s.fps},
                 {"camera_span_m", s.camera_span_m},
                 {"frame_width", s.frame_width},
                 {"frame_height", s.frame_height},
                 {"seed", s.seed}}
        .dump(2);
}

Scenario scenario_from_json(const std::string& text) {
    Scenario s;
    try {
        const auto doc = ojson::parse(text);
        const auto& j = doc.contains("scenario") ? doc.at("scenario") : doc;
        s.road_length_m = j.at("road_length_m").get<double>();
        s.speed_mps = j.at("speed_mps").get<double>();
        s.fps = j.value("fps", s.fps);
        s.camera_span_m = j.value("camera_span_m", s.camera_span_m);
        s.frame_width = j.value("frame_width", s.frame_width);
        s.frame_height = j.value("frame_height", s.frame_height);
        s.seed = j.value("seed", s.seed);
        for (const auto& ja : j.value("anomalies", ojson::array())) {
            PlantedAnomaly a;
            a.position_m = ja.at("position_m").get<double>();
            const auto& c = ja.at("class");
            const auto cls = c.is_string() ? class_from_name(c.get<std::string>()) : class_from_id(c.get<int>());
            if (!cls) {
                throw ParseError("unknown anomaly class " + c.dump());
            }
            a.cls = *cls;
            a.bbox_fraction = ja.value("bbox_fraction", a.bbox_fraction);
            s.anomalies.push_back(a);
        }
    } catch (const ojson::exception& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }
    try {
        s.validate();
    } catch (const ArgumentError& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }
    return s;
}

Scenario load_scenario(const fs::path& path) {
    if (!fs::exists(path)) {
        throw std::runtime_error("scenario file not found: " + path.string());
    }
    const auto bytes = read_file(path);
    return scenario_from_json(std::string(bytes.begin(), bytes.end()));
}

BoundingBox anomaly_box(const Scenario& s, const PlantedAnomaly& a, double rel) {
    const double target = a.bbox_fraction * s.frame_width * s.frame_height;
    double l = std::sqrt(target * kBoxAspect);
    double w = target / l;
    // Keep the area when the aspect does not fit the frame.
    if (w > s.frame_height) {
        w = s.frame_height;
        l = target / w;
    }
    if (l > s.frame_width) {
        l = s.frame_width;
        w = target / l;
    }
    const auto length = std::clamp<std::int64_t>(std::llround(l), 1, s.frame_width);
    const auto width = std::clamp<std::int64_t>(std::llround(target / static_cast<double>(length)), 1, s.frame_height);
    const auto x = std::llround(std::clamp(rel, 0.0, 1.0) * static_cast<double>(s.frame_width - length));
    const auto y = (s.frame_height - width) / 2;
    return BoundingBox{x, y, length, width};
}

std::map<std::uint64_t, std::vector<LabelRecord>> scenario_labels(const Scenario& s) {
    s.validate();
    const auto n = s.frame_count();
    const double fsi = s.fsi();
    std::map<std::uint64_t, std::vector<LabelRecord>> labels;
    for (const auto& a : s.anomalies) {
        // Only frames whose window can contain the point need checking.
        const double lo = (a.position_m - s.camera_span_m) / fsi;
        const auto first = static_cast<std::uint64_t>(std::max(0.0, std::floor(lo) - 1.0));
        const auto last = std::min<std::uint64_t>(n - 1, static_cast<std::uint64_t>(a.position_m / fsi) + 1);
        for (auto f = first; f <= last; ++f) {
            if (!visible(s, f, a.position_m)) {
                continue;
            }
            const double rel = (a.position_m - static_cast<double>(f) * fsi) / s.camera_span_m;
            auto rec = normalize(anomaly_box(s, a, rel), s.frame_width, s.frame_height);
            rec.class_id = class_id(a.cls);
            labels[f].push_back(rec);
        }
    }
    return labels;
}

Bytes render_frame(const Scenario& s, const std::vector<LabelRecord>& labels) {
    static std::mutex cache_mutex;
    static std::map<std::pair<int, int>, Bytes> empty_cache;
    if (labels.empty()) {
        std::lock_guard lock(cache_mutex);
        auto& cached = empty_cache[{s.frame_width, s.frame_height}];
        if (cached.empty()) {
            cached = encode_jpeg(Image(s.frame_width, s.frame_height, 1, kRoadGray), kFrameQuality);
        }
        return cached;
    }
    Image img(s.frame_width, s.frame_height, 1, kRoadGray);
    for (const auto& r : labels) {
        fill_rect(img, denormalize(r, s.frame_width, s.frame_height), {kAnomalyDark, kAnomalyDark, kAnomalyDark});
    }
    return encode_jpeg(img, kFrameQuality);
}

void render_scenario(const Scenario& s, const fs::path& out_dir) {
    s.validate();
    const auto labels = scenario_labels(s);
    const auto n = s.frame_count();
    fs::create_directories(out_dir / "frames");
    fs::create_directories(out_dir / "labels");
    static const std::vector<LabelRecord> kNone;
    for (std::uint64_t f = 0; f < n; ++f) {
        const auto it = labels.find(f);
        const auto& recs = it == labels.end() ? kNone : it->second;
        write_file_atomic(out_dir / "frames" / (std::to_string(f) + ".jpg"), render_frame(s, recs));
        if (!recs.empty()) {
            write_label_file(out_dir / "labels" / (std::to_string(f) + ".txt"), recs);
        }
    }
    const ojson manifest{{"scenario", ojson::parse(scenario_to_json(s))},
                         {"fsi", s.fsi()},
                         {"frame_count", n},
                         {"labelled_frames", labels.size()},
                         {"frames_dir", "frames"},
                         {"labels_dir", "labels"},
                         {"seed", s.seed}};
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

OracleResult oracle_count(const Scenario& s, const SkipPolicy& policy) {
    s.validate();
    OracleResult r;
    r.sightings.assign(s.anomalies.size(), 0);
    const auto n = s.frame_count();
    const auto stride = policy.stride();
    for (std::uint64_t f = 0; f < n; f += stride) {
        const double start = static_cast<double>(f) * s.fsi();
        const double end = start + s.camera_span_m;
        for (std::size_t i = 0; i < s.anomalies.size(); ++i) {
            const double p = s.anomalies[i].position_m;
            if (p >= start && p < end) {
                ++r.sightings[i];
            }
        }
    }
    for (std::size_t i = 0; i < s.anomalies.size(); ++i) {
        const auto c = static_cast<std::size_t>(s.anomalies[i].cls);
        const auto seen = r.sightings[i];
        r.sighting_events += seen;
        r.events_by_class[c] += seen;
        if (seen == 0) {
            ++r.misses;
        } else {
            ++r.distinct[c];
            ++r.distinct_total;
            r.duplicates += seen - 1;
        }
    }
    return r;
}

Scenario random_scenario(std::uint64_t seed, const RandomScenarioOptions& opts) {
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    Scenario s;
    s.seed = seed;
    s.fps = opts.fps;
    s.speed_mps = uniform(opts.min_speed_mps, opts.max_speed_mps);
    s.road_length_m = uniform(opts.min_road_m, opts.max_road_m);
    const auto policy = skip_policy(compute_fsi(s.motion()));
    const double tile = static_cast<double>(policy.stride()) * s.fsi();
    s.camera_span_m = opts.exactly_once ? tile : tile * uniform(0.3, 2.5);

    // Keep points away from processed-window edges so the sighting count
    // does not hinge on the last bit of a floating-point comparison.
    auto near_edge = [&](double p) {
        const double margin = 0.02;
        for (double edge_origin : {0.0, s.camera_span_m}) {
            const double q = (p - edge_origin) / tile;
            const double frac = q - std::floor(q);
            if (frac < margin || frac > 1.0 - margin) {
                return true;
            }
        }
        return false;
    };

    const auto count = std::uniform_int_distribution<std::size_t>(opts.min_anomalies, opts.max_anomalies)(rng);
    const int classes = static_cast<int>(class_set_size(opts.classes));
    while (s.anomalies.size() < count) {
        PlantedAnomaly a;
        a.position_m = uniform(0.0, s.road_length_m);
        a.cls = *class_from_id(std::uniform_int_distribution<int>(0, classes - 1)(rng));
        a.bbox_fraction = uniform(0.01, 0.2);
        if (near_edge(a.position_m)) {
            continue;
        }
        s.anomalies.push_back(a);
    }
    std::sort(s.anomalies.begin(), s.anomalies.end(),
              [](const PlantedAnomaly& a, const PlantedAnomaly& b) { return a.position_m < b.position_m; });
    return s;
}

namespace {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("roadwatch-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string warning_key(const ControlMessage& msg) {
    if (const auto* w = std::get_if<Warning>(&msg)) {
        return "WARNING|" + w->text + "|" + std::to_string(w->class_id) + "|" + std::to_string(w->frame_seq);
    }
    if (const auto* g = std::get_if<GeneralWarning>(&msg)) {
        return "GENERAL_WARNING|" + g->text + "|" + std::to_string(g->count);
    }
    return std::string(message_type(msg));
}

std::vector<std::uint64_t> stored_seqs(const fs::path& root) {
    std::vector<std::uint64_t> seqs;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        return seqs;
    }
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            const auto bytes = read_file(entry.path());
            seqs.push_back(parse_sidecar(std::string(bytes.begin(), bytes.end())).frame_seq);
        }
    }
    std::sort(seqs.begin(), seqs.end());
    return seqs;
}

}  // namespace

SessionCounts run_session(const Scenario& s, OperatingMode mode, const SessionOptions& opts) {
    s.validate();
    TempDir tmp;
    const auto labels = scenario_labels(s);

    RsuConfig rc;
    rc.control_port = 0;
    rc.stream_port = 0;
    rc.api_enabled = false;
    rc.mode = mode;
    rc.threshold = opts.threshold;
    rc.detector.class_set = opts.classes;
    rc.sink = (tmp.path() / "sink").string();
    rc.upload_backoff = 50ms;
    rc.reassembly_timeout = 500ms;
    rc.autostart = true;
    std::unique_ptr<Detector> rsu_detector;
    if (mode == OperatingMode::Mode2) {
        rsu_detector = ReplayDetector::from_records(labels);
    }
    Rsu rsu(rc, std::move(rsu_detector));
    rsu.serve();
    if (mode == OperatingMode::Mode2 && opts.skip_override) {
        rsu.set_skip(*opts.skip_override);
    }

    EndnodeConfig ec;
    ec.mode = mode;
    ec.rsu = HostPort{"127.0.0.1", rsu.control_port()};
    ec.stream = HostPort{"127.0.0.1", rsu.stream_port()};
    ec.motion = s.motion();
    ec.detector.class_set = opts.classes;
    ec.node_id = "sim-endnode";
    ec.skip_override = opts.skip_override;
    ec.fast = true;
    ec.frame_gap = 100us;
    ec.loss_rate = opts.loss_rate;
    ec.seed = opts.seed;
    ec.retry_backoff = 100ms;

    GeneratedSource source(s.frame_count(), s.frame_width, s.frame_height, [&](std::uint64_t seq) {
        static const std::vector<LabelRecord> kNone;
        const auto it = labels.find(seq);
        return render_frame(s, it == labels.end() ? kNone : it->second);
    });

    SessionCounts out;
    if (mode == OperatingMode::Mode1) {
        auto detector = ReplayDetector::from_records(labels);
        const auto summary = run_mode1(ec, source, *detector);
        out.endnode = summary.counter;
        out.frames_seen = summary.frames_seen;
        out.reports_or_frames = summary.reports_sent;
        if (!rsu.wait_reports(summary.reports_sent, 30s)) {
            throw SessionError("RSU did not receive every report");
        }
    } else {
        const auto summary = run_mode2(ec, source);
        out.frames_seen = summary.frames_seen;
        out.reports_or_frames = summary.frames_streamed;
        if (opts.loss_rate > 0.0) {
            // Frames missing chunks only surface once the reassembly window passes.
            std::this_thread::sleep_for(rc.reassembly_timeout + 300ms);
            rsu.wait_frames(0, 30s);
        } else if (!rsu.wait_frames(summary.frames_streamed, 30s)) {
            throw SessionError("RSU did not receive every frame");
        }
    }
    if (!rsu.drain_uploads(30s)) {
        throw SessionError("uploads did not drain");
    }
    const auto st = rsu.status();
    out.rsu = st.counter;
    out.dropped_frames = st.dropped_frames;
    out.frames_processed = mode == OperatingMode::Mode2 ? st.frames_processed : 0;
    for (const auto& w : rsu.issued_warnings()) {
        out.warnings.push_back(warning_key(w));
    }
    std::sort(out.warnings.begin(), out.warnings.end());
    rsu.shutdown();
    out.upload_seqs = stored_seqs(tmp.path() / "sink");
    return out;
}

EquivalenceReport run_equivalence(const Scenario& s, const SessionOptions& opts) {
    EquivalenceReport report;
    try {
        SessionOptions lossless = opts;
        lossless.loss_rate = 0.0;
        report.mode1 = run_session(s, OperatingMode::Mode1, lossless);
        report.mode2 = run_session(s, OperatingMode::Mode2, opts);
    } catch (const std::exception& e) {
        report.failure = e.what();
        return report;
    }
    report.counts_equal = report.mode1.rsu == report.mode2.rsu && report.mode1.endnode.counts() == report.mode1.rsu.counts();
    report.uploads_equal = report.mode1.upload_seqs == report.mode2.upload_seqs;
    report.warnings_equal = report.mode1.warnings == report.mode2.warnings;
    report.equal = report.counts_equal && report.uploads_equal && report.warnings_equal;
    return report;
}

std::string host_descriptor() {
    std::string cpu = "unknown cpu";
    std::ifstream info("/proc/cpuinfo");
    for (std::string line; std::getline(info, line);) {
        if (line.starts_with("model name")) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                cpu = line.substr(colon + 2);
            }
            break;
        }
    }
    utsname u{};
    std::string os = "unknown os";
    if (uname(&u) == 0) {
        os = std::string(u.sysname) + " " + u.release + " " + u.machine;
    }
    return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " threads, " + os;
}

LatencyReport measure_latency(Detector& detector, const std::vector<Frame>& frames, std::size_t n_warmup,
                              const DetectorConfig& cfg) {
    if (frames.size() < n_warmup + 10) {
        throw ArgumentError("latency needs at least " + std::to_string(n_warmup + 10) + " frames, got " +
                            std::to_string(frames.size()));
    }
    std::vector<double> samples;
    samples.reserve(frames.size() - n_warmup);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        detector.detect(frames[i], cfg);
        const auto t1 = std::chrono::steady_clock::now();
        if (i >= n_warmup) {
            samples.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
    }
    LatencyReport r;
    r.frames = samples.size();
    double sum = 0.0;
    for (double v : samples) {
        sum += v;
    }
    r.mean_s = sum / static_cast<double>(samples.size());
    std::sort(samples.begin(), samples.end());
    auto rank = [&](double q) {
        const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
        return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
    };
    r.p50_s = rank(0.50);
    r.p95_s = rank(0.95);
    r.host = host_descriptor();
    return r;
}

std::vector<SweepRow> sweep(const Scenario& base, const std::vector<double>& speeds_kmh, const std::vector<int>& skips) {
    std::vector<SweepRow> rows;
    for (double kmh : speeds_kmh) {
        Scenario s = base;
        s.speed_mps = kmh_to_mps(kmh);
        for (int skip : skips) {
            const bool automatic = skip < 0;
            const auto policy =
                automatic ? skip_policy(compute_fsi(s.motion())) : SkipPolicy::manual(static_cast<std::uint32_t>(skip));
            const auto oracle = oracle_count(s, policy);
            SweepRow row;
            row.speed_kmh = kmh;
            row.fsi = s.fsi();
            row.skip = policy.skip;
            row.automatic = automatic;
            row.planted = s.anomalies.size();
            row.distinct = oracle.distinct_total;
            row.sightings = oracle.sighting_events;
            row.misses = oracle.misses;
            row.duplicates = oracle.duplicates;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%8s %8s %5s %5s %7s %8s %9s %6s %10s\n", "km/h", "FSI", "skip", "auto",
                  "planted", "distinct", "sightings", "misses", "duplicates");
    out += line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%8.2f %8.5f %5u %5s %7llu %8llu %9llu %6llu %10llu\n", r.speed_kmh, r.fsi,
                      r.skip, r.automatic ? "yes" : "no", static_cast<unsigned long long>(r.planted),
                      static_cast<unsigned long long>(r.distinct), static_cast<unsigned long long>(r.sightings),
                      static_cast<unsigned long long>(r.misses), static_cast<unsigned long long>(r.duplicates));
        out += line;
    }
    return out;
}

}  // namespace roadwatch
