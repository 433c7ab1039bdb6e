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

#include "roadwatch/cli.h"

#include <atomic>
#include <csignal>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "roadwatch/cloudsink.h"
#include "roadwatch/endnode.h"
#include "roadwatch/errors.h"
#include "roadwatch/log.h"
#include "roadwatch/metrics.h"
#include "roadwatch/rsu.h"
#include "roadwatch/simharness.h"

namespace roadwatch {

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using ojson = nlohmann::ordered_json;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
}

// Reads JSON config files: top-level keys are global options, nested
// objects are subcommand sections.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        ojson j;
        try {
            j = ojson::parse(input);
        } catch (const ojson::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) {
            throw CLI::ConversionError("config must be a JSON object");
        }
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const ojson& v) {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_boolean()) {
            return v.get<bool>() ? "true" : "false";
        }
        return v.dump();
    }

    static void collect(const ojson& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_object()) {
                auto sub = parents;
                sub.push_back(key);
                collect(value, sub, out);
                continue;
            }
            if (value.is_null()) {
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) {
                    item.inputs.push_back(scalar(v));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            out.push_back(std::move(item));
        }
    }

    static ojson dump(const CLI::App* app, bool default_also) {
        ojson j = ojson::object();
        for (const auto* opt : app->get_options()) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) {
                continue;
            }
            const auto& name = opt->get_lnames().front();
            if (opt->count() > 0) {
                const auto& res = opt->results();
                j[name] = res.size() == 1 ? ojson(res.front()) : ojson(res);
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        for (const auto* sub : app->get_subcommands({})) {
            auto s = dump(sub, default_also);
            if (!s.empty()) {
                j[sub->get_name()] = s;
            }
        }
        return j;
    }
};

struct Globals {
    std::string log_level;
    std::string format = "text";

    bool json() const { return format == "json"; }
};

void emit(std::ostream& out, const ojson& j) {
    out << j.dump() << "\n";
    out.flush();
}

ojson counts_json(const AnomalyCounter& c, ClassSet set) {
    ojson per = ojson::object();
    for (std::size_t i = 0; i < class_set_size(set); ++i) {
        per[std::string(class_name(static_cast<AnomalyClass>(i)))] = c.counts()[i];
    }
    return per;
}

std::string counts_text(const AnomalyCounter& c, ClassSet set) {
    std::string s;
    for (std::size_t i = 0; i < class_set_size(set); ++i) {
        s += std::string(i ? " " : "") + std::string(class_name(static_cast<AnomalyClass>(i))) + "=" +
             std::to_string(c.counts()[i]);
    }
    return s + " total=" + std::to_string(c.total());
}

bool is_scenario_file(const std::string& source) {
    return fs::is_regular_file(source) && fs::path(source).extension() == ".json";
}

// Options shared by subcommands that build a scenario.
struct ScenarioArgs {
    std::string path;
    bool random = false;
    std::uint64_t seed = 1;
    bool overlapping = false;

    void add(CLI::App* app) {
        app->add_option("--scenario", path, "Scenario JSON file");
        app->add_flag("--random", random, "Generate a random scenario from --seed");
        app->add_option("--seed", seed, "Seed for --random (and fault injection)");
        app->add_flag("--overlapping", overlapping, "Random scenario outside the exactly-once regime");
    }

    Scenario load() const {
        if (!path.empty()) {
            return load_scenario(path);
        }
        if (!random) {
            throw ArgumentError("give --scenario <file> or --random");
        }
        RandomScenarioOptions opts;
        opts.exactly_once = !overlapping;
        return random_scenario(seed, opts);
    }
};

ClassSet classes_from(int n) { return class_set_from_count(static_cast<std::size_t>(n)); }

// ---- endnode -------------------------------------------------------------

struct EndnodeArgs {
    int mode = 1;
    std::string source;
    std::string labels;
    std::string bridge;
    std::string rsu = "127.0.0.1:7401";
    std::string stream = "127.0.0.1:7402";
    std::optional<double> speed_kmh;
    std::optional<double> fps;
    bool fast = false;
    std::string node_id = "endnode-1";
    std::optional<std::uint32_t> skip;
    double rho = 0.10;
    double conf = 0.25;
    int classes = 4;
    double loss = 0.0;
    std::uint64_t seed = 0;
    std::size_t mtu = kDefaultMtu;
};

int run_endnode(const EndnodeArgs& a, const Globals& g, std::ostream& out) {
    EndnodeConfig cfg;
    cfg.mode = mode_from_number(a.mode);
    cfg.rsu = parse_host_port(a.rsu);
    cfg.stream = parse_host_port(a.stream);
    cfg.size.rho_fraction = a.rho;
    cfg.detector = {a.conf, classes_from(a.classes)};
    cfg.node_id = a.node_id;
    cfg.skip_override = a.skip;
    cfg.fast = a.fast;
    cfg.loss_rate = a.loss;
    cfg.seed = a.seed;
    cfg.mtu = a.mtu;

    std::unique_ptr<FrameSource> source;
    std::unique_ptr<Detector> detector;
    if (is_scenario_file(a.source)) {
        const auto s = load_scenario(a.source);
        cfg.motion = s.motion();
        auto labels = std::make_shared<std::map<std::uint64_t, std::vector<LabelRecord>>>(scenario_labels(s));
        source = std::make_unique<GeneratedSource>(s.frame_count(), s.frame_width, s.frame_height,
                                                   [s, labels](std::uint64_t seq) {
                                                       static const std::vector<LabelRecord> kNone;
                                                       const auto it = labels->find(seq);
                                                       return render_frame(s, it == labels->end() ? kNone : it->second);
                                                   });
        if (a.labels.empty() && a.bridge.empty()) {
            detector = ReplayDetector::from_records(*labels);
        }
    } else if (fs::is_directory(a.source)) {
        source = std::make_unique<ImageDirSource>(a.source);
        if (!a.speed_kmh) {
            throw ArgumentError("--speed-kmh is required for an image directory source");
        }
    } else {
        throw std::runtime_error("frame source not found: " + a.source);
    }
    if (a.speed_kmh) {
        cfg.motion.speed_mps = kmh_to_mps(*a.speed_kmh);
    }
    if (a.fps) {
        cfg.motion.fps = *a.fps;
    }

    if (cfg.mode == OperatingMode::Mode1) {
        if (!detector) {
            if (a.labels.empty() == a.bridge.empty()) {
                throw ArgumentError("mode 1 needs exactly one of --labels or --bridge");
            }
            detector = make_detector(a.labels.empty() ? std::nullopt : std::optional<fs::path>(a.labels),
                                     a.bridge.empty() ? std::nullopt : std::optional<std::string>(a.bridge),
                                     cfg.detector.class_set);
        }
        const auto s = run_mode1(cfg, *source, *detector, &g_interrupted);
        if (g.json()) {
            emit(out, {{"mode", 1},
                       {"frames_seen", s.frames_seen},
                       {"frames_processed", s.frames_processed},
                       {"reports_sent", s.reports_sent},
                       {"detector_errors", s.detector_errors},
                       {"counts", counts_json(s.counter, cfg.detector.class_set)},
                       {"total", s.counter.total()}});
        } else {
            out << "frames_seen=" << s.frames_seen << " frames_processed=" << s.frames_processed
                << " reports_sent=" << s.reports_sent << "\n"
                << counts_text(s.counter, cfg.detector.class_set) << "\n";
        }
    } else {
        const auto s = run_mode2(cfg, *source, &g_interrupted);
        if (g.json()) {
            emit(out, {{"mode", 2},
                       {"frames_seen", s.frames_seen},
                       {"frames_streamed", s.frames_streamed},
                       {"frames_dropped", s.frames_dropped},
                       {"datagrams_sent", s.datagrams_sent},
                       {"bytes_sent", s.bytes_sent},
                       {"stream_id", s.stream_id}});
        } else {
            out << "frames_seen=" << s.frames_seen << " frames_streamed=" << s.frames_streamed
                << " frames_dropped=" << s.frames_dropped << " bytes_sent=" << s.bytes_sent << "\n";
        }
    }
    return kExitOk;
}

// ---- rsu -----------------------------------------------------------------

struct RsuArgs {
    int mode = 1;
    std::string bind = "127.0.0.1";
    std::uint16_t control_port = 7401;
    std::uint16_t stream_port = 7402;
    std::uint16_t api_port = 7403;
    bool no_api = false;
    std::uint64_t threshold = 10;
    std::string labels;
    std::string bridge;
    std::string sink = "cloud";
    double rho = 0.10;
    double conf = 0.25;
    int classes = 4;
    bool autostart = false;
    std::string static_dir;
    double duration = 0.0;
};

int run_rsu(const RsuArgs& a, const Globals& g, std::ostream& out) {
    RsuConfig cfg;
    cfg.bind_host = a.bind;
    cfg.control_port = a.control_port;
    cfg.stream_port = a.stream_port;
    cfg.api_port = a.api_port;
    cfg.api_enabled = !a.no_api;
    cfg.mode = mode_from_number(a.mode);
    cfg.threshold = a.threshold;
    cfg.size.rho_fraction = a.rho;
    cfg.detector = {a.conf, classes_from(a.classes)};
    if (!a.labels.empty()) {
        cfg.label_dir = a.labels;
    }
    if (!a.bridge.empty()) {
        cfg.bridge = a.bridge;
    }
    cfg.sink = a.sink;
    cfg.autostart = a.autostart;
    if (!a.static_dir.empty()) {
        cfg.static_dir = a.static_dir;
    }

    Rsu rsu(cfg);
    rsu.serve();
    if (g.json()) {
        emit(out, {{"event", "listening"},
                   {"control_port", rsu.control_port()},
                   {"stream_port", rsu.stream_port()},
                   {"api_port", rsu.api_port()}});
    } else {
        out << "rsu listening control=" << rsu.control_port() << " stream=" << rsu.stream_port()
            << " api=" << rsu.api_port() << " mode=" << a.mode << (a.autostart ? " running" : " stopped") << "\n";
        out.flush();
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration);
    while (!g_interrupted && (a.duration <= 0.0 || std::chrono::steady_clock::now() < deadline)) {
        std::this_thread::sleep_for(50ms);
    }
    if (!rsu.drain_uploads(5s)) {
        spdlog::warn("uploads still pending at exit");
    }
    const auto st = rsu.status();
    rsu.shutdown();
    if (g.json()) {
        auto j = ojson::parse(status_json(st, cfg.detector.class_set));
        j["event"] = "final";
        emit(out, j);
    } else {
        out << "final " << counts_text(st.counter, cfg.detector.class_set) << " dropped_frames=" << st.dropped_frames
            << " warnings=" << st.warnings_sent << "\n";
    }
    return kExitOk;
}

// ---- vehicle -------------------------------------------------------------

struct VehicleArgs {
    std::string rsu = "127.0.0.1:7401";
    std::string node_id = "vehicle-1";
    std::string role = "vehicle";
    std::uint64_t count = 0;
    double duration = 0.0;
};

int run_vehicle(const VehicleArgs& a, const Globals& g, std::ostream& out) {
    ListenerConfig cfg;
    cfg.rsu = parse_host_port(a.rsu);
    cfg.node_id = a.node_id;
    cfg.role = a.role;
    std::uint64_t seen = 0;
    std::mutex out_mutex;
    std::atomic<bool> stop{false};
    std::thread watchdog([&] {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration);
        while (!stop) {
            if (g_interrupted || (a.duration > 0.0 && std::chrono::steady_clock::now() >= deadline)) {
                stop = true;
            }
            std::this_thread::sleep_for(20ms);
        }
    });
    run_vehicle_listener(
        cfg,
        [&](const ControlMessage& msg) {
            if (const auto line = listener_line(msg, g.json())) {
                std::lock_guard lock(out_mutex);
                out << *line << "\n";
                out.flush();
            }
            if (a.count > 0 && ++seen >= a.count) {
                stop = true;
            }
        },
        stop);
    stop = true;
    watchdog.join();
    return kExitOk;
}

// ---- simulate / equivalence / sweep -------------------------------------

int run_simulate(const ScenarioArgs& sa, const std::string& out_dir, const Globals& g, std::ostream& out) {
    const auto s = sa.load();
    render_scenario(s, out_dir);
    const auto labels = scenario_labels(s);
    const auto oracle = oracle_count(s, skip_policy(s.fsi()));
    if (g.json()) {
        emit(out, {{"out", out_dir},
                   {"frames", s.frame_count()},
                   {"labelled_frames", labels.size()},
                   {"anomalies", s.anomalies.size()},
                   {"fsi", s.fsi()},
                   {"skip", skip_policy(s.fsi()).skip},
                   {"oracle_sightings", oracle.sighting_events},
                   {"oracle_misses", oracle.misses},
                   {"oracle_duplicates", oracle.duplicates}});
    } else {
        out << "wrote " << s.frame_count() << " frames (" << labels.size() << " labelled) to " << out_dir << "\n"
            << "fsi=" << s.fsi() << " skip=" << skip_policy(s.fsi()).skip << " anomalies=" << s.anomalies.size()
            << " oracle sightings=" << oracle.sighting_events << " misses=" << oracle.misses
            << " duplicates=" << oracle.duplicates << "\n";
    }
    return kExitOk;
}

ojson session_json(const SessionCounts& c, ClassSet set) {
    return {{"counts", counts_json(c.rsu, set)},
            {"total", c.rsu.total()},
            {"uploads", c.upload_seqs},
            {"warnings", c.warnings},
            {"frames_seen", c.frames_seen},
            {"dropped_frames", c.dropped_frames}};
}

int run_equivalence_cmd(const ScenarioArgs& sa, double loss, std::uint64_t threshold, const Globals& g,
                        std::ostream& out) {
    const auto s = sa.load();
    SessionOptions opts;
    opts.loss_rate = loss;
    opts.threshold = threshold;
    opts.seed = sa.seed;
    const auto r = run_equivalence(s, opts);
    if (g.json()) {
        ojson j{{"equal", r.equal},
                {"counts_equal", r.counts_equal},
                {"uploads_equal", r.uploads_equal},
                {"warnings_equal", r.warnings_equal}};
        if (!r.failure.empty()) {
            j["failure"] = r.failure;
        } else {
            j["mode1"] = session_json(r.mode1, ClassSet::Four);
            j["mode2"] = session_json(r.mode2, ClassSet::Four);
        }
        emit(out, j);
    } else if (!r.failure.empty()) {
        out << "equal=false failure: " << r.failure << "\n";
    } else {
        out << "mode1 " << counts_text(r.mode1.rsu, ClassSet::Four) << " uploads=" << r.mode1.upload_seqs.size()
            << " warnings=" << r.mode1.warnings.size() << "\n"
            << "mode2 " << counts_text(r.mode2.rsu, ClassSet::Four) << " uploads=" << r.mode2.upload_seqs.size()
            << " warnings=" << r.mode2.warnings.size() << " dropped_frames=" << r.mode2.dropped_frames << "\n"
            << "equal=" << (r.equal ? "true" : "false") << "\n";
    }
    return r.equal ? kExitOk : kExitFailure;
}

int run_sweep_cmd(const ScenarioArgs& sa, const std::vector<double>& speeds, const std::vector<int>& skips,
                  const Globals& g, std::ostream& out) {
    const auto rows = sweep(sa.load(), speeds, skips);
    if (g.json()) {
        ojson arr = ojson::array();
        for (const auto& r : rows) {
            arr.push_back({{"speed_kmh", r.speed_kmh},
                           {"fsi", r.fsi},
                           {"skip", r.skip},
                           {"automatic", r.automatic},
                           {"planted", r.planted},
                           {"distinct", r.distinct},
                           {"sightings", r.sightings},
                           {"misses", r.misses},
                           {"duplicates", r.duplicates}});
        }
        emit(out, {{"rows", arr}});
    } else {
        out << format_sweep_table(rows);
    }
    return kExitOk;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
    std::string preds;
    std::string truths;
    double iou = kDefaultIou;
    double conf = 0.25;
    int width = 640;
    int height = 640;
    int classes = 4;
};

FrameDetections load_frames(const std::string& dir, ClassSet set, int w, int h) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("label directory not found: " + dir);
    }
    FrameDetections frames;
    const DetectorConfig keep_all{0.0, set};
    for (const auto& [seq, recs] : load_label_dir(dir, set)) {
        frames[seq] = records_to_detections(recs, w, h, keep_all);
    }
    return frames;
}

int run_evaluate(const EvaluateArgs& a, const Globals& g, std::ostream& out) {
    const auto set = classes_from(a.classes);
    const auto preds = load_frames(a.preds, set, a.width, a.height);
    const auto truths = load_frames(a.truths, set, a.width, a.height);
    const auto report = evaluate(preds, truths, set, a.iou, a.conf);
    if (!g.json()) {
        out << format_report_table(report);
        return kExitOk;
    }
    ojson classes = ojson::array();
    std::uint64_t truth_total = 0;
    for (const auto& c : report.classes) {
        truth_total += c.truths;
        classes.push_back({{"class", class_name(c.cls)},
                           {"truths", c.truths},
                           {"tp", c.counts.tp},
                           {"fp", c.counts.fp},
                           {"fn", c.counts.fn},
                           {"precision", c.precision},
                           {"recall", c.recall},
                           {"f1", c.f1},
                           {"ap50", c.ap50}});
    }
    emit(out, {{"iou", report.iou_threshold},
               {"conf", report.confidence_threshold},
               {"classes", classes},
               {"all",
                {{"truths", truth_total},
                 {"tp", report.overall.tp},
                 {"fp", report.overall.fp},
                 {"fn", report.overall.fn},
                 {"precision", report.precision},
                 {"recall", report.recall},
                 {"f1", report.f1},
                 {"map50", report.map50}}}});
    return kExitOk;
}

// ---- latency -------------------------------------------------------------

struct LatencyArgs {
    std::string frames;
    std::string scenario;
    std::string labels;
    std::string bridge;
    std::size_t warmup = 5;
    std::size_t max_frames = 200;
    int classes = 4;
};

int run_latency(const LatencyArgs& a, const Globals& g, std::ostream& out) {
    const auto set = classes_from(a.classes);
    std::unique_ptr<FrameSource> source;
    std::unique_ptr<Detector> detector;
    if (!a.scenario.empty()) {
        const auto s = load_scenario(a.scenario);
        auto labels = std::make_shared<std::map<std::uint64_t, std::vector<LabelRecord>>>(scenario_labels(s));
        source = std::make_unique<GeneratedSource>(s.frame_count(), s.frame_width, s.frame_height,
                                                   [s, labels](std::uint64_t seq) {
                                                       static const std::vector<LabelRecord> kNone;
                                                       const auto it = labels->find(seq);
                                                       return render_frame(s, it == labels->end() ? kNone : it->second);
                                                   });
        if (a.labels.empty() && a.bridge.empty()) {
            detector = ReplayDetector::from_records(*labels);
        }
    } else if (!a.frames.empty()) {
        if (!fs::is_directory(a.frames)) {
            throw std::runtime_error("frame directory not found: " + a.frames);
        }
        source = std::make_unique<ImageDirSource>(a.frames);
    } else {
        throw ArgumentError("give --frames <dir> or --scenario <file>");
    }
    if (!detector) {
        if (a.labels.empty() == a.bridge.empty()) {
            throw ArgumentError("give exactly one of --labels or --bridge");
        }
        detector = make_detector(a.labels.empty() ? std::nullopt : std::optional<fs::path>(a.labels),
                                 a.bridge.empty() ? std::nullopt : std::optional<std::string>(a.bridge), set);
    }
    std::vector<Frame> frames;
    while (frames.size() < a.max_frames) {
        auto f = source->next();
        if (!f) {
            break;
        }
        frames.push_back(std::move(*f));
    }
    const auto r = measure_latency(*detector, frames, a.warmup, DetectorConfig{0.25, set});
    if (g.json()) {
        emit(out, {{"detector", detector->describe()},
                   {"frames", r.frames},
                   {"mean_s", r.mean_s},
                   {"p50_s", r.p50_s},
                   {"p95_s", r.p95_s},
                   {"host", r.host}});
    } else {
        char line[200];
        std::snprintf(line, sizeof(line), "frames=%zu mean=%.3f ms p50=%.3f ms p95=%.3f ms\n", r.frames,
                      r.mean_s * 1e3, r.p50_s * 1e3, r.p95_s * 1e3);
        out << "detector: " << detector->describe() << "\n" << line << "host: " << r.host << "\n";
    }
    return kExitOk;
}

// ---- storage-report ------------------------------------------------------

int run_storage(const std::string& sink, const Globals& g, std::ostream& out) {
    if (!fs::is_directory(sink)) {
        throw std::runtime_error("sink directory not found: " + sink);
    }
    const auto r = storage_report(sink);
    if (g.json()) {
        emit(out, {{"objects", r.objects},
                   {"total_bytes", r.total_bytes},
                   {"bytes_by_size", r.bytes_by_size},
                   {"bytes_by_mode", r.bytes_by_mode}});
    } else {
        out << "objects=" << r.objects << " total_bytes=" << r.total_bytes << "\n"
            << "large=" << r.bytes_by_size.at("large") << " small=" << r.bytes_by_size.at("small") << "\n"
            << "mode1=" << r.bytes_by_mode.at("1") << " mode2=" << r.bytes_by_mode.at("2") << "\n";
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    g_interrupted = false;
    CLI::App app{"Road anomaly detection pipeline: vehicle end node, roadside unit and simulation tools",
                 "roadwatch"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file (flags override it)");
    app.allow_config_extras(CLI::config_extras_mode::error);

    Globals g;
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off (default: $ROADWATCH_LOG or warn)")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "json"}));

    std::function<int()> action;

    EndnodeArgs en;
    auto* endnode = app.add_subcommand("endnode", "Run a vehicle end node (mode 1 detects on board, mode 2 streams)");
    endnode->add_option("--mode", en.mode, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
    endnode->add_option("--source", en.source, "Directory of {seq}.jpg frames or a scenario .json")->required();
    endnode->add_option("--labels", en.labels, "Replay label directory (mode 1)");
    endnode->add_option("--bridge", en.bridge, "Detector bridge endpoint (mode 1)");
    endnode->add_option("--rsu", en.rsu, "RSU control address host:port");
    endnode->add_option("--stream", en.stream, "RSU stream address host:port");
    endnode->add_option("--speed-kmh", en.speed_kmh, "Vehicle speed in km/h")->check(CLI::NonNegativeNumber);
    endnode->add_option("--fps", en.fps, "Source frame rate")->check(CLI::PositiveNumber);
    endnode->add_flag("--fast", en.fast, "Do not pace frames at the source rate");
    endnode->add_option("--node-id", en.node_id, "Identifier sent in HELLO");
    endnode->add_option("--skip", en.skip, "Manual skip override (frames)");
    endnode->add_option("--rho", en.rho, "Large-anomaly area fraction")->check(CLI::Range(0.0, 1.0));
    endnode->add_option("--conf", en.conf, "Detector confidence threshold")->check(CLI::Range(0.0, 1.0));
    endnode->add_option("--classes", en.classes, "Class set size")->check(CLI::IsMember({4, 8}));
    endnode->add_option("--loss", en.loss, "Mode 2: drop this share of datagrams")->check(CLI::Range(0.0, 1.0));
    endnode->add_option("--seed", en.seed, "Seed for loss injection");
    endnode->add_option("--mtu", en.mtu, "Mode 2 datagram payload size")->check(CLI::Range(64, 65000));
    endnode->callback([&] { action = [&] { return run_endnode(en, g, out); }; });

    RsuArgs ra;
    auto* rsu = app.add_subcommand("rsu", "Run the roadside unit");
    rsu->add_option("--mode", ra.mode, "1 or 2")->check(CLI::IsMember({1, 2}));
    rsu->add_option("--bind", ra.bind, "Bind address");
    rsu->add_option("--control-port", ra.control_port, "Control channel port (0 = any)");
    rsu->add_option("--stream-port", ra.stream_port, "Frame stream port (0 = any)");
    rsu->add_option("--api-port", ra.api_port, "Operator API port (0 = any)");
    rsu->add_flag("--no-api", ra.no_api, "Do not serve the operator API");
    rsu->add_option("--threshold", ra.threshold, "General warning threshold")->check(CLI::PositiveNumber);
    rsu->add_option("--labels", ra.labels, "Replay label directory (mode 2)");
    rsu->add_option("--bridge", ra.bridge, "Detector bridge endpoint (mode 2)");
    rsu->add_option("--sink", ra.sink, "Upload sink: directory or http:// URL");
    rsu->add_option("--rho", ra.rho, "Large-anomaly area fraction")->check(CLI::Range(0.0, 1.0));
    rsu->add_option("--conf", ra.conf, "Detector confidence threshold")->check(CLI::Range(0.0, 1.0));
    rsu->add_option("--classes", ra.classes, "Class set size")->check(CLI::IsMember({4, 8}));
    rsu->add_flag("--autostart", ra.autostart, "Start processing without waiting for POST /start");
    rsu->add_option("--static", ra.static_dir, "Directory served at / (operator console)");
    rsu->add_option("--duration", ra.duration, "Exit after this many seconds (default: until signalled)");
    rsu->callback([&] { action = [&] { return run_rsu(ra, g, out); }; });

    VehicleArgs va;
    auto* vehicle = app.add_subcommand("vehicle", "Listen for RSU warnings and print them");
    vehicle->add_option("--rsu", va.rsu, "RSU control address host:port");
    vehicle->add_option("--node-id", va.node_id, "Identifier sent in HELLO");
    vehicle->add_option("--role", va.role, "vehicle or console")->check(CLI::IsMember({"vehicle", "console"}));
    vehicle->add_option("--count", va.count, "Exit after this many messages");
    vehicle->add_option("--duration", va.duration, "Exit after this many seconds");
    vehicle->callback([&] { action = [&] { return run_vehicle(va, g, out); }; });

    ScenarioArgs sim_sa;
    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "Render a scenario into frames, labels and a manifest");
    sim_sa.add(simulate);
    simulate->add_option("--out", sim_out, "Output directory")->required();
    simulate->callback([&] { action = [&] { return run_simulate(sim_sa, sim_out, g, out); }; });

    ScenarioArgs eq_sa;
    double eq_loss = 0.0;
    std::uint64_t eq_threshold = 10;
    auto* equivalence = app.add_subcommand("equivalence", "Run a scenario in mode 1 and mode 2 and compare");
    eq_sa.add(equivalence);
    equivalence->add_option("--loss", eq_loss, "Mode 2 datagram loss share")->check(CLI::Range(0.0, 1.0));
    equivalence->add_option("--threshold", eq_threshold, "General warning threshold")->check(CLI::PositiveNumber);
    equivalence->callback([&] { action = [&] { return run_equivalence_cmd(eq_sa, eq_loss, eq_threshold, g, out); }; });

    ScenarioArgs sw_sa;
    std::vector<double> sw_speeds{10, 20, 30, 40, 54, 60};
    std::vector<int> sw_skips{-1, 0, 5, 10, 30};
    auto* sweep_cmd = app.add_subcommand("sweep", "Oracle counts across speeds and skip values");
    sw_sa.add(sweep_cmd);
    sweep_cmd->add_option("--speeds-kmh", sw_speeds, "Speeds to drive")->delimiter(',');
    sweep_cmd->add_option("--skips", sw_skips, "Skip values (-1 = FSI rule)")->delimiter(',');
    sweep_cmd->callback([&] { action = [&] { return run_sweep_cmd(sw_sa, sw_speeds, sw_skips, g, out); }; });

    EvaluateArgs ev;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score prediction labels against ground truth");
    evaluate_cmd->add_option("--preds", ev.preds, "Prediction label directory")->required();
    evaluate_cmd->add_option("--truths", ev.truths, "Ground-truth label directory")->required();
    evaluate_cmd->add_option("--iou", ev.iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
    evaluate_cmd->add_option("--conf", ev.conf, "Confidence threshold for TP/FP/FN")->check(CLI::Range(0.0, 1.0));
    evaluate_cmd->add_option("--width", ev.width, "Frame width")->check(CLI::PositiveNumber);
    evaluate_cmd->add_option("--height", ev.height, "Frame height")->check(CLI::PositiveNumber);
    evaluate_cmd->add_option("--classes", ev.classes, "Class set size")->check(CLI::IsMember({4, 8}));
    evaluate_cmd->callback([&] { action = [&] { return run_evaluate(ev, g, out); }; });

    LatencyArgs la;
    auto* latency = app.add_subcommand("latency", "Time detector calls per frame");
    latency->add_option("--frames", la.frames, "Directory of {seq}.jpg frames");
    latency->add_option("--scenario", la.scenario, "Scenario file to render frames from");
    latency->add_option("--labels", la.labels, "Replay label directory");
    latency->add_option("--bridge", la.bridge, "Detector bridge endpoint");
    latency->add_option("--warmup", la.warmup, "Frames excluded from the statistics");
    latency->add_option("--max-frames", la.max_frames, "Frames to time")->check(CLI::PositiveNumber);
    latency->add_option("--classes", la.classes, "Class set size")->check(CLI::IsMember({4, 8}));
    latency->callback([&] { action = [&] { return run_latency(la, g, out); }; });

    std::string sink_dir;
    auto* storage = app.add_subcommand("storage-report", "Summarize objects stored in a directory sink");
    storage->add_option("--sink", sink_dir, "Sink directory")->required();
    storage->callback([&] { action = [&] { return run_storage(sink_dir, g, out); }; });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    init_logging(g.log_level.empty() ? std::nullopt : std::optional<std::string>(g.log_level));
    install_signal_handlers();
    try {
        return action ? action() : kExitUsage;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace roadwatch
