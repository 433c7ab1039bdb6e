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

#include "roadwatch/endnode.h"

#include <cmath>
#include <memory>
#include <random>
#include <thread>

#include "roadwatch/channel.h"
#include "roadwatch/errors.h"
#include "roadwatch/image.h"
#include "roadwatch/log.h"

namespace roadwatch {

using namespace std::chrono_literals;
namespace fs = std::filesystem;

ImageDirSource::ImageDirSource(fs::path dir) : dir_(std::move(dir)) {
    const auto first = dir_ / "0.jpg";
    if (!fs::exists(first)) {
        throw ArgumentError("frame directory " + dir_.string() + " has no 0.jpg");
    }
    const auto bytes = read_file(first);
    std::tie(width_, height_) = jpeg_dimensions(bytes);
}

std::optional<Frame> ImageDirSource::next() {
    const auto path = dir_ / (std::to_string(seq_) + ".jpg");
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    Frame f;
    f.seq = seq_++;
    f.width = width_;
    f.height = height_;
    f.jpeg = read_file(path);
    return f;
}

GeneratedSource::GeneratedSource(std::uint64_t count, int width, int height, Render render)
    : count_(count), width_(width), height_(height), render_(std::move(render)) {}

std::optional<Frame> GeneratedSource::next() {
    if (seq_ >= count_) {
        return std::nullopt;
    }
    Frame f;
    f.seq = seq_++;
    f.width = width_;
    f.height = height_;
    f.jpeg = render_(f.seq);
    return f;
}

void EndnodeConfig::validate() const {
    if (mode == OperatingMode::Mode1 && !rsu) {
        throw ArgumentError("mode 1 needs the RSU control address (--rsu)");
    }
    if (mode == OperatingMode::Mode2 && !stream) {
        throw ArgumentError("mode 2 needs the RSU stream address (--stream)");
    }
    if (motion.fps <= 0.0 || motion.speed_mps < 0.0) {
        throw ArgumentError("fps must be positive and speed non-negative");
    }
    if (loss_rate < 0.0 || loss_rate > 1.0) {
        throw ArgumentError("loss rate must lie in [0, 1]");
    }
    if (connect_retries < 0) {
        throw ArgumentError("connect retries must be >= 0");
    }
}

namespace {

// Sleeps until the capture time of `seq` relative to the session start.
class Pacer {
public:
    Pacer(double fps, bool enabled) : fps_(fps), enabled_(enabled), start_(std::chrono::steady_clock::now()) {}

    void wait(std::uint64_t seq) const {
        if (!enabled_) {
            return;
        }
        const auto offset = std::chrono::duration<double>(static_cast<double>(seq) / fps_);
        std::this_thread::sleep_until(start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(offset));
    }

private:
    double fps_;
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

std::int64_t frame_timestamp(std::int64_t session_start_ms, std::uint64_t seq, double fps) {
    return session_start_ms + std::llround(static_cast<double>(seq) * 1000.0 / fps);
}

bool stopped(const std::atomic<bool>* stop) { return stop != nullptr && stop->load(); }

// The Mode-1 control session, reconnecting on demand.
class Uplink {
public:
    explicit Uplink(const EndnodeConfig& cfg) : cfg_(cfg) {}

    void connect() {
        for (int attempt = 0;; ++attempt) {
            try {
                channel_ = std::make_unique<ControlChannel>(TcpStream::connect(*cfg_.rsu));
                channel_->send(Hello{"endnode", cfg_.node_id});
                return;
            } catch (const NetworkError& e) {
                channel_.reset();
                if (attempt >= cfg_.connect_retries) {
                    throw SessionError("RSU " + cfg_.rsu->str() + " unreachable after " +
                                       std::to_string(attempt + 1) + " attempts: " + e.what());
                }
                spdlog::warn("RSU {} unreachable ({}); retrying in {} ms", cfg_.rsu->str(), e.what(),
                             cfg_.retry_backoff.count());
                std::this_thread::sleep_for(cfg_.retry_backoff);
            }
        }
    }

    void send(const ControlMessage& msg) {
        if (!channel_) {
            connect();
        }
        try {
            channel_->send(msg);
        } catch (const NetworkError& e) {
            spdlog::warn("lost the RSU connection ({}); reconnecting", e.what());
            channel_.reset();
            connect();
            channel_->send(msg);
        }
    }

    void close() {
        if (channel_) {
            try {
                channel_->send(Bye{cfg_.node_id});
            } catch (const NetworkError&) {
            }
            channel_->shutdown();
            channel_.reset();
        }
    }

private:
    const EndnodeConfig& cfg_;
    std::unique_ptr<ControlChannel> channel_;
};

SkipPolicy session_policy(const EndnodeConfig& cfg) {
    if (cfg.skip_override) {
        return SkipPolicy::manual(*cfg.skip_override);
    }
    return skip_policy(compute_fsi(cfg.motion));
}

}  // namespace

Mode1Summary run_mode1(const EndnodeConfig& cfg, FrameSource& source, Detector& detector,
                       const std::atomic<bool>* stop) {
    cfg.validate();
    if (!cfg.rsu) {
        throw ArgumentError("mode 1 needs the RSU control address (--rsu)");
    }
    const auto policy = session_policy(cfg);
    spdlog::info("mode 1 session: fsi {:.5f} m, skip {}, detector {}", compute_fsi(cfg.motion), policy.skip,
                 detector.describe());

    Uplink uplink(cfg);
    uplink.connect();
    Mode1Summary summary;
    const auto start_ms = now_ms();
    const Pacer pacer(cfg.motion.fps, !cfg.fast);
    while (!stopped(stop)) {
        auto frame = source.next();
        if (!frame) {
            break;
        }
        pacer.wait(frame->seq);
        ++summary.frames_seen;
        frame->meta = {frame_timestamp(start_ms, frame->seq, cfg.motion.fps), cfg.motion.speed_mps, cfg.motion.fps};
        if (!should_process(frame->seq, policy)) {
            summary.counter.observe(frame->seq, {}, policy);
            continue;
        }
        ++summary.frames_processed;
        std::vector<Detection> dets;
        try {
            dets = detector.detect(*frame, cfg.detector);
        } catch (const DetectorError& e) {
            ++summary.detector_errors;
            spdlog::warn("frame {}: detector failed, frame skipped: {}", frame->seq, e.what());
            summary.counter.observe(frame->seq, {}, policy);
            continue;
        }
        summary.counter.observe(frame->seq, dets, policy);
        if (dets.empty()) {
            continue;
        }
        AnomalyReport report;
        report.frame_seq = frame->seq;
        report.size_class = max_size_class(dets, frame->width, frame->height, cfg.size);
        report.speed_mps = cfg.motion.speed_mps;
        report.timestamp_ms = frame->meta.timestamp_ms;
        report.detections = std::move(dets);
        report.image = std::move(frame->jpeg);
        uplink.send(report);
        ++summary.reports_sent;
    }
    uplink.close();
    return summary;
}

Mode2Summary run_mode2(const EndnodeConfig& cfg, FrameSource& source, const std::atomic<bool>* stop) {
    cfg.validate();
    if (!cfg.stream) {
        throw ArgumentError("mode 2 needs the RSU stream address (--stream)");
    }
    const auto target = resolve_ipv4(*cfg.stream);
    const auto socket = UdpSocket::open();
    std::mt19937_64 loss_rng(cfg.seed);
    std::bernoulli_distribution lose(cfg.loss_rate);

    Mode2Summary summary;
    summary.stream_id = static_cast<std::uint32_t>(std::random_device{}());
    const auto start_ms = now_ms();
    const Pacer pacer(cfg.motion.fps, !cfg.fast);
    while (!stopped(stop)) {
        auto frame = source.next();
        if (!frame) {
            break;
        }
        pacer.wait(frame->seq);
        if (cfg.frame_gap.count() > 0 && frame->seq > 0) {
            std::this_thread::sleep_for(cfg.frame_gap);
        }
        ++summary.frames_seen;
        FramePayload payload;
        payload.timestamp_ms = frame_timestamp(start_ms, frame->seq, cfg.motion.fps);
        payload.speed_mps = cfg.motion.speed_mps;
        payload.fps = cfg.motion.fps;
        payload.width = frame->width;
        payload.height = frame->height;
        payload.jpeg = std::move(frame->jpeg);
        const auto bytes = encode_frame_payload(payload);
        const auto chunks = chunk_frame(bytes, summary.stream_id, static_cast<std::uint32_t>(frame->seq), cfg.mtu);
        bool ok = true;
        for (const auto& chunk : chunks) {
            if (cfg.loss_rate > 0.0 && lose(loss_rng)) {
                continue;
            }
            const auto datagram = encode_chunk(chunk);
            std::string error;
            if (!socket.send_to(target, datagram, &error)) {
                spdlog::warn("frame {}: datagram send to {} failed ({}); frame dropped", frame->seq,
                             cfg.stream->str(), error);
                ok = false;
                break;
            }
            ++summary.datagrams_sent;
            summary.bytes_sent += datagram.size();
        }
        if (ok) {
            ++summary.frames_streamed;
        } else {
            ++summary.frames_dropped;
        }
    }
    return summary;
}

void run_vehicle_listener(const ListenerConfig& cfg, const std::function<void(const ControlMessage&)>& on_message,
                          const std::atomic<bool>& stop) {
    const bool console = cfg.role == "console";
    while (!stop) {
        try {
            ControlChannel channel = ControlChannel::connect(cfg.rsu, 2s);
            channel.send(Hello{cfg.role, cfg.node_id});
            if (cfg.on_connected) {
                cfg.on_connected();
            }
            while (!stop) {
                const auto msg = channel.receive(200ms);
                if (!msg) {
                    continue;
                }
                if (std::holds_alternative<Warning>(*msg) || std::holds_alternative<GeneralWarning>(*msg) ||
                    (console && std::holds_alternative<CountsUpdate>(*msg))) {
                    on_message(*msg);
                }
            }
            channel.shutdown();
            return;
        } catch (const ProtocolError& e) {
            spdlog::warn("RSU {} sent bad data: {}", cfg.rsu.str(), e.what());
        } catch (const NetworkError& e) {
            spdlog::info("RSU {} connection lost: {}", cfg.rsu.str(), e.what());
        }
        const auto resume = std::chrono::steady_clock::now() + cfg.reconnect_backoff;
        while (!stop && std::chrono::steady_clock::now() < resume) {
            std::this_thread::sleep_for(20ms);
        }
    }
}

std::optional<std::string> listener_line(const ControlMessage& msg, bool json) {
    if (json) {
        return encode_control_body(msg);
    }
    if (const auto* w = std::get_if<Warning>(&msg)) {
        return w->text;
    }
    if (const auto* g = std::get_if<GeneralWarning>(&msg)) {
        return g->text;
    }
    if (const auto* c = std::get_if<CountsUpdate>(&msg)) {
        return "COUNTS total=" + std::to_string(c->total);
    }
    return std::nullopt;
}

}  // namespace roadwatch
