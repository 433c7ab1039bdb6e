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

#include "roadwatch/rsu.h"

#include <algorithm>
#include <array>

#include <json.hpp>

#include "roadwatch/errors.h"
#include "roadwatch/image.h"
#include "roadwatch/log.h"
#include "rsu_api.h"

namespace roadwatch {

using namespace std::chrono_literals;
using ojson = nlohmann::ordered_json;

SerialExecutor::SerialExecutor() { worker_ = std::thread([this] { run(); }); }

SerialExecutor::~SerialExecutor() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void SerialExecutor::post(std::function<void()> task) {
    {
        std::lock_guard lock(mutex_);
        tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
}

void SerialExecutor::run() {
    std::unique_lock lock(mutex_);
    for (;;) {
        cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
        if (tasks_.empty()) {
            return;
        }
        auto task = std::move(tasks_.front());
        tasks_.pop_front();
        lock.unlock();
        try {
            task();
        } catch (const std::exception& e) {
            spdlog::error("state task failed: {}", e.what());
        }
        lock.lock();
    }
}

std::shared_ptr<EventHub::Subscriber> EventHub::subscribe() {
    auto sub = std::make_shared<Subscriber>();
    std::lock_guard lock(mutex_);
    subs_.push_back(sub);
    return sub;
}

void EventHub::unsubscribe(const std::shared_ptr<Subscriber>& sub) {
    std::lock_guard lock(mutex_);
    subs_.remove(sub);
}

void EventHub::publish(const std::string& event, const std::string& data) {
    const std::string frame = "event: " + event + "\ndata: " + data + "\n\n";
    std::lock_guard lock(mutex_);
    for (const auto& sub : subs_) {
        {
            std::lock_guard sl(sub->mutex);
            sub->pending.push_back(frame);
        }
        sub->cv.notify_all();
    }
}

void EventHub::close_all() {
    std::lock_guard lock(mutex_);
    for (const auto& sub : subs_) {
        {
            std::lock_guard sl(sub->mutex);
            sub->closed = true;
        }
        sub->cv.notify_all();
    }
    subs_.clear();
}

std::size_t EventHub::subscribers() const {
    std::lock_guard lock(mutex_);
    return subs_.size();
}

void RsuConfig::validate() const {
    if (threshold < 1) {
        throw ArgumentError("general warning threshold must be >= 1");
    }
    if (label_dir && bridge) {
        throw ArgumentError("give either a label directory or a bridge endpoint, not both");
    }
    if (sink.empty()) {
        throw ArgumentError("sink must not be empty");
    }
    if (reassembly_timeout.count() <= 0) {
        throw ArgumentError("reassembly timeout must be positive");
    }
}

std::string status_json(const RsuStatus& s, ClassSet set) {
    ojson counts = ojson::object();
    for (std::size_t c = 0; c < class_set_size(set); ++c) {
        counts[std::string(class_name(static_cast<AnomalyClass>(c)))] = s.counter.counts()[c];
    }
    ojson j;
    j["mode"] = mode_number(s.mode);
    j["running"] = s.running;
    j["counts"] = counts;
    j["total"] = s.counter.total();
    j["dropped_frames"] = s.dropped_frames;
    j["skip"] = s.skip_override ? ojson(*s.skip_override) : ojson(nullptr);
    j["auto_skip"] = s.auto_skip ? ojson(*s.auto_skip) : ojson(nullptr);
    j["threshold"] = s.threshold;
    j["fired"] = s.fired;
    j["vehicles"] = s.vehicles;
    j["consoles"] = s.consoles;
    j["upload_queue_depth"] = s.upload_depth;
    j["reports_received"] = s.reports_received;
    j["reports_rejected"] = s.reports_rejected;
    j["reports_ignored"] = s.reports_ignored;
    j["frames_received"] = s.frames_received;
    j["frames_processed"] = s.frames_processed;
    j["warnings_sent"] = s.warnings_sent;
    return j.dump();
}

Rsu::Rsu(RsuConfig config, std::unique_ptr<Detector> detector, std::unique_ptr<CloudSink> sink)
    : config_(std::move(config)), detector_(std::move(detector)), mode_(config_.mode) {
    config_.validate();
    if (!detector_ && (config_.label_dir || config_.bridge)) {
        detector_ = make_detector(config_.label_dir, config_.bridge, config_.detector.class_set);
    }
    if (config_.mode == OperatingMode::Mode2 && !detector_) {
        throw ArgumentError("mode 2 needs a detector (--labels or --bridge)");
    }
    const bool http = config_.sink.starts_with("http://") || config_.sink.starts_with("https://");
    if (!sink) {
        sink = make_sink(config_.sink);
    }
    UploadQueue::Options opts;
    opts.capacity = config_.upload_capacity;
    opts.max_retries = config_.upload_retries;
    opts.backoff = config_.upload_backoff;
    opts.dead_letter_dir =
        config_.dead_letter_dir.value_or(http ? std::filesystem::path("failed") : std::filesystem::path(config_.sink) / "failed");
    uploads_ = std::make_unique<UploadQueue>(std::move(sink), std::move(opts));
    running_ = config_.autostart;
}

Rsu::~Rsu() { shutdown(); }

void Rsu::start() {
    state_.call([this] { running_ = true; });
}

void Rsu::stop() {
    state_.call([this] { running_ = false; });
}

void Rsu::set_mode(OperatingMode mode) {
    const bool ok = state_.call([&] {
        if (running_) {
            return false;
        }
        if (mode == OperatingMode::Mode2 && !detector_) {
            throw ArgumentError("mode 2 needs a detector");
        }
        mode_ = mode;
        return true;
    });
    if (!ok) {
        throw SessionError("cannot change mode while running");
    }
}

void Rsu::set_skip(std::uint32_t frames) {
    state_.call([&] { skip_override_ = frames; });
}

void Rsu::reset() {
    state_.call([this] {
        counter_.reset();
        fired_ = false;
        skip_override_.reset();
        auto_skip_.reset();
        seen_reports_.clear();
        last_stream_seq_.clear();
        latest_.reset();
        publish_counts();
    });
}

RsuStatus Rsu::status() {
    auto s = state_.call([this] {
        RsuStatus st;
        st.mode = mode_;
        st.running = running_;
        st.counter = counter_;
        st.skip_override = skip_override_;
        st.auto_skip = auto_skip_;
        st.threshold = config_.threshold;
        st.fired = fired_;
        st.vehicles = subscribers_.size() - consoles_;
        st.consoles = consoles_;
        st.reports_received = reports_received_;
        st.reports_rejected = reports_rejected_;
        st.reports_ignored = reports_ignored_;
        st.frames_processed = frames_processed_;
        st.warnings_sent = warnings_sent_;
        return st;
    });
    s.dropped_frames = dropped_frames_.load();
    s.frames_received = frames_received_.load();
    s.upload_depth = uploads_ ? uploads_->depth() : 0;
    return s;
}

std::vector<ControlMessage> Rsu::issued_warnings() {
    return state_.call([this] { return warnings_; });
}

std::optional<Bytes> Rsu::latest_frame() {
    auto latest = state_.call([this] { return latest_; });
    if (!latest) {
        return std::nullopt;
    }
    return annotate_frame(latest->jpeg, latest->detections, latest->large);
}

void Rsu::submit_report(const std::string& node_id, AnomalyReport report) {
    state_.post([this, node_id, r = std::move(report)]() mutable { handle_report(node_id, std::move(r)); });
}

bool Rsu::wait_until(std::chrono::milliseconds timeout, const std::function<bool(const RsuStatus&)>& pred) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (pred(status())) {
            return true;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            return false;
        }
        std::this_thread::sleep_for(5ms);
    }
}

bool Rsu::wait_reports(std::uint64_t n, std::chrono::milliseconds timeout) {
    return wait_until(timeout, [n](const RsuStatus& s) { return s.reports_received + s.reports_rejected >= n; });
}

bool Rsu::wait_frames(std::uint64_t n, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        bool idle = false;
        {
            std::lock_guard lock(frames_mutex_);
            idle = frames_.empty() && !frame_busy_;
        }
        if (idle && frames_received_.load() + dropped_frames_.load() >= n) {
            state_.flush();
            return true;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            return false;
        }
        std::this_thread::sleep_for(5ms);
    }
}

bool Rsu::wait_vehicles(std::size_t n, std::chrono::milliseconds timeout) {
    return wait_until(timeout, [n](const RsuStatus& s) { return s.vehicles >= n; });
}

bool Rsu::drain_uploads(std::chrono::milliseconds timeout) {
    state_.flush();
    return !uploads_ || uploads_->drain(timeout);
}

UploadQueue::Stats Rsu::upload_stats() const { return uploads_ ? uploads_->stats() : UploadQueue::Stats{}; }

void Rsu::handle_report(const std::string& node_id, AnomalyReport report) {
    ++reports_received_;
    if (!running_ || mode_ != OperatingMode::Mode1) {
        ++reports_ignored_;
        spdlog::debug("ignoring report {}/{}: {}", node_id, report.frame_seq, running_ ? "mode 2 active" : "stopped");
        return;
    }
    if (!seen_reports_.insert({node_id, report.frame_seq}).second) {
        spdlog::info("duplicate report {}/{}: not counted again", node_id, report.frame_seq);
        if (!report.image.empty() && uploads_) {
            uploads_->enqueue(make_upload_record(node_id, 1, report.frame_seq, report.timestamp_ms, report.detections,
                                                 report.size_class, std::move(report.image)));
        }
        return;
    }
    apply_detections(node_id, OperatingMode::Mode1, std::move(report));
}

void Rsu::apply_detections(const std::string& node_id, OperatingMode mode, AnomalyReport report) {
    const bool large = report.size_class == SizeClass::Large && !report.detections.empty();
    latest_ = Latest{report.image, report.detections, large};
    if (report.detections.empty()) {
        return;
    }
    counter_.add(report.detections);

    if (large) {
        const auto biggest = std::max_element(report.detections.begin(), report.detections.end(),
                                              [](const Detection& a, const Detection& b) {
                                                  return bbox_area(a.box) < bbox_area(b.box);
                                              });
        Warning w;
        w.class_id = class_id(biggest->cls);
        w.size_class = SizeClass::Large;
        w.frame_seq = report.frame_seq;
        w.timestamp_ms = report.timestamp_ms;
        broadcast(w, false);
    }

    if (report.image.empty()) {
        spdlog::warn("report {}/{} carries no image; nothing to upload", node_id, report.frame_seq);
    } else if (uploads_) {
        uploads_->enqueue(make_upload_record(node_id, mode_number(mode), report.frame_seq, report.timestamp_ms,
                                             report.detections, report.size_class, std::move(report.image)));
    }

    if (!fired_ && counter_.total() > config_.threshold) {
        fired_ = true;
        GeneralWarning g;
        g.count = counter_.total();
        g.threshold = config_.threshold;
        g.text = general_warning_text(g.count);
        g.timestamp_ms = now_ms();
        broadcast(g, false);
    }
    publish_counts();
}

void Rsu::broadcast(const ControlMessage& msg, bool consoles_only) {
    if (!consoles_only) {
        warnings_.push_back(msg);
        ++warnings_sent_;
    }
    std::vector<std::uint64_t> dead;
    for (const auto& [id, conn] : subscribers_) {
        if (consoles_only && conn->role != "console") {
            continue;
        }
        try {
            conn->channel.send(msg);
        } catch (const std::exception& e) {
            spdlog::info("dropping subscriber {} ({}): {}", id, conn->node_id, e.what());
            dead.push_back(id);
        }
    }
    for (auto id : dead) {
        if (subscribers_[id]->role == "console") {
            --consoles_;
        }
        subscribers_[id]->channel.shutdown();
        subscribers_.erase(id);
    }
    events_.publish(std::string(message_type(msg)), encode_control_body(msg));
}

void Rsu::publish_counts() { broadcast(make_counts_update(counter_), true); }

void Rsu::serve() {
    if (served_) {
        return;
    }
    served_ = true;
    listener_ = TcpListener::bind(config_.bind_host, config_.control_port);
    control_port_ = listener_->port();
    udp_ = UdpSocket::bind(config_.bind_host, config_.stream_port);
    udp_->set_recv_buffer(4 * 1024 * 1024);
    stream_port_ = udp_->port();

    accept_thread_ = std::thread([this] { accept_loop(); });
    datagram_thread_ = std::thread([this] { datagram_loop(); });
    frame_thread_ = std::thread([this] { frame_loop(); });
    if (config_.api_enabled) {
        start_api();
    }
    spdlog::info("rsu serving: control {} stream {} api {} mode {}", control_port_, stream_port_, api_port_,
                 mode_number(config_.mode));
}

void Rsu::shutdown() {
    if (stopping_.exchange(true)) {
        return;
    }
    stop_api();
    frames_cv_.notify_all();
    if (accept_thread_.joinable()) {
        accept_thread_.join();
    }
    if (datagram_thread_.joinable()) {
        datagram_thread_.join();
    }
    if (frame_thread_.joinable()) {
        frame_thread_.join();
    }
    std::list<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lock(conns_mutex_);
        conns.swap(conns_);
    }
    for (auto& c : conns) {
        c->channel.shutdown();
    }
    for (auto& c : conns) {
        if (c->reader.joinable()) {
            c->reader.join();
        }
    }
    state_.call([this] {
        subscribers_.clear();
        consoles_ = 0;
    });
    uploads_.reset();
}

void Rsu::accept_loop() {
    while (!stopping_) {
        std::optional<TcpStream> stream;
        try {
            stream = listener_->accept(200ms);
        } catch (const NetworkError& e) {
            spdlog::warn("accept failed: {}", e.what());
            std::this_thread::sleep_for(50ms);
            continue;
        }
        std::lock_guard lock(conns_mutex_);
        // Reap readers whose peers went away.
        for (auto it = conns_.begin(); it != conns_.end();) {
            if ((*it)->closed) {
                (*it)->reader.join();
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
        if (!stream) {
            continue;
        }
        auto conn = std::make_shared<Connection>(std::move(*stream));
        conn->id = next_conn_id_++;
        conn->reader = std::thread([this, conn] { reader_loop(conn); });
        conns_.push_back(conn);
    }
}

void Rsu::reader_loop(const std::shared_ptr<Connection>& conn) {
    std::string node_id = "node-" + std::to_string(conn->id);
    while (!stopping_) {
        std::optional<ControlMessage> msg;
        try {
            msg = conn->channel.receive(200ms);
        } catch (const FramingError& e) {
            spdlog::warn("connection {}: {}", conn->id, e.what());
            break;
        } catch (const ProtocolError& e) {
            spdlog::warn("connection {}: rejected message: {}", conn->id, e.what());
            state_.post([this] { ++reports_rejected_; });
            continue;
        } catch (const NetworkError&) {
            break;
        }
        if (!msg) {
            continue;
        }
        if (const auto* hello = std::get_if<Hello>(&*msg)) {
            if (!hello->node_id.empty()) {
                node_id = hello->node_id;
            }
            const std::string role = hello->role;
            state_.post([this, conn, role, node_id] {
                conn->role = role;
                conn->node_id = node_id;
                if ((role == "vehicle" || role == "console") && !subscribers_.contains(conn->id)) {
                    subscribers_[conn->id] = conn;
                    if (role == "console") {
                        ++consoles_;
                        try {
                            conn->channel.send(make_counts_update(counter_));
                        } catch (const std::exception&) {
                        }
                    }
                }
            });
        } else if (auto* report = std::get_if<AnomalyReport>(&*msg)) {
            submit_report(node_id, std::move(*report));
        } else if (std::holds_alternative<Bye>(*msg)) {
            break;
        } else {
            spdlog::debug("connection {}: ignoring {}", conn->id, message_type(*msg));
        }
    }
    state_.post([this, conn] {
        if (subscribers_.erase(conn->id) && conn->role == "console") {
            --consoles_;
        }
    });
    conn->channel.shutdown();
    conn->closed = true;
}

void Rsu::datagram_loop() {
    Reassembler reassembler(steady_now_ms, config_.reassembly_timeout);
    std::vector<std::uint8_t> buf(65536);
    while (!stopping_) {
        std::optional<std::size_t> n;
        try {
            n = udp_->recv(buf, 100ms);
        } catch (const NetworkError& e) {
            spdlog::warn("datagram receive failed: {}", e.what());
            continue;
        }
        if (n) {
            try {
                const auto chunk = decode_chunk(std::span(buf.data(), *n));
                if (auto done = reassembler.feed(chunk)) {
                    frames_received_.fetch_add(1);
                    {
                        std::lock_guard lock(frames_mutex_);
                        frames_.push_back({done->stream_id, done->frame_seq, std::move(done->payload)});
                    }
                    frames_cv_.notify_one();
                }
            } catch (const ProtocolError& e) {
                spdlog::warn("bad datagram: {}", e.what());
            }
        }
        if (reassembler.expire() > 0) {
            spdlog::info("frames dropped so far: {}", reassembler.dropped_frames());
        }
        dropped_frames_.store(reassembler.dropped_frames());
    }
}

void Rsu::frame_loop() {
    for (;;) {
        PendingFrame frame;
        {
            std::unique_lock lock(frames_mutex_);
            frames_cv_.wait(lock, [this] { return stopping_ || !frames_.empty(); });
            if (stopping_) {
                return;
            }
            frame = std::move(frames_.front());
            frames_.pop_front();
            frame_busy_ = true;
        }
        process_frame(std::move(frame));
        std::lock_guard lock(frames_mutex_);
        frame_busy_ = false;
    }
}

void Rsu::process_frame(PendingFrame pending) {
    FramePayload payload;
    try {
        payload = decode_frame_payload(pending.payload);
    } catch (const ProtocolError& e) {
        spdlog::warn("stream {} frame {}: {}", pending.stream_id, pending.frame_seq, e.what());
        return;
    }
    const auto seq = pending.frame_seq;
    const auto sid = pending.stream_id;
    const bool go = state_.call([&] {
        if (!running_ || mode_ != OperatingMode::Mode2 || !detector_) {
            return false;
        }
        const auto last = last_stream_seq_.find(sid);
        if (last != last_stream_seq_.end() && seq <= last->second) {
            spdlog::debug("stream {}: stale frame {}", sid, seq);
            return false;
        }
        last_stream_seq_[sid] = seq;
        SkipPolicy policy;
        if (skip_override_) {
            policy = SkipPolicy::manual(*skip_override_);
        } else {
            try {
                policy = skip_policy(compute_fsi({payload.speed_mps, payload.fps}));
            } catch (const ArgumentError& e) {
                spdlog::warn("stream {} frame {}: bad metadata: {}", sid, seq, e.what());
                return false;
            }
            auto_skip_ = policy.skip;
        }
        return should_process(seq, policy);
    });
    if (!go) {
        return;
    }

    Frame frame;
    frame.seq = seq;
    frame.width = payload.width;
    frame.height = payload.height;
    frame.meta = {payload.timestamp_ms, payload.speed_mps, payload.fps};
    frame.jpeg = std::move(payload.jpeg);
    std::vector<Detection> dets;
    try {
        dets = detector_->detect(frame, config_.detector);
    } catch (const DetectorError& e) {
        spdlog::warn("stream {} frame {}: detector failed, frame skipped: {}", sid, seq, e.what());
        return;
    }

    AnomalyReport report;
    report.frame_seq = seq;
    report.size_class = max_size_class(dets, frame.width, frame.height, config_.size);
    report.speed_mps = frame.meta.speed_mps;
    report.timestamp_ms = frame.meta.timestamp_ms;
    report.detections = std::move(dets);
    report.image = std::move(frame.jpeg);
    const std::string node_id = "stream-" + std::to_string(sid);
    state_.post([this, node_id, r = std::move(report)]() mutable {
        ++frames_processed_;
        apply_detections(node_id, OperatingMode::Mode2, std::move(r));
    });
}

}  // namespace roadwatch
