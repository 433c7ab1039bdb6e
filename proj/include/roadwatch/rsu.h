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

// The roadside unit. Threads: control acceptor plus one reader per
// connection, datagram receiver, Mode-2 frame worker, upload worker and the
// operator API server. Every state change runs on one serial executor.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "roadwatch/channel.h"
#include "roadwatch/cloudsink.h"
#include "roadwatch/core.h"
#include "roadwatch/detector.h"
#include "roadwatch/net.h"
#include "roadwatch/protocol.h"

namespace roadwatch {

// Runs submitted tasks one at a time on a dedicated thread.
class SerialExecutor {
public:
    SerialExecutor();
    ~SerialExecutor();
    SerialExecutor(const SerialExecutor&) = delete;
    SerialExecutor& operator=(const SerialExecutor&) = delete;

    void post(std::function<void()> task);

    template <typename F>
    auto call(F&& f) -> decltype(f()) {
        using R = decltype(f());
        auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(f));
        auto result = task->get_future();
        post([task] { (*task)(); });
        return result.get();
    }

    // Waits until every task posted before this call has run.
    void flush() {
        call([] {});
    }

private:
    void run();

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> tasks_;
    bool stopping_ = false;
    std::thread worker_;
};

// Server-sent events fan-out for the operator API.
class EventHub {
public:
    struct Subscriber {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<std::string> pending;
        bool closed = false;
    };

    std::shared_ptr<Subscriber> subscribe();
    void unsubscribe(const std::shared_ptr<Subscriber>& sub);
    // `event` names the SSE event; `data` is a single-line JSON body.
    void publish(const std::string& event, const std::string& data);
    void close_all();
    std::size_t subscribers() const;

private:
    mutable std::mutex mutex_;
    std::list<std::shared_ptr<Subscriber>> subs_;
};

struct RsuConfig {
    std::string bind_host = "127.0.0.1";
    std::uint16_t control_port = 7401;  // 0 = ephemeral
    std::uint16_t stream_port = 7402;
    std::uint16_t api_port = 7403;
    bool api_enabled = true;
    OperatingMode mode = OperatingMode::Mode1;
    std::uint64_t threshold = 10;
    SizeConfig size;
    DetectorConfig detector;
    std::optional<std::filesystem::path> label_dir;
    std::optional<std::string> bridge;
    std::string sink = "cloud";
    std::optional<std::filesystem::path> dead_letter_dir;  // default: <sink>/failed or ./failed
    std::size_t upload_capacity = 1024;
    int upload_retries = 3;
    std::chrono::milliseconds upload_backoff{1000};
    std::chrono::milliseconds reassembly_timeout{2000};
    bool autostart = false;
    std::optional<std::filesystem::path> static_dir;  // served at / when set

    // Throws ArgumentError (threshold 0, Mode 2 without a detector, ...).
    void validate() const;
};

struct RsuStatus {
    OperatingMode mode = OperatingMode::Mode1;
    bool running = false;
    AnomalyCounter counter;
    std::uint64_t dropped_frames = 0;
    std::optional<std::uint32_t> skip_override;
    std::optional<std::uint32_t> auto_skip;  // last skip derived from stream metadata
    std::uint64_t threshold = 0;
    bool fired = false;
    std::size_t vehicles = 0;
    std::size_t consoles = 0;
    std::size_t upload_depth = 0;
    std::uint64_t reports_received = 0;
    std::uint64_t reports_rejected = 0;  // malformed
    std::uint64_t reports_ignored = 0;   // stopped or wrong mode
    std::uint64_t frames_received = 0;
    std::uint64_t frames_processed = 0;
    std::uint64_t warnings_sent = 0;
};

std::string status_json(const RsuStatus& status, ClassSet set);

class Rsu {
public:
    // A null detector or sink is built from the config.
    explicit Rsu(RsuConfig config, std::unique_ptr<Detector> detector = nullptr,
                 std::unique_ptr<CloudSink> sink = nullptr);
    ~Rsu();
    Rsu(const Rsu&) = delete;
    Rsu& operator=(const Rsu&) = delete;

    // Binds every socket and starts the service threads. Throws NetworkError.
    void serve();
    // Stops threads and closes connections; idempotent.
    void shutdown();

    std::uint16_t control_port() const { return control_port_; }
    std::uint16_t stream_port() const { return stream_port_; }
    std::uint16_t api_port() const { return api_port_; }
    const RsuConfig& config() const { return config_; }

    // Operator actions, also reachable over the API.
    void start();
    void stop();
    // Throws SessionError while running.
    void set_mode(OperatingMode mode);
    void set_skip(std::uint32_t frames);
    // Clears the counter, re-arms the general warning and drops the skip
    // override.
    void reset();

    RsuStatus status();
    // WARNING and GENERAL_WARNING messages in broadcast order.
    std::vector<ControlMessage> issued_warnings();
    // Most recent processed frame with boxes and the corner indicator drawn.
    std::optional<Bytes> latest_frame();

    // Mode-1 entry point, also used by the connection readers.
    void submit_report(const std::string& node_id, AnomalyReport report);

    // Test and harness helpers.
    bool wait_reports(std::uint64_t n, std::chrono::milliseconds timeout);
    bool wait_frames(std::uint64_t n, std::chrono::milliseconds timeout);
    bool wait_vehicles(std::size_t n, std::chrono::milliseconds timeout);
    bool drain_uploads(std::chrono::milliseconds timeout);
    UploadQueue::Stats upload_stats() const;

private:
    struct Connection {
        std::uint64_t id = 0;
        ControlChannel channel;
        std::string role;
        std::string node_id;
        std::atomic<bool> closed{false};
        std::thread reader;

        explicit Connection(TcpStream stream) : channel(std::move(stream)) {}
    };

    struct PendingFrame {
        std::uint32_t stream_id = 0;
        std::uint32_t frame_seq = 0;
        Bytes payload;
    };

    struct Latest {
        Bytes jpeg;
        std::vector<Detection> detections;
        bool large = false;
    };

    void accept_loop();
    void reader_loop(const std::shared_ptr<Connection>& conn);
    void datagram_loop();
    void frame_loop();
    void process_frame(PendingFrame frame);
    void start_api();
    void stop_api();

    // State-executor only.
    void handle_report(const std::string& node_id, AnomalyReport report);
    void apply_detections(const std::string& node_id, OperatingMode mode, AnomalyReport report);
    void broadcast(const ControlMessage& msg, bool consoles_only);
    void publish_counts();
    bool wait_until(std::chrono::milliseconds timeout, const std::function<bool(const RsuStatus&)>& pred);

    RsuConfig config_;
    std::unique_ptr<Detector> detector_;
    std::unique_ptr<UploadQueue> uploads_;

    std::uint16_t control_port_ = 0;
    std::uint16_t stream_port_ = 0;
    std::uint16_t api_port_ = 0;

    // Owned by the state executor.
    OperatingMode mode_;
    bool running_ = false;
    AnomalyCounter counter_;
    bool fired_ = false;
    std::optional<std::uint32_t> skip_override_;
    std::optional<std::uint32_t> auto_skip_;
    std::set<std::pair<std::string, std::uint64_t>> seen_reports_;
    std::map<std::uint32_t, std::uint32_t> last_stream_seq_;
    std::map<std::uint64_t, std::shared_ptr<Connection>> subscribers_;
    std::vector<ControlMessage> warnings_;
    std::optional<Latest> latest_;
    std::uint64_t reports_received_ = 0;
    std::uint64_t reports_rejected_ = 0;
    std::uint64_t reports_ignored_ = 0;
    std::uint64_t frames_processed_ = 0;
    std::uint64_t warnings_sent_ = 0;
    std::size_t consoles_ = 0;

    std::atomic<std::uint64_t> frames_received_{0};
    std::atomic<std::uint64_t> dropped_frames_{0};
    std::atomic<bool> stopping_{false};
    bool served_ = false;

    std::optional<TcpListener> listener_;
    std::optional<UdpSocket> udp_;
    std::thread accept_thread_;
    std::thread datagram_thread_;
    std::thread frame_thread_;
    std::mutex conns_mutex_;
    std::list<std::shared_ptr<Connection>> conns_;
    std::uint64_t next_conn_id_ = 1;

    std::mutex frames_mutex_;
    std::condition_variable frames_cv_;
    std::deque<PendingFrame> frames_;
    bool frame_busy_ = false;

    EventHub events_;
    struct Api;
    std::unique_ptr<Api> api_;

    // Declared last so it is destroyed first, while the state it touches is
    // still alive.
    SerialExecutor state_;
};

}  // namespace roadwatch
