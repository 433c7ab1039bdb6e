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

// Vehicle side: frame sources, the Mode-1 and Mode-2 sessions and the
// passive listener that prints RSU warnings.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roadwatch/core.h"
#include "roadwatch/detector.h"
#include "roadwatch/net.h"
#include "roadwatch/protocol.h"

namespace roadwatch {

// Frames in seq order starting at 0.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::optional<Frame> next() = 0;
    virtual int width() const = 0;
    virtual int height() const = 0;
};

// `{seq}.jpg` files from 0 up to the first missing index.
class ImageDirSource final : public FrameSource {
public:
    // Throws ArgumentError when the directory has no 0.jpg.
    explicit ImageDirSource(std::filesystem::path dir);

    std::optional<Frame> next() override;
    int width() const override { return width_; }
    int height() const override { return height_; }

private:
    std::filesystem::path dir_;
    std::uint64_t seq_ = 0;
    int width_ = 0;
    int height_ = 0;
};

// Frames produced on demand by a callback; handy for synthetic drives.
class GeneratedSource final : public FrameSource {
public:
    using Render = std::function<Bytes(std::uint64_t seq)>;

    GeneratedSource(std::uint64_t count, int width, int height, Render render);

    std::optional<Frame> next() override;
    int width() const override { return width_; }
    int height() const override { return height_; }

private:
    std::uint64_t count_;
    int width_;
    int height_;
    Render render_;
    std::uint64_t seq_ = 0;
};

struct EndnodeConfig {
    OperatingMode mode = OperatingMode::Mode1;
    std::optional<HostPort> rsu;     // control channel (Mode 1)
    std::optional<HostPort> stream;  // datagram target (Mode 2)
    MotionState motion;
    SizeConfig size;
    DetectorConfig detector;
    std::string node_id = "endnode";
    std::optional<std::uint32_t> skip_override;
    bool fast = false;  // no pacing at source fps
    // Mode 2 only: pause between frames even when `fast`.
    std::chrono::microseconds frame_gap{0};
    std::size_t mtu = kDefaultMtu;
    double loss_rate = 0.0;  // Mode 2 fault injection: drop this share of datagrams
    std::uint64_t seed = 0;
    int connect_retries = 3;
    std::chrono::milliseconds retry_backoff{1000};

    // Throws ArgumentError when the mode's address is missing.
    void validate() const;
};

struct Mode1Summary {
    std::uint64_t frames_seen = 0;
    std::uint64_t frames_processed = 0;
    std::uint64_t reports_sent = 0;
    std::uint64_t detector_errors = 0;
    AnomalyCounter counter;
};

struct Mode2Summary {
    std::uint64_t frames_seen = 0;
    std::uint64_t frames_streamed = 0;
    std::uint64_t frames_dropped = 0;
    std::uint64_t datagrams_sent = 0;
    std::uint64_t bytes_sent = 0;
    std::uint32_t stream_id = 0;
};

// Throws SessionError when the RSU stays unreachable after the retries.
Mode1Summary run_mode1(const EndnodeConfig& cfg, FrameSource& source, Detector& detector,
                       const std::atomic<bool>* stop = nullptr);

Mode2Summary run_mode2(const EndnodeConfig& cfg, FrameSource& source, const std::atomic<bool>* stop = nullptr);

struct ListenerConfig {
    HostPort rsu;
    std::string node_id = "vehicle";
    std::string role = "vehicle";
    std::chrono::milliseconds reconnect_backoff{1000};
    // Called once per successful HELLO.
    std::function<void()> on_connected;
};

// Delivers WARNING and GENERAL_WARNING messages (plus COUNTS for the console
// role) until `stop` is set. Reconnects after a lost connection.
void run_vehicle_listener(const ListenerConfig& cfg, const std::function<void(const ControlMessage&)>& on_message,
                          const std::atomic<bool>& stop);

// One output line for a listener message: the text, or its JSON body.
std::optional<std::string> listener_line(const ControlMessage& msg, bool json);

}  // namespace roadwatch
