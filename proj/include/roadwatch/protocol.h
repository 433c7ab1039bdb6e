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

// Vehicle <-> RSU wire formats.
//
// Control channel (TCP): each message is a u32 big-endian body length
// followed by a UTF-8 JSON object whose "type" field selects the variant.
//
// Frame stream (UDP): a frame payload (u16 big-endian metadata length,
// metadata JSON, JPEG bytes) is cut into datagrams of at most `mtu` payload
// bytes, each behind a 16-byte header:
//
//   offset  size  field
//        0     2  magic "RW" (0x52 0x57)
//        2     1  version (1)
//        3     1  flags (bit 0: last chunk)
//        4     4  stream_id    (big-endian)
//        8     4  frame_seq    (big-endian)
//       12     2  chunk_index  (big-endian)
//       14     2  chunk_count  (big-endian)

#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "roadwatch/bytes.h"
#include "roadwatch/core.h"

namespace roadwatch {

inline constexpr std::string_view kWarningText = "There is large anomaly within your range, be carefull!";
inline constexpr std::size_t kMaxControlBody = 16u * 1024u * 1024u;

std::string general_warning_text(std::uint64_t count);

// Mode 1: detection on the vehicle, reports over the control channel.
// Mode 2: raw frames streamed to the RSU, detection there.
enum class OperatingMode { Mode1 = 1, Mode2 = 2 };

inline int mode_number(OperatingMode m) { return static_cast<int>(m); }
// Throws ArgumentError for anything but 1 or 2.
OperatingMode mode_from_number(int n);

struct Hello {
    std::string role;  // "endnode" | "vehicle" | "console"
    std::string node_id;
    bool operator==(const Hello&) const = default;
};

struct AnomalyReport {
    std::uint64_t frame_seq = 0;
    std::vector<Detection> detections;
    SizeClass size_class = SizeClass::Small;
    double speed_mps = 0.0;
    std::int64_t timestamp_ms = 0;
    Bytes image;  // JPEG; base64 on the wire
    bool operator==(const AnomalyReport&) const = default;
};

struct Warning {
    std::string text{kWarningText};
    int class_id = 0;
    SizeClass size_class = SizeClass::Large;
    std::uint64_t frame_seq = 0;
    std::int64_t timestamp_ms = 0;
    bool operator==(const Warning&) const = default;
};

struct GeneralWarning {
    std::uint64_t count = 0;
    std::uint64_t threshold = 0;
    std::string text;
    std::int64_t timestamp_ms = 0;
    bool operator==(const GeneralWarning&) const = default;
};

struct CountsUpdate {
    std::map<std::string, std::uint64_t> per_class;
    std::uint64_t total = 0;
    bool operator==(const CountsUpdate&) const = default;
};

struct Bye {
    std::string node_id;
    bool operator==(const Bye&) const = default;
};

using ControlMessage = std::variant<Hello, AnomalyReport, Warning, GeneralWarning, CountsUpdate, Bye>;

std::string_view message_type(const ControlMessage& msg);  // "HELLO", "ANOMALY_REPORT", ...

std::string encode_control_body(const ControlMessage& msg);
// Throws ProtocolError on bad JSON, unknown type or missing fields.
ControlMessage decode_control_body(std::string_view body);

Bytes encode_control(const ControlMessage& msg);
// Exactly one frame. Throws FramingError when truncated, OversizeError above
// 16 MiB.
ControlMessage decode_control(std::span<const std::uint8_t> frame);

CountsUpdate make_counts_update(const AnomalyCounter& counter);

// Incremental decoder for a TCP byte stream.
class ControlReader {
public:
    void feed(std::span<const std::uint8_t> data);
    std::optional<ControlMessage> next();
    std::size_t buffered() const { return buffer_.size(); }

private:
    Bytes buffer_;
};

inline constexpr std::size_t kChunkHeaderSize = 16;
inline constexpr std::size_t kDefaultMtu = 1400;
inline constexpr std::uint8_t kChunkMagic0 = 0x52;
inline constexpr std::uint8_t kChunkMagic1 = 0x57;
inline constexpr std::uint8_t kChunkVersion = 1;
inline constexpr std::uint8_t kChunkLastFlag = 0x01;

struct ChunkHeader {
    std::uint8_t flags = 0;
    std::uint32_t stream_id = 0;
    std::uint32_t frame_seq = 0;
    std::uint16_t chunk_index = 0;
    std::uint16_t chunk_count = 0;

    bool last() const { return (flags & kChunkLastFlag) != 0; }
    bool operator==(const ChunkHeader&) const = default;
};

struct FrameChunk {
    ChunkHeader header;
    Bytes payload;
    bool operator==(const FrameChunk&) const = default;
};

Bytes encode_chunk(const FrameChunk& chunk);
// Throws ProtocolError on short input, bad magic/version or index >= count.
FrameChunk decode_chunk(std::span<const std::uint8_t> datagram);

// ceil(len / mtu) contiguous slices; the last carries the last-chunk flag.
// Throws ArgumentError on an empty payload or more than 65535 chunks.
std::vector<FrameChunk> chunk_frame(std::span<const std::uint8_t> payload, std::uint32_t stream_id,
                                    std::uint32_t frame_seq, std::size_t mtu = kDefaultMtu);

struct FramePayload {
    std::int64_t timestamp_ms = 0;
    double speed_mps = 0.0;
    double fps = 0.0;
    int width = 0;
    int height = 0;
    Bytes jpeg;
    bool operator==(const FramePayload&) const = default;
};

Bytes encode_frame_payload(const FramePayload& payload);
FramePayload decode_frame_payload(std::span<const std::uint8_t> bytes);

// Collects chunks per (stream_id, frame_seq). Owned by one receive loop.
class Reassembler {
public:
    using Clock = std::function<std::int64_t()>;  // monotonic milliseconds

    struct Completed {
        std::uint32_t stream_id = 0;
        std::uint32_t frame_seq = 0;
        Bytes payload;
    };

    explicit Reassembler(Clock clock = {}, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

    // Returns the payload when this chunk completes its frame. Duplicates and
    // chunks of already completed frames are ignored. Throws ProtocolError
    // when chunk_count disagrees with earlier chunks of the same frame.
    std::optional<Completed> feed(const FrameChunk& chunk);

    // Abandons partial frames older than the timeout; returns how many.
    std::size_t expire();

    std::uint64_t dropped_frames() const { return dropped_; }
    std::uint64_t completed_frames() const { return completed_; }
    std::size_t pending() const { return partial_.size(); }

private:
    using Key = std::pair<std::uint32_t, std::uint32_t>;
    struct Partial {
        std::uint16_t chunk_count = 0;
        std::int64_t started_ms = 0;
        std::size_t received = 0;
        std::vector<std::optional<Bytes>> slots;
    };

    void remember_done(const Key& key);

    Clock clock_;
    std::int64_t timeout_ms_;
    std::map<Key, Partial> partial_;
    std::set<Key> done_;
    std::deque<Key> done_order_;
    std::uint64_t dropped_ = 0;
    std::uint64_t completed_ = 0;
};

std::int64_t steady_now_ms();

}  // namespace roadwatch
