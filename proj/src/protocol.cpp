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

#include "roadwatch/protocol.h"

#include <algorithm>
#include <chrono>

#include <json.hpp>

#include "roadwatch/errors.h"

namespace roadwatch {

using ojson = nlohmann::ordered_json;

namespace {

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

ojson detection_to_json(const Detection& d) {
    return ojson{{"class_id", class_id(d.cls)}, {"x", d.box.x},       {"y", d.box.y},
                 {"L", d.box.length},           {"W", d.box.width},   {"conf", d.confidence}};
}

Detection detection_from_json(const ojson& j) {
    const auto cls = class_from_id(j.at("class_id").get<int>());
    if (!cls) {
        throw ProtocolError("unknown class_id " + j.at("class_id").dump());
    }
    Detection d;
    d.cls = *cls;
    d.box = BoundingBox{j.at("x").get<std::int64_t>(), j.at("y").get<std::int64_t>(), j.at("L").get<std::int64_t>(),
                        j.at("W").get<std::int64_t>()};
    d.confidence = j.at("conf").get<double>();
    return d;
}

SizeClass size_from_json(const ojson& j) {
    const auto s = size_class_from_name(j.get<std::string>());
    if (!s) {
        throw ProtocolError("size_class must be \"large\" or \"small\", got " + j.dump());
    }
    return *s;
}

struct Encoder {
    ojson operator()(const Hello& m) const {
        return ojson{{"type", "HELLO"}, {"role", m.role}, {"node_id", m.node_id}};
    }
    ojson operator()(const AnomalyReport& m) const {
        ojson dets = ojson::array();
        for (const auto& d : m.detections) {
            dets.push_back(detection_to_json(d));
        }
        return ojson{{"type", "ANOMALY_REPORT"},
                     {"frame_seq", m.frame_seq},
                     {"detections", std::move(dets)},
                     {"size_class", size_class_name(m.size_class)},
                     {"speed_mps", m.speed_mps},
                     {"timestamp_ms", m.timestamp_ms},
                     {"image_b64", base64_encode(m.image)}};
    }
    ojson operator()(const Warning& m) const {
        return ojson{{"type", "WARNING"},
                     {"text", m.text},
                     {"class_id", m.class_id},
                     {"size_class", size_class_name(m.size_class)},
                     {"frame_seq", m.frame_seq},
                     {"timestamp_ms", m.timestamp_ms}};
    }
    ojson operator()(const GeneralWarning& m) const {
        return ojson{{"type", "GENERAL_WARNING"},
                     {"count", m.count},
                     {"threshold", m.threshold},
                     {"text", m.text},
                     {"timestamp_ms", m.timestamp_ms}};
    }
    ojson operator()(const CountsUpdate& m) const {
        ojson per_class = ojson::object();
        for (const auto& [k, v] : m.per_class) {
            per_class[k] = v;
        }
        return ojson{{"type", "COUNTS"}, {"per_class", std::move(per_class)}, {"total", m.total}};
    }
    ojson operator()(const Bye& m) const { return ojson{{"type", "BYE"}, {"node_id", m.node_id}}; }
};

ControlMessage decode_object(const ojson& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "HELLO") {
        Hello m{j.at("role").get<std::string>(), j.at("node_id").get<std::string>()};
        if (m.role != "endnode" && m.role != "vehicle" && m.role != "console") {
            throw ProtocolError("unknown HELLO role '" + m.role + "'");
        }
        return m;
    }
    if (type == "ANOMALY_REPORT") {
        AnomalyReport m;
        m.frame_seq = j.at("frame_seq").get<std::uint64_t>();
        for (const auto& d : j.at("detections")) {
            m.detections.push_back(detection_from_json(d));
        }
        m.size_class = size_from_json(j.at("size_class"));
        m.speed_mps = j.at("speed_mps").get<double>();
        m.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        m.image = base64_decode(j.at("image_b64").get<std::string>());
        return m;
    }
    if (type == "WARNING") {
        Warning m;
        m.text = j.at("text").get<std::string>();
        m.class_id = j.at("class_id").get<int>();
        m.size_class = size_from_json(j.at("size_class"));
        m.frame_seq = j.at("frame_seq").get<std::uint64_t>();
        m.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        return m;
    }
    if (type == "GENERAL_WARNING") {
        return GeneralWarning{j.at("count").get<std::uint64_t>(), j.at("threshold").get<std::uint64_t>(),
                              j.at("text").get<std::string>(), j.at("timestamp_ms").get<std::int64_t>()};
    }
    if (type == "COUNTS") {
        CountsUpdate m;
        for (const auto& [k, v] : j.at("per_class").items()) {
            m.per_class[k] = v.get<std::uint64_t>();
        }
        m.total = j.at("total").get<std::uint64_t>();
        return m;
    }
    if (type == "BYE") {
        return Bye{j.at("node_id").get<std::string>()};
    }
    throw ProtocolError("unknown message type '" + type + "'");
}

}  // namespace

std::string general_warning_text(std::uint64_t count) {
    return "Caution: this road contains many anomalies (" + std::to_string(count) + " detected).";
}

std::string_view message_type(const ControlMessage& msg) {
    static constexpr std::string_view kNames[] = {"HELLO", "ANOMALY_REPORT", "WARNING", "GENERAL_WARNING", "COUNTS", "BYE"};
    return kNames[msg.index()];
}

std::string encode_control_body(const ControlMessage& msg) { return std::visit(Encoder{}, msg).dump(); }

ControlMessage decode_control_body(std::string_view body) {
    ojson j;
    try {
        j = ojson::parse(body);
    } catch (const ojson::parse_error& e) {
        throw ProtocolError(std::string("control body is not JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ProtocolError("control body is not a JSON object");
    }
    try {
        return decode_object(j);
    } catch (const ojson::exception& e) {
        throw ProtocolError(std::string("malformed control message: ") + e.what());
    }
}

Bytes encode_control(const ControlMessage& msg) {
    const auto body = encode_control_body(msg);
    if (body.size() > kMaxControlBody) {
        throw OversizeError("control body of " + std::to_string(body.size()) + " bytes exceeds 16 MiB");
    }
    Bytes out;
    out.reserve(4 + body.size());
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

ControlMessage decode_control(std::span<const std::uint8_t> frame) {
    if (frame.size() < 4) {
        throw FramingError("control frame shorter than its length prefix");
    }
    const auto len = get_u32(frame.data());
    if (len > kMaxControlBody) {
        throw OversizeError("control body length " + std::to_string(len) + " exceeds 16 MiB");
    }
    if (frame.size() - 4 < len) {
        throw FramingError("control body truncated: expected " + std::to_string(len) + " bytes, have " +
                           std::to_string(frame.size() - 4));
    }
    if (frame.size() - 4 > len) {
        throw FramingError("trailing bytes after control body");
    }
    return decode_control_body(std::string_view(reinterpret_cast<const char*>(frame.data() + 4), len));
}

OperatingMode mode_from_number(int n) {
    if (n != 1 && n != 2) {
        throw ArgumentError("mode must be 1 or 2, got " + std::to_string(n));
    }
    return static_cast<OperatingMode>(n);
}

CountsUpdate make_counts_update(const AnomalyCounter& counter) {
    CountsUpdate m;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        m.per_class[std::string(class_name(static_cast<AnomalyClass>(c)))] = counter.counts()[c];
    }
    m.total = counter.total();
    return m;
}

void ControlReader::feed(std::span<const std::uint8_t> data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

std::optional<ControlMessage> ControlReader::next() {
    if (buffer_.size() < 4) {
        return std::nullopt;
    }
    const auto len = get_u32(buffer_.data());
    if (len > kMaxControlBody) {
        throw OversizeError("control body length " + std::to_string(len) + " exceeds 16 MiB");
    }
    if (buffer_.size() - 4 < len) {
        return std::nullopt;
    }
    const std::string body(reinterpret_cast<const char*>(buffer_.data() + 4), len);
    buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + len);
    return decode_control_body(body);
}

Bytes encode_chunk(const FrameChunk& chunk) {
    Bytes out;
    out.reserve(kChunkHeaderSize + chunk.payload.size());
    out.push_back(kChunkMagic0);
    out.push_back(kChunkMagic1);
    out.push_back(kChunkVersion);
    out.push_back(chunk.header.flags);
    put_u32(out, chunk.header.stream_id);
    put_u32(out, chunk.header.frame_seq);
    put_u16(out, chunk.header.chunk_index);
    put_u16(out, chunk.header.chunk_count);
    out.insert(out.end(), chunk.payload.begin(), chunk.payload.end());
    return out;
}

FrameChunk decode_chunk(std::span<const std::uint8_t> datagram) {
    if (datagram.size() < kChunkHeaderSize) {
        throw ProtocolError("datagram shorter than chunk header");
    }
    if (datagram[0] != kChunkMagic0 || datagram[1] != kChunkMagic1) {
        throw ProtocolError("bad chunk magic");
    }
    if (datagram[2] != kChunkVersion) {
        throw ProtocolError("unsupported chunk version " + std::to_string(datagram[2]));
    }
    FrameChunk chunk;
    chunk.header.flags = datagram[3];
    chunk.header.stream_id = get_u32(&datagram[4]);
    chunk.header.frame_seq = get_u32(&datagram[8]);
    chunk.header.chunk_index = get_u16(&datagram[12]);
    chunk.header.chunk_count = get_u16(&datagram[14]);
    if (chunk.header.chunk_index >= chunk.header.chunk_count) {
        throw ProtocolError("chunk index " + std::to_string(chunk.header.chunk_index) + " >= count " +
                            std::to_string(chunk.header.chunk_count));
    }
    chunk.payload.assign(datagram.begin() + kChunkHeaderSize, datagram.end());
    return chunk;
}

std::vector<FrameChunk> chunk_frame(std::span<const std::uint8_t> payload, std::uint32_t stream_id,
                                    std::uint32_t frame_seq, std::size_t mtu) {
    if (payload.empty()) {
        throw ArgumentError("cannot chunk an empty payload");
    }
    if (mtu == 0) {
        throw ArgumentError("mtu must be positive");
    }
    const std::size_t count = (payload.size() + mtu - 1) / mtu;
    if (count > 0xFFFF) {
        throw ArgumentError("payload needs " + std::to_string(count) + " chunks, limit is 65535");
    }
    std::vector<FrameChunk> chunks;
    chunks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t begin = i * mtu;
        const std::size_t end = std::min(payload.size(), begin + mtu);
        FrameChunk c;
        c.header.flags = i + 1 == count ? kChunkLastFlag : 0;
        c.header.stream_id = stream_id;
        c.header.frame_seq = frame_seq;
        c.header.chunk_index = static_cast<std::uint16_t>(i);
        c.header.chunk_count = static_cast<std::uint16_t>(count);
        c.payload.assign(payload.begin() + static_cast<std::ptrdiff_t>(begin),
                         payload.begin() + static_cast<std::ptrdiff_t>(end));
        chunks.push_back(std::move(c));
    }
    return chunks;
}

Bytes encode_frame_payload(const FramePayload& payload) {
    if (payload.jpeg.empty()) {
        throw ArgumentError("frame payload needs JPEG bytes");
    }
    const auto meta = ojson{{"timestamp_ms", payload.timestamp_ms},
                            {"speed_mps", payload.speed_mps},
                            {"fps", payload.fps},
                            {"width", payload.width},
                            {"height", payload.height}}
                          .dump();
    Bytes out;
    out.reserve(2 + meta.size() + payload.jpeg.size());
    put_u16(out, static_cast<std::uint16_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    out.insert(out.end(), payload.jpeg.begin(), payload.jpeg.end());
    return out;
}

FramePayload decode_frame_payload(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2) {
        throw ProtocolError("frame payload too short");
    }
    const std::size_t meta_len = get_u16(bytes.data());
    if (bytes.size() < 2 + meta_len) {
        throw ProtocolError("frame payload metadata truncated");
    }
    FramePayload p;
    try {
        const auto meta = ojson::parse(std::string_view(reinterpret_cast<const char*>(bytes.data() + 2), meta_len));
        p.timestamp_ms = meta.at("timestamp_ms").get<std::int64_t>();
        p.speed_mps = meta.at("speed_mps").get<double>();
        p.fps = meta.at("fps").get<double>();
        p.width = meta.at("width").get<int>();
        p.height = meta.at("height").get<int>();
    } catch (const ojson::exception& e) {
        throw ProtocolError(std::string("frame metadata malformed: ") + e.what());
    }
    p.jpeg.assign(bytes.begin() + static_cast<std::ptrdiff_t>(2 + meta_len), bytes.end());
    if (p.jpeg.empty()) {
        throw ProtocolError("frame payload has no JPEG bytes");
    }
    return p;
}

std::int64_t steady_now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

Reassembler::Reassembler(Clock clock, std::chrono::milliseconds timeout)
    : clock_(clock ? std::move(clock) : Clock(steady_now_ms)), timeout_ms_(timeout.count()) {}

std::optional<Reassembler::Completed> Reassembler::feed(const FrameChunk& chunk) {
    expire();
    const Key key{chunk.header.stream_id, chunk.header.frame_seq};
    if (done_.contains(key)) {
        return std::nullopt;
    }
    if (chunk.header.chunk_index >= chunk.header.chunk_count) {
        throw ProtocolError("chunk index out of range");
    }
    auto [it, inserted] = partial_.try_emplace(key);
    Partial& p = it->second;
    if (inserted) {
        p.chunk_count = chunk.header.chunk_count;
        p.started_ms = clock_();
        p.slots.resize(p.chunk_count);
    } else if (p.chunk_count != chunk.header.chunk_count) {
        throw ProtocolError("conflicting chunk_count for stream " + std::to_string(key.first) + " frame " +
                            std::to_string(key.second));
    }
    auto& slot = p.slots[chunk.header.chunk_index];
    if (slot) {
        return std::nullopt;
    }
    slot = chunk.payload;
    if (++p.received < p.chunk_count) {
        return std::nullopt;
    }
    Completed done{key.first, key.second, {}};
    for (auto& s : p.slots) {
        done.payload.insert(done.payload.end(), s->begin(), s->end());
    }
    partial_.erase(it);
    remember_done(key);
    ++completed_;
    return done;
}

std::size_t Reassembler::expire() {
    const auto now = clock_();
    std::size_t expired = 0;
    for (auto it = partial_.begin(); it != partial_.end();) {
        if (now - it->second.started_ms >= timeout_ms_) {
            remember_done(it->first);
            it = partial_.erase(it);
            ++expired;
        } else {
            ++it;
        }
    }
    dropped_ += expired;
    return expired;
}

void Reassembler::remember_done(const Key& key) {
    constexpr std::size_t kRemember = 4096;
    if (done_.insert(key).second) {
        done_order_.push_back(key);
    }
    while (done_order_.size() > kRemember) {
        done_.erase(done_order_.front());
        done_order_.pop_front();
    }
}

}  // namespace roadwatch
