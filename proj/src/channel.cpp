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

#include "roadwatch/channel.h"

#include <array>

#include "roadwatch/errors.h"

namespace roadwatch {

void ControlChannel::send(const ControlMessage& msg) {
    const auto frame = encode_control(msg);
    std::lock_guard lock(send_mutex_);
    stream_.send(frame);
}

std::optional<ControlMessage> ControlChannel::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::array<std::uint8_t, 64 * 1024> buf;
    for (;;) {
        if (auto msg = reader_.next()) {
            return msg;
        }
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() < 0) {
            return std::nullopt;
        }
        const auto n = stream_.recv_some(buf, left);
        if (!n) {
            return std::nullopt;
        }
        if (*n == 0) {
            if (reader_.buffered() != 0) {
                throw FramingError("stream closed inside a control frame");
            }
            throw NetworkError("peer closed the control channel");
        }
        reader_.feed(std::span(buf.data(), *n));
    }
}

}  // namespace roadwatch
