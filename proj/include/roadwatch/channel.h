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

#pragma once

#include <chrono>
#include <mutex>
#include <optional>

#include "roadwatch/net.h"
#include "roadwatch/protocol.h"

namespace roadwatch {

// Length-prefixed control messages over one TCP stream. Sends are
// serialized by an internal mutex; receive is meant for a single reader.
class ControlChannel {
public:
    ControlChannel() = default;
    explicit ControlChannel(TcpStream stream) : stream_(std::move(stream)) {}

    static ControlChannel connect(const HostPort& hp, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
        return ControlChannel(TcpStream::connect(hp, timeout));
    }

    void send(const ControlMessage& msg);
    // nullopt on timeout; NetworkError when the peer closed the stream.
    std::optional<ControlMessage> receive(std::chrono::milliseconds timeout);
    void shutdown() const { stream_.shutdown(); }
    bool valid() const { return stream_.valid(); }

private:
    TcpStream stream_;
    ControlReader reader_;
    std::mutex send_mutex_;
};

}  // namespace roadwatch
