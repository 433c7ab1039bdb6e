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

// Thin RAII wrappers over POSIX sockets. All failures surface as
// NetworkError; reads take explicit timeouts.

#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include <netinet/in.h>

namespace roadwatch {

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Fd& operator=(Fd&& other) noexcept {
        if (this != &other) {
            reset(std::exchange(other.fd_, -1));
        }
        return *this;
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    int get() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset(int fd = -1);
    int release() { return std::exchange(fd_, -1); }

private:
    int fd_ = -1;
};

struct HostPort {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port"; throws ArgumentError.
HostPort parse_host_port(const std::string& text);

// IPv4 resolution; throws NetworkError.
sockaddr_in resolve_ipv4(const HostPort& hp);

// Blocks until readable or timeout. Returns false on timeout.
bool wait_readable(int fd, std::chrono::milliseconds timeout);

// Writes everything or throws NetworkError. Never raises SIGPIPE.
void send_all(int fd, std::span<const std::uint8_t> data, std::chrono::milliseconds timeout);

class TcpStream {
public:
    TcpStream() = default;
    explicit TcpStream(Fd fd) : fd_(std::move(fd)) {}

    static TcpStream connect(const HostPort& hp, std::chrono::milliseconds timeout = std::chrono::seconds(5));
    static TcpStream connect_unix(const std::string& path);

    void send(std::span<const std::uint8_t> data,
              std::chrono::milliseconds timeout = std::chrono::seconds(5)) const;
    // Returns bytes read, 0 on orderly EOF, nullopt on timeout.
    std::optional<std::size_t> recv_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) const;
    void shutdown() const;

    int fd() const { return fd_.get(); }
    bool valid() const { return fd_.valid(); }
    int release() { return fd_.release(); }

private:
    Fd fd_;
};

class TcpListener {
public:
    // Port 0 picks an ephemeral port.
    static TcpListener bind(const std::string& host, std::uint16_t port);

    std::optional<TcpStream> accept(std::chrono::milliseconds timeout) const;
    std::uint16_t port() const { return port_; }

private:
    Fd fd_;
    std::uint16_t port_ = 0;
};

class UdpSocket {
public:
    static UdpSocket open();
    static UdpSocket bind(const std::string& host, std::uint16_t port);

    // Returns false (and sets `error`) when the kernel rejects the datagram.
    bool send_to(const sockaddr_in& to, std::span<const std::uint8_t> data, std::string* error = nullptr) const;
    std::optional<std::size_t> recv(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) const;
    void set_recv_buffer(int bytes) const;

    std::uint16_t port() const { return port_; }
    int fd() const { return fd_.get(); }

private:
    Fd fd_;
    std::uint16_t port_ = 0;
};

}  // namespace roadwatch
