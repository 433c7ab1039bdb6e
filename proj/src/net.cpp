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

#include "roadwatch/net.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "roadwatch/errors.h"

namespace roadwatch {

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
    throw NetworkError(what + ": " + std::strerror(errno));
}

std::uint16_t local_port(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        throw_errno("getsockname");
    }
    return ntohs(addr.sin_port);
}

int poll_one(int fd, short events, std::chrono::milliseconds timeout) {
    pollfd pfd{fd, events, 0};
    for (;;) {
        const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (rc < 0 && errno == EINTR) {
            continue;
        }
        if (rc < 0) {
            throw_errno("poll");
        }
        return rc;
    }
}

}  // namespace

void Fd::reset(int fd) {
    if (fd_ >= 0) {
        ::close(fd_);
    }
    fd_ = fd;
}

HostPort parse_host_port(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ArgumentError("expected host:port, got '" + text + "'");
    }
    HostPort hp;
    hp.host = text.substr(0, colon);
    const auto port_text = text.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(port_text, &used);
        if (used != port_text.size()) {
            throw std::invalid_argument("trailing");
        }
    } catch (const std::exception&) {
        throw ArgumentError("invalid port in '" + text + "'");
    }
    if (port > 65535) {
        throw ArgumentError("port out of range in '" + text + "'");
    }
    hp.port = static_cast<std::uint16_t>(port);
    return hp;
}

sockaddr_in resolve_ipv4(const HostPort& hp) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(hp.port);
    const std::string host = hp.host == "localhost" ? "127.0.0.1" : hp.host;
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) {
        return addr;
    }
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* result = nullptr;
    const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &result);
    if (rc != 0 || result == nullptr) {
        throw NetworkError("cannot resolve '" + hp.host + "': " + ::gai_strerror(rc));
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(result->ai_addr)->sin_addr;
    ::freeaddrinfo(result);
    return addr;
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) { return poll_one(fd, POLLIN, timeout) > 0; }

void send_all(int fd, std::span<const std::uint8_t> data, std::chrono::milliseconds timeout) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        if (poll_one(fd, POLLOUT, timeout) == 0) {
            throw NetworkError("send timed out");
        }
        const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            throw_errno("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

TcpStream TcpStream::connect(const HostPort& hp, std::chrono::milliseconds timeout) {
    const auto addr = resolve_ipv4(hp);
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!fd.valid()) {
        throw_errno("socket");
    }
    if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        if (errno != EINPROGRESS) {
            throw_errno("connect " + hp.str());
        }
        if (poll_one(fd.get(), POLLOUT, timeout) == 0) {
            throw NetworkError("connect " + hp.str() + ": timed out");
        }
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            throw_errno("connect " + hp.str());
        }
    }
    const int flags = ::fcntl(fd.get(), F_GETFL);
    ::fcntl(fd.get(), F_SETFL, flags & ~O_NONBLOCK);
    const int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpStream(std::move(fd));
}

TcpStream TcpStream::connect_unix(const std::string& path) {
    Fd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd.valid()) {
        throw_errno("socket");
    }
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) {
        throw ArgumentError("unix socket path too long: " + path);
    }
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw_errno("connect " + path);
    }
    return TcpStream(std::move(fd));
}

void TcpStream::send(std::span<const std::uint8_t> data, std::chrono::milliseconds timeout) const {
    send_all(fd_.get(), data, timeout);
}

std::optional<std::size_t> TcpStream::recv_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) const {
    if (!wait_readable(fd_.get(), timeout)) {
        return std::nullopt;
    }
    for (;;) {
        const auto n = ::recv(fd_.get(), buf.data(), buf.size(), 0);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n < 0) {
            throw_errno("recv");
        }
        return static_cast<std::size_t>(n);
    }
}

void TcpStream::shutdown() const {
    if (fd_.valid()) {
        ::shutdown(fd_.get(), SHUT_RDWR);
    }
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port) {
    TcpListener listener;
    listener.fd_ = Fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!listener.fd_.valid()) {
        throw_errno("socket");
    }
    const int one = 1;
    ::setsockopt(listener.fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const auto addr = resolve_ipv4({host, port});
    if (::bind(listener.fd_.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw_errno("bind " + host + ":" + std::to_string(port));
    }
    if (::listen(listener.fd_.get(), 64) != 0) {
        throw_errno("listen");
    }
    listener.port_ = local_port(listener.fd_.get());
    return listener;
}

std::optional<TcpStream> TcpListener::accept(std::chrono::milliseconds timeout) const {
    if (!wait_readable(fd_.get(), timeout)) {
        return std::nullopt;
    }
    Fd fd(::accept4(fd_.get(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!fd.valid()) {
        if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) {
            return std::nullopt;
        }
        throw_errno("accept");
    }
    const int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpStream(std::move(fd));
}

UdpSocket UdpSocket::open() {
    UdpSocket sock;
    sock.fd_ = Fd(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!sock.fd_.valid()) {
        throw_errno("socket");
    }
    return sock;
}

UdpSocket UdpSocket::bind(const std::string& host, std::uint16_t port) {
    auto sock = open();
    const auto addr = resolve_ipv4({host, port});
    if (::bind(sock.fd_.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw_errno("bind udp " + host + ":" + std::to_string(port));
    }
    sock.port_ = local_port(sock.fd_.get());
    return sock;
}

bool UdpSocket::send_to(const sockaddr_in& to, std::span<const std::uint8_t> data, std::string* error) const {
    for (;;) {
        const auto n = ::sendto(fd_.get(), data.data(), data.size(), MSG_NOSIGNAL,
                                reinterpret_cast<const sockaddr*>(&to), sizeof(to));
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n < 0) {
            if (error) {
                *error = std::strerror(errno);
            }
            return false;
        }
        return true;
    }
}

std::optional<std::size_t> UdpSocket::recv(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) const {
    if (!wait_readable(fd_.get(), timeout)) {
        return std::nullopt;
    }
    const auto n = ::recv(fd_.get(), buf.data(), buf.size(), 0);
    if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) {
            return std::nullopt;
        }
        throw_errno("recv udp");
    }
    return static_cast<std::size_t>(n);
}

void UdpSocket::set_recv_buffer(int bytes) const {
    if (::setsockopt(fd_.get(), SOL_SOCKET, SO_RCVBUFFORCE, &bytes, sizeof(bytes)) != 0) {
        ::setsockopt(fd_.get(), SOL_SOCKET, SO_RCVBUF, &bytes, sizeof(bytes));
    }
}

}  // namespace roadwatch
