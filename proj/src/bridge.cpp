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

#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

#include "roadwatch/detector.h"
#include "roadwatch/errors.h"
#include "roadwatch/net.h"

namespace roadwatch {

using json = nlohmann::json;

BridgeDetector::BridgeDetector(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
    if (!endpoint_.starts_with("exec:") && !endpoint_.starts_with("unix:") && !endpoint_.starts_with("tcp:")) {
        throw ArgumentError("bridge endpoint must start with exec:, unix: or tcp: (got '" + endpoint_ + "')");
    }
}

BridgeDetector::~BridgeDetector() { disconnect(); }

void BridgeDetector::connect() {
    if (endpoint_.starts_with("exec:")) {
        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
            throw DetectorError(std::string("bridge socketpair: ") + std::strerror(errno));
        }
        const std::string command = endpoint_.substr(5);
        const pid_t pid = ::fork();
        if (pid < 0) {
            ::close(fds[0]);
            ::close(fds[1]);
            throw DetectorError(std::string("bridge fork: ") + std::strerror(errno));
        }
        if (pid == 0) {
            ::dup2(fds[1], STDIN_FILENO);
            ::dup2(fds[1], STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(fds[1]);
        child_pid_ = pid;
        read_fd_ = write_fd_ = fds[0];
    } else if (endpoint_.starts_with("unix:")) {
        try {
            read_fd_ = write_fd_ = TcpStream::connect_unix(endpoint_.substr(5)).release();
        } catch (const NetworkError& e) {
            throw DetectorError(std::string("bridge: ") + e.what());
        }
    } else {
        try {
            read_fd_ = write_fd_ = TcpStream::connect(parse_host_port(endpoint_.substr(4)), timeout_).release();
        } catch (const NetworkError& e) {
            throw DetectorError(std::string("bridge: ") + e.what());
        }
    }
    buffer_.clear();
}

void BridgeDetector::disconnect() {
    if (read_fd_ >= 0) {
        ::close(read_fd_);
    }
    if (write_fd_ >= 0 && write_fd_ != read_fd_) {
        ::close(write_fd_);
    }
    read_fd_ = write_fd_ = -1;
    if (child_pid_ > 0) {
        ::kill(child_pid_, SIGTERM);
        ::waitpid(child_pid_, nullptr, 0);
        child_pid_ = -1;
    }
    buffer_.clear();
}

void BridgeDetector::write_line(const std::string& line) {
    try {
        send_all(write_fd_, std::span(reinterpret_cast<const std::uint8_t*>(line.data()), line.size()), timeout_);
    } catch (const NetworkError& e) {
        disconnect();
        throw DetectorError(std::string("bridge write: ") + e.what());
    }
}

std::string BridgeDetector::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0 || !wait_readable(read_fd_, left)) {
            disconnect();
            throw DetectorError("bridge timed out after " + std::to_string(timeout_.count()) + " ms");
        }
        char chunk[65536];
        const auto n = ::read(read_fd_, chunk, sizeof(chunk));
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            disconnect();
            throw DetectorError("bridge closed the connection");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::vector<Detection> BridgeDetector::detect(const Frame& frame, const DetectorConfig& cfg) {
    if (read_fd_ < 0) {
        connect();
    }
    json request = {
        {"seq", frame.seq},
        {"width", frame.width},
        {"height", frame.height},
        {"image_b64", base64_encode(frame.jpeg)},
    };
    write_line(request.dump() + "\n");
    const auto line = read_line();

    json response;
    try {
        response = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("bridge response is not JSON: ") + e.what());
    }
    if (!response.is_object() || !response.contains("seq") || !response["seq"].is_number_unsigned()) {
        throw ProtocolError("bridge response lacks seq");
    }
    if (response["seq"].get<std::uint64_t>() != frame.seq) {
        throw ProtocolError("bridge response seq " + response["seq"].dump() + " does not match request " +
                            std::to_string(frame.seq));
    }
    std::vector<LabelRecord> records;
    try {
        for (const auto& d : response.value("detections", json::array())) {
            LabelRecord r;
            r.class_id = d.at("class_id").get<int>();
            r.cx = d.at("cx").get<double>();
            r.cy = d.at("cy").get<double>();
            r.w = d.at("w").get<double>();
            r.h = d.at("h").get<double>();
            r.conf = d.value("conf", 1.0);
            records.push_back(r);
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("bridge detection malformed: ") + e.what());
    }
    return records_to_detections(records, frame.width, frame.height, cfg);
}

}  // namespace roadwatch
