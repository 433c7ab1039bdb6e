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

// Anomaly evidence persistence. A sink stores one object per (node_id,
// frame_seq); repeated submissions return the first receipt. The upload
// queue drains records into a sink on its own worker, retrying transient
// failures and dead-lettering records that keep failing.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "roadwatch/bytes.h"
#include "roadwatch/core.h"

namespace roadwatch {

struct UploadRecord {
    std::uint64_t frame_seq = 0;
    std::int64_t timestamp_ms = 0;
    std::vector<int> classes;  // distinct class ids, ascending
    SizeClass size_class = SizeClass::Small;
    Bytes image;
    std::string node_id;
    int mode = 1;
    std::string receipt;  // filled in by the sink

    std::pair<std::string, std::uint64_t> key() const { return {node_id, frame_seq}; }
};

// Builds a record from a frame's detections (classes de-duplicated/sorted).
UploadRecord make_upload_record(std::string node_id, int mode, std::uint64_t frame_seq, std::int64_t timestamp_ms,
                                std::span<const Detection> detections, SizeClass size_class, Bytes image);

// `{timestamp_ms}_{frame_seq}_{classlist}_{size}`, classlist being class
// names joined with '-'.
std::string object_stem(const UploadRecord& record);
std::string receipt_for(const UploadRecord& record);

// Sidecar JSON: {timestamp_ms, frame_seq, node_id, classes, size_class, mode}.
std::string sidecar_json(const UploadRecord& record);
// Metadata only; image stays empty. Throws ParseError.
UploadRecord parse_sidecar(std::string_view text);

struct StorageReport {
    std::uint64_t objects = 0;
    std::uint64_t total_bytes = 0;
    std::map<std::string, std::uint64_t> bytes_by_size{{"large", 0}, {"small", 0}};
    std::map<std::string, std::uint64_t> bytes_by_mode{{"1", 0}, {"2", 0}};
};

class CloudSink {
public:
    virtual ~CloudSink() = default;
    // Returns the receipt; throws UploadError.
    virtual std::string upload(const UploadRecord& record) = 0;
    virtual std::string describe() const = 0;
};

// Objects are named by object_stem(); a stem already taken by another
// (node_id, frame_seq) gets a "_2", "_3", ... suffix.
class DirectorySink final : public CloudSink {
public:
    explicit DirectorySink(std::filesystem::path root);

    std::string upload(const UploadRecord& record) override;
    std::string describe() const override { return "dir(" + root_.string() + ")"; }
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::map<std::pair<std::string, std::uint64_t>, std::string> index_;
    std::set<std::string> stems_;
    std::mutex mutex_;
};

// POSTs multipart/form-data with an "image" part and a "metadata" part.
class HttpSink final : public CloudSink {
public:
    explicit HttpSink(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(10));

    std::string upload(const UploadRecord& record) override;
    std::string describe() const override { return "http(" + url_ + ")"; }

private:
    std::string url_;
    std::string base_;
    std::string path_;
    std::chrono::milliseconds timeout_;
    std::map<std::pair<std::string, std::uint64_t>, std::string> index_;
    std::mutex mutex_;
};

// "http://..." -> HttpSink, anything else is a directory.
std::unique_ptr<CloudSink> make_sink(const std::string& spec);

// Scans the top level of a directory sink; subdirectories (failed/) are
// not counted.
StorageReport storage_report(const std::filesystem::path& root);

class UploadQueue {
public:
    struct Options {
        std::size_t capacity = 1024;
        int max_retries = 3;
        std::chrono::milliseconds backoff{1000};
        std::filesystem::path dead_letter_dir = "failed";
    };

    struct Stats {
        std::uint64_t enqueued = 0;
        std::uint64_t uploaded = 0;
        std::uint64_t failed_attempts = 0;
        std::uint64_t dead_lettered = 0;
        std::uint64_t overflow_dropped = 0;
    };

    UploadQueue(std::unique_ptr<CloudSink> sink, Options options);
    ~UploadQueue();
    UploadQueue(const UploadQueue&) = delete;
    UploadQueue& operator=(const UploadQueue&) = delete;

    void enqueue(UploadRecord record);
    // Waits until nothing is queued or in flight.
    bool drain(std::chrono::milliseconds timeout);
    std::size_t depth() const;
    Stats stats() const;
    // Receipts by (node_id, frame_seq) for records that reached the sink.
    std::map<std::pair<std::string, std::uint64_t>, std::string> receipts() const;

private:
    void run();
    void dead_letter(const UploadRecord& record);

    std::unique_ptr<CloudSink> sink_;
    Options options_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<UploadRecord> queue_;
    bool in_flight_ = false;
    bool stopping_ = false;
    Stats stats_;
    std::map<std::pair<std::string, std::uint64_t>, std::string> receipts_;
    std::thread worker_;
};

}  // namespace roadwatch
