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

#include "roadwatch/cloudsink.h"

#include <algorithm>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "roadwatch/errors.h"
#include "roadwatch/log.h"

namespace roadwatch {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

UploadRecord make_upload_record(std::string node_id, int mode, std::uint64_t frame_seq, std::int64_t timestamp_ms,
                                std::span<const Detection> detections, SizeClass size_class, Bytes image) {
    UploadRecord r;
    r.node_id = std::move(node_id);
    r.mode = mode;
    r.frame_seq = frame_seq;
    r.timestamp_ms = timestamp_ms;
    std::set<int> ids;
    for (const auto& d : detections) {
        ids.insert(class_id(d.cls));
    }
    r.classes.assign(ids.begin(), ids.end());
    r.size_class = size_class;
    r.image = std::move(image);
    return r;
}

std::string object_stem(const UploadRecord& record) {
    std::string classes;
    for (int id : record.classes) {
        if (!classes.empty()) {
            classes += '-';
        }
        const auto cls = class_from_id(id);
        classes += cls ? std::string(class_name(*cls)) : std::to_string(id);
    }
    if (classes.empty()) {
        classes = "none";
    }
    return std::to_string(record.timestamp_ms) + "_" + std::to_string(record.frame_seq) + "_" + classes + "_" +
           std::string(size_class_name(record.size_class));
}

std::string receipt_for(const UploadRecord& record) {
    return "rw-" + record.node_id + "-" + std::to_string(record.frame_seq);
}

std::string sidecar_json(const UploadRecord& record) {
    return ojson{{"timestamp_ms", record.timestamp_ms},
                 {"frame_seq", record.frame_seq},
                 {"node_id", record.node_id},
                 {"classes", record.classes},
                 {"size_class", size_class_name(record.size_class)},
                 {"mode", record.mode}}
        .dump();
}

UploadRecord parse_sidecar(std::string_view text) {
    try {
        const auto j = ojson::parse(text);
        UploadRecord r;
        r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        r.frame_seq = j.at("frame_seq").get<std::uint64_t>();
        r.node_id = j.at("node_id").get<std::string>();
        r.classes = j.at("classes").get<std::vector<int>>();
        const auto size = size_class_from_name(j.at("size_class").get<std::string>());
        if (!size) {
            throw ParseError("sidecar size_class invalid");
        }
        r.size_class = *size;
        r.mode = j.at("mode").get<int>();
        r.receipt = receipt_for(r);
        return r;
    } catch (const ojson::exception& e) {
        throw ParseError(std::string("sidecar malformed: ") + e.what());
    }
}

DirectorySink::DirectorySink(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) {
        return;
    }
    for (const auto& entry : fs::directory_iterator(root_, ec)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") {
            continue;
        }
        try {
            const auto bytes = read_file(entry.path());
            const auto r = parse_sidecar(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
            index_.emplace(r.key(), r.receipt);
            stems_.insert(entry.path().stem().string());
        } catch (const std::exception& e) {
            spdlog::warn("sink: ignoring unreadable sidecar {}: {}", entry.path().string(), e.what());
        }
    }
}

std::string DirectorySink::upload(const UploadRecord& record) {
    if (record.image.empty()) {
        throw UploadError("refusing to store an empty image");
    }
    std::lock_guard lock(mutex_);
    if (const auto it = index_.find(record.key()); it != index_.end()) {
        return it->second;
    }
    auto stem = object_stem(record);
    try {
        fs::create_directories(root_);
        for (int n = 2; stems_.contains(stem) || fs::exists(root_ / (stem + ".json")); ++n) {
            stem = object_stem(record) + "_" + std::to_string(n);
        }
        write_file_atomic(root_ / (stem + ".jpg"), record.image);
        // The sidecar lands last, so a present sidecar implies a complete object.
        write_file_atomic(root_ / (stem + ".json"), sidecar_json(record));
    } catch (const std::exception& e) {
        throw UploadError("directory sink " + root_.string() + ": " + e.what());
    }
    auto receipt = receipt_for(record);
    index_.emplace(record.key(), receipt);
    stems_.insert(stem);
    return receipt;
}

HttpSink::HttpSink(std::string url, std::chrono::milliseconds timeout) : url_(std::move(url)), timeout_(timeout) {
    const auto scheme_end = url_.find("://");
    if (scheme_end == std::string::npos || url_.substr(0, scheme_end) != "http") {
        throw ArgumentError("http sink needs an http:// URL, got '" + url_ + "'");
    }
    const auto path_start = url_.find('/', scheme_end + 3);
    base_ = url_.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
}

std::string HttpSink::upload(const UploadRecord& record) {
    if (record.image.empty()) {
        throw UploadError("refusing to upload an empty image");
    }
    std::lock_guard lock(mutex_);
    if (const auto it = index_.find(record.key()); it != index_.end()) {
        return it->second;
    }
    httplib::Client client(base_);
    const auto secs = timeout_.count() / 1000;
    const auto usecs = (timeout_.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const auto stem = object_stem(record);
    httplib::MultipartFormDataItems items = {
        {"image", std::string(record.image.begin(), record.image.end()), stem + ".jpg", "image/jpeg"},
        {"metadata", sidecar_json(record), stem + ".json", "application/json"},
    };
    const auto res = client.Post(path_, items);
    if (!res) {
        throw UploadError("http sink " + url_ + ": " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw UploadError("http sink " + url_ + ": status " + std::to_string(res->status));
    }
    std::string receipt = receipt_for(record);
    try {
        const auto body = ojson::parse(res->body);
        if (body.is_object() && body.contains("receipt") && body["receipt"].is_string()) {
            receipt = body["receipt"].get<std::string>();
        }
    } catch (const ojson::exception&) {
    }
    index_.emplace(record.key(), receipt);
    return receipt;
}

std::unique_ptr<CloudSink> make_sink(const std::string& spec) {
    if (spec.starts_with("http://") || spec.starts_with("https://")) {
        return std::make_unique<HttpSink>(spec);
    }
    return std::make_unique<DirectorySink>(spec);
}

StorageReport storage_report(const fs::path& root) {
    StorageReport report;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        return report;
    }
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") {
            continue;
        }
        auto image = entry.path();
        image.replace_extension(".jpg");
        if (!fs::exists(image)) {
            continue;
        }
        UploadRecord r;
        try {
            const auto bytes = read_file(entry.path());
            r = parse_sidecar(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        } catch (const std::exception&) {
            continue;
        }
        const auto size = fs::file_size(image) + entry.file_size();
        ++report.objects;
        report.total_bytes += size;
        report.bytes_by_size[std::string(size_class_name(r.size_class))] += size;
        report.bytes_by_mode[std::to_string(r.mode)] += size;
    }
    return report;
}

UploadQueue::UploadQueue(std::unique_ptr<CloudSink> sink, Options options)
    : sink_(std::move(sink)), options_(std::move(options)) {
    worker_ = std::thread([this] { run(); });
}

UploadQueue::~UploadQueue() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void UploadQueue::enqueue(UploadRecord record) {
    {
        std::lock_guard lock(mutex_);
        if (queue_.size() >= options_.capacity) {
            const auto& oldest = queue_.front();
            spdlog::warn("upload queue full ({}), dropping oldest record {}/{}", options_.capacity, oldest.node_id,
                         oldest.frame_seq);
            queue_.pop_front();
            ++stats_.overflow_dropped;
        }
        queue_.push_back(std::move(record));
        ++stats_.enqueued;
    }
    cv_.notify_all();
}

bool UploadQueue::drain(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty() && !in_flight_; });
}

std::size_t UploadQueue::depth() const {
    std::lock_guard lock(mutex_);
    return queue_.size() + (in_flight_ ? 1 : 0);
}

UploadQueue::Stats UploadQueue::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

std::map<std::pair<std::string, std::uint64_t>, std::string> UploadQueue::receipts() const {
    std::lock_guard lock(mutex_);
    return receipts_;
}

void UploadQueue::run() {
    std::unique_lock lock(mutex_);
    for (;;) {
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (stopping_) {
            return;
        }
        UploadRecord record = std::move(queue_.front());
        queue_.pop_front();
        in_flight_ = true;

        bool done = false;
        for (int attempt = 0; attempt <= options_.max_retries && !done; ++attempt) {
            if (attempt > 0) {
                if (cv_.wait_for(lock, options_.backoff, [this] { return stopping_; })) {
                    break;
                }
            }
            lock.unlock();
            std::string receipt;
            std::string error;
            try {
                receipt = sink_->upload(record);
                done = true;
            } catch (const std::exception& e) {
                error = e.what();
            }
            lock.lock();
            if (done) {
                ++stats_.uploaded;
                receipts_.emplace(record.key(), std::move(receipt));
            } else {
                ++stats_.failed_attempts;
                spdlog::warn("upload of {}/{} failed (attempt {}): {}", record.node_id, record.frame_seq, attempt + 1,
                             error);
            }
        }
        if (!done) {
            lock.unlock();
            dead_letter(record);
            lock.lock();
            ++stats_.dead_lettered;
        }
        in_flight_ = false;
        if (queue_.empty()) {
            idle_cv_.notify_all();
        }
    }
}

void UploadQueue::dead_letter(const UploadRecord& record) {
    try {
        fs::create_directories(options_.dead_letter_dir);
        const auto stem = object_stem(record);
        write_file_atomic(options_.dead_letter_dir / (stem + ".jpg"), record.image);
        write_file_atomic(options_.dead_letter_dir / (stem + ".json"), sidecar_json(record));
        spdlog::error("upload of {}/{} dead-lettered to {}", record.node_id, record.frame_seq,
                      options_.dead_letter_dir.string());
    } catch (const std::exception& e) {
        spdlog::error("upload of {}/{} lost: dead-letter write failed: {}", record.node_id, record.frame_seq, e.what());
    }
}

}  // namespace roadwatch
