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

// Operator HTTP API. JSON in and out; /events is a server-sent event stream.

#include "rsu_api.h"

#include <json.hpp>

#include "roadwatch/errors.h"
#include "roadwatch/log.h"

namespace roadwatch {

using namespace std::chrono_literals;

namespace {

void json_reply(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
}

void error_reply(httplib::Response& res, int status, const std::string& message) {
    json_reply(res, status, nlohmann::json{{"error", message}}.dump());
}

// Parses a JSON object body, or replies 400 and returns nullopt.
std::optional<nlohmann::json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto j = nlohmann::json::parse(req.body);
        if (!j.is_object()) {
            error_reply(res, 400, "body must be a JSON object");
            return std::nullopt;
        }
        return j;
    } catch (const nlohmann::json::exception& e) {
        error_reply(res, 400, std::string("malformed JSON: ") + e.what());
        return std::nullopt;
    }
}

}  // namespace

void Rsu::start_api() {
    api_ = std::make_unique<Api>();
    auto& srv = api_->server;
    const auto set = config_.detector.class_set;

    srv.Get("/status", [this, set](const httplib::Request&, httplib::Response& res) {
        json_reply(res, 200, status_json(status(), set));
    });
    srv.Get("/counts", [this](const httplib::Request&, httplib::Response& res) {
        json_reply(res, 200, encode_control_body(make_counts_update(status().counter)));
    });
    srv.Post("/start", [this, set](const httplib::Request&, httplib::Response& res) {
        start();
        json_reply(res, 200, status_json(status(), set));
    });
    srv.Post("/stop", [this, set](const httplib::Request&, httplib::Response& res) {
        stop();
        json_reply(res, 200, status_json(status(), set));
    });
    srv.Post("/mode", [this, set](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (!body) {
            return;
        }
        const auto it = body->find("mode");
        if (it == body->end() || !it->is_number_integer()) {
            error_reply(res, 400, "expected {\"mode\": 1|2}");
            return;
        }
        try {
            set_mode(mode_from_number(it->get<int>()));
        } catch (const SessionError& e) {
            error_reply(res, 409, e.what());
            return;
        } catch (const ArgumentError& e) {
            error_reply(res, 400, e.what());
            return;
        }
        json_reply(res, 200, status_json(status(), set));
    });
    srv.Post("/skip", [this, set](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (!body) {
            return;
        }
        const auto it = body->find("frames");
        if (it == body->end() || !it->is_number_unsigned() || it->get<std::uint64_t>() > 1'000'000) {
            error_reply(res, 400, "expected {\"frames\": n} with 0 <= n <= 1000000");
            return;
        }
        set_skip(it->get<std::uint32_t>());
        json_reply(res, 200, status_json(status(), set));
    });
    srv.Post("/reset", [this, set](const httplib::Request&, httplib::Response& res) {
        reset();
        json_reply(res, 200, status_json(status(), set));
    });
    srv.Get("/frame/latest", [this](const httplib::Request&, httplib::Response& res) {
        const auto jpeg = latest_frame();
        if (!jpeg) {
            error_reply(res, 404, "no frame processed yet");
            return;
        }
        res.set_header("Cache-Control", "no-store");
        res.set_content(std::string(jpeg->begin(), jpeg->end()), "image/jpeg");
    });
    srv.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
        auto sub = events_.subscribe();
        {
            // Fresh subscribers start from the current counters.
            const auto counts = encode_control_body(make_counts_update(status().counter));
            std::lock_guard lock(sub->mutex);
            sub->pending.push_back("event: COUNTS\ndata: " + counts + "\n\n");
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [sub](std::size_t, httplib::DataSink& sink) {
                std::unique_lock lock(sub->mutex);
                sub->cv.wait_for(lock, 1s, [&] { return sub->closed || !sub->pending.empty(); });
                if (sub->closed) {
                    return false;
                }
                std::deque<std::string> batch;
                batch.swap(sub->pending);
                lock.unlock();
                if (batch.empty()) {
                    batch.emplace_back(": keepalive\n\n");
                }
                for (const auto& frame : batch) {
                    if (!sink.write(frame.data(), frame.size())) {
                        return false;
                    }
                }
                return true;
            },
            [this, sub](bool) { events_.unsubscribe(sub); });
    });
    if (config_.static_dir) {
        if (!srv.set_mount_point("/", config_.static_dir->string())) {
            spdlog::warn("static directory {} not found; console not served", config_.static_dir->string());
        }
    }
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            error_reply(res, 500, e.what());
        } catch (...) {
            error_reply(res, 500, "unknown error");
        }
    });

    if (config_.api_port == 0) {
        const int port = srv.bind_to_any_port(config_.bind_host);
        if (port <= 0) {
            throw NetworkError("cannot bind operator API on " + config_.bind_host);
        }
        api_port_ = static_cast<std::uint16_t>(port);
    } else {
        if (!srv.bind_to_port(config_.bind_host, config_.api_port)) {
            throw NetworkError("cannot bind operator API on " + config_.bind_host + ":" +
                               std::to_string(config_.api_port));
        }
        api_port_ = config_.api_port;
    }
    api_->thread = std::thread([this] { api_->server.listen_after_bind(); });
}

void Rsu::stop_api() {
    if (!api_) {
        return;
    }
    events_.close_all();
    api_->server.stop();
    if (api_->thread.joinable()) {
        api_->thread.join();
    }
    api_.reset();
}

}  // namespace roadwatch
