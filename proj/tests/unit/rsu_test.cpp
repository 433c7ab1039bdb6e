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


#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "../support/testutil.h"
#include "roadwatch/channel.h"
#include "roadwatch/errors.h"
#include "roadwatch/image.h"
#include "roadwatch/rsu.h"

using namespace roadwatch;
using namespace roadwatch::test;
using namespace std::chrono_literals;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

RsuConfig loopback_config(const TempDir& dir) {
    RsuConfig cfg;
    cfg.control_port = 0;
    cfg.stream_port = 0;
    cfg.api_port = 0;
    cfg.sink = (dir / "cloud").string();
    cfg.upload_backoff = 20ms;
    cfg.reassembly_timeout = 300ms;
    return cfg;
}

Bytes gray_jpeg(int w = 640, int h = 640) { return encode_jpeg(Image(w, h, 3, 128), 75); }

// 256x160 on 640x640 is exactly rho: LARGE.
AnomalyReport report(std::uint64_t seq, std::vector<Detection> dets) {
    AnomalyReport r;
    r.frame_seq = seq;
    r.detections = std::move(dets);
    r.size_class = max_size_class(r.detections, 640, 640, SizeConfig{});
    r.timestamp_ms = 1000 + static_cast<std::int64_t>(seq);
    r.image = gray_jpeg();
    return r;
}

Detection large() { return det(AnomalyClass::D40, 100, 100, 256, 160); }
Detection small(AnomalyClass c = AnomalyClass::D00) { return det(c, 10, 10, 50, 50); }

HostPort control(const Rsu& rsu) { return {"127.0.0.1", rsu.control_port()}; }

std::size_t count_jpg(const fs::path& dir) {
    std::size_t n = 0;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            n += e.path().extension() == ".jpg" ? 1 : 0;
        }
    }
    return n;
}

// A connected vehicle that collects everything it receives.
class Listener {
public:
    Listener(const HostPort& rsu, const std::string& role = "vehicle") : channel_(ControlChannel::connect(rsu)) {
        channel_.send(Hello{role, role + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this) % 1000)});
        thread_ = std::thread([this] {
            while (!stop_) {
                try {
                    if (auto m = channel_.receive(50ms)) {
                        std::lock_guard lock(mutex_);
                        got_.push_back(std::move(*m));
                    }
                } catch (const std::exception&) {
                    return;
                }
            }
        });
    }
    ~Listener() {
        stop_ = true;
        thread_.join();
    }

    template <typename T>
    std::vector<T> of() {
        std::lock_guard lock(mutex_);
        std::vector<T> out;
        for (const auto& m : got_) {
            if (const auto* t = std::get_if<T>(&m)) {
                out.push_back(*t);
            }
        }
        return out;
    }

private:
    ControlChannel channel_;
    std::atomic<bool> stop_{false};
    std::mutex mutex_;
    std::vector<ControlMessage> got_;
    std::thread thread_;
};

void send_frame(const UdpSocket& sock, std::uint16_t port, std::uint32_t stream, std::uint32_t seq,
                const FramePayload& p, bool drop_one = false) {
    const auto target = resolve_ipv4({"127.0.0.1", port});
    auto chunks = chunk_frame(encode_frame_payload(p), stream, seq, 512);
    REQUIRE(chunks.size() >= 2);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (drop_one && i == 1) {
            continue;
        }
        REQUIRE(sock.send_to(target, encode_chunk(chunks[i])));
        std::this_thread::sleep_for(1ms);
    }
}

}  // namespace

TEST_SUITE("rsu") {
    TEST_CASE("serial executor runs tasks in order and propagates exceptions") {
        SerialExecutor ex;
        std::vector<int> seen;
        for (int i = 0; i < 100; ++i) {
            ex.post([&seen, i] { seen.push_back(i); });
        }
        CHECK(ex.call([&] { return seen.size(); }) == 100);
        for (int i = 0; i < 100; ++i) {
            REQUIRE(seen[i] == i);
        }
        CHECK_THROWS_AS(ex.call([]() -> int { throw SessionError("boom"); }), SessionError);
    }

    TEST_CASE("event hub formats server-sent events") {
        EventHub hub;
        auto sub = hub.subscribe();
        hub.publish("COUNTS", R"({"total":1})");
        CHECK(hub.subscribers() == 1);
        {
            std::lock_guard lock(sub->mutex);
            REQUIRE(sub->pending.size() == 1);
            CHECK(sub->pending.front() == "event: COUNTS\ndata: {\"total\":1}\n\n");
        }
        hub.unsubscribe(sub);
        CHECK(hub.subscribers() == 0);
    }

    TEST_CASE("config validation") {
        RsuConfig cfg;
        cfg.threshold = 0;
        CHECK_THROWS_AS(cfg.validate(), ArgumentError);
        RsuConfig m2;
        m2.mode = OperatingMode::Mode2;
        CHECK_THROWS_AS(std::make_unique<Rsu>(m2), ArgumentError);
    }

    TEST_CASE("fresh server status") {
        TempDir dir;
        Rsu rsu(loopback_config(dir));
        rsu.serve();
        const auto st = rsu.status();
        CHECK_FALSE(st.running);
        CHECK(st.counter.total() == 0);
        const auto j = json::parse(status_json(st, ClassSet::Four));
        CHECK(j["running"] == false);
        CHECK(j["total"] == 0);
        CHECK(j["counts"] == json{{"D00", 0}, {"D10", 0}, {"D20", 0}, {"D40", 0}});
        CHECK(j["skip"].is_null());
        CHECK(j["threshold"] == 10);
        CHECK(j["fired"] == false);
    }

    TEST_CASE("large report fans out to every connected vehicle") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        Listener a(control(rsu)), b(control(rsu)), c(control(rsu));
        REQUIRE(rsu.wait_vehicles(3, 5s));

        auto endnode = ControlChannel::connect(control(rsu));
        endnode.send(Hello{"endnode", "car"});
        endnode.send(report(0, {large(), small()}));
        REQUIRE(rsu.wait_reports(1, 5s));
        for (auto* l : {&a, &b, &c}) {
            REQUIRE(eventually([&] { return l->of<Warning>().size() == 1; }));
            const auto w = l->of<Warning>()[0];
            CHECK(w.text == kWarningText);
            CHECK(w.class_id == 3);
            CHECK(w.size_class == SizeClass::Large);
            CHECK(w.frame_seq == 0);
        }
        // No replay for late joiners.
        Listener late(control(rsu));
        REQUIRE(rsu.wait_vehicles(4, 5s));
        std::this_thread::sleep_for(100ms);
        CHECK(late.of<Warning>().empty());
        CHECK(rsu.status().counter.total() == 2);
        CHECK(rsu.status().warnings_sent == 1);
    }

    TEST_CASE("small report: no warning, one upload") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        Listener v(control(rsu));
        REQUIRE(rsu.wait_vehicles(1, 5s));
        rsu.submit_report("car", report(3, {small()}));
        REQUIRE(rsu.drain_uploads(5s));
        std::this_thread::sleep_for(100ms);
        CHECK(v.of<Warning>().empty());
        CHECK(count_jpg(dir / "cloud") == 1);
        CHECK(rsu.status().counter.count(AnomalyClass::D00) == 1);
    }

    TEST_CASE("general warning fires once, on the eleventh anomaly") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        Listener v(control(rsu));
        REQUIRE(rsu.wait_vehicles(1, 5s));
        for (std::uint64_t i = 0; i < 10; ++i) {
            rsu.submit_report("car", report(i, {small()}));
        }
        CHECK_FALSE(rsu.status().fired);
        rsu.submit_report("car", report(10, {small()}));
        CHECK(rsu.status().fired);
        for (std::uint64_t i = 11; i < 30; ++i) {
            rsu.submit_report("car", report(i, {small()}));
        }
        REQUIRE(eventually([&] { return v.of<GeneralWarning>().size() == 1; }));
        std::this_thread::sleep_for(100ms);
        const auto g = v.of<GeneralWarning>();
        REQUIRE(g.size() == 1);
        CHECK(g[0].count == 11);
        CHECK(g[0].threshold == 10);
        CHECK(g[0].text == "Caution: this road contains many anomalies (11 detected).");

        rsu.reset();
        CHECK_FALSE(rsu.status().fired);
        CHECK(rsu.status().counter.total() == 0);
        for (std::uint64_t i = 100; i < 111; ++i) {
            rsu.submit_report("car", report(i, {small()}));
        }
        REQUIRE(eventually([&] { return v.of<GeneralWarning>().size() == 2; }));
    }

    TEST_CASE("duplicate reports count once") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        rsu.submit_report("car", report(5, {large()}));
        rsu.submit_report("car", report(5, {large()}));
        rsu.submit_report("other", report(5, {large()}));
        REQUIRE(rsu.drain_uploads(5s));
        CHECK(rsu.status().counter.total() == 2);
        CHECK(rsu.status().warnings_sent == 2);
        CHECK(count_jpg(dir / "cloud") == 2);
    }

    TEST_CASE("malformed report is rejected and the connection kept") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        auto s = TcpStream::connect(control(rsu));
        const auto hello = encode_control(Hello{"endnode", "car"});
        s.send(hello);
        const std::string bad = R"({"type":"ANOMALY_REPORT","frame_seq":"x"})";
        Bytes frame{0, 0, 0, static_cast<std::uint8_t>(bad.size())};
        frame.insert(frame.end(), bad.begin(), bad.end());
        s.send(frame);
        s.send(encode_control(report(1, {small()})));
        REQUIRE(rsu.wait_reports(1, 5s));
        REQUIRE(eventually([&] { return rsu.status().reports_rejected == 1; }));
        CHECK(rsu.status().counter.total() == 1);
    }

    TEST_CASE("stopped server ignores reports and keeps counts") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        rsu.submit_report("car", report(1, {small()}));
        rsu.stop();
        rsu.submit_report("car", report(2, {small()}));
        const auto st = rsu.status();
        CHECK(st.counter.total() == 1);
        CHECK(st.reports_ignored == 1);
        CHECK_NOTHROW(rsu.set_mode(OperatingMode::Mode1));
        rsu.start();
        CHECK_THROWS_AS(rsu.set_mode(OperatingMode::Mode2), SessionError);
    }

    TEST_CASE("console subscribers get counts, vehicles do not") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        Listener vehicle(control(rsu));
        Listener console(control(rsu), "console");
        REQUIRE(eventually([&] { return rsu.status().consoles == 1 && rsu.status().vehicles == 1; }));
        rsu.submit_report("car", report(1, {small(AnomalyClass::D20)}));
        REQUIRE(eventually([&] {
            const auto c = console.of<CountsUpdate>();
            return !c.empty() && c.back().total == 1;
        }));
        CHECK(console.of<CountsUpdate>().back().per_class.at("D20") == 1);
        CHECK(vehicle.of<CountsUpdate>().empty());
    }

    TEST_CASE("operator API") {
        TempDir dir;
        Rsu rsu(loopback_config(dir));
        rsu.serve();
        httplib::Client api("127.0.0.1", rsu.api_port());
        api.set_read_timeout(5, 0);

        auto res = api.Get("/status");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(json::parse(res->body)["running"] == false);

        res = api.Get("/frame/latest");
        REQUIRE(res);
        CHECK(res->status == 404);

        res = api.Post("/skip", R"({"frames":30})", "application/json");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(json::parse(api.Get("/status")->body)["skip"] == 30);

        CHECK(api.Post("/skip", R"({"frames":-1})", "application/json")->status == 400);
        CHECK(api.Post("/skip", "nope", "application/json")->status == 400);
        CHECK(api.Post("/mode", R"({"mode":3})", "application/json")->status == 400);
        CHECK(api.Post("/mode", R"({"mode":"1"})", "application/json")->status == 400);

        res = api.Post("/start");
        REQUIRE(res);
        CHECK(json::parse(res->body)["running"] == true);
        res = api.Post("/mode", R"({"mode":2})", "application/json");
        REQUIRE(res);
        CHECK(res->status == 409);

        rsu.submit_report("car", report(1, {large()}));
        res = api.Get("/frame/latest");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->get_header_value("Content-Type") == "image/jpeg");
        const Bytes jpeg(res->body.begin(), res->body.end());
        const auto img = decode_jpeg(jpeg, true);
        const auto* px = img.at(img.width - kIndicatorSize / 2, kIndicatorSize / 2);
        CHECK(px[0] > 180);
        CHECK(px[1] < 80);

        const auto counts = json::parse(api.Get("/counts")->body);
        CHECK(counts["type"] == "COUNTS");
        CHECK(counts["total"] == 1);

        res = api.Post("/stop");
        CHECK(json::parse(res->body)["running"] == false);
        CHECK(json::parse(res->body)["total"] == 1);
        CHECK(api.Post("/mode", R"({"mode":1})", "application/json")->status == 200);

        res = api.Post("/reset");
        const auto after = json::parse(res->body);
        CHECK(after["total"] == 0);
        CHECK(after["skip"].is_null());
    }

    TEST_CASE("small latest frame shows a green indicator") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        rsu.submit_report("car", report(1, {small()}));
        const auto jpeg = rsu.latest_frame();
        REQUIRE(jpeg);
        const auto img = decode_jpeg(*jpeg, true);
        const auto* px = img.at(img.width - kIndicatorSize / 2, kIndicatorSize / 2);
        CHECK(px[1] > 150);
        CHECK(px[0] < 80);
    }

    TEST_CASE("event stream pushes warnings") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.autostart = true;
        Rsu rsu(cfg);
        rsu.serve();
        std::string received;
        std::mutex m;
        std::atomic<bool> done{false};
        std::thread client([&] {
            httplib::Client api("127.0.0.1", rsu.api_port());
            api.set_read_timeout(5, 0);
            api.Get("/events", [&](const char* data, std::size_t n) {
                std::lock_guard lock(m);
                received.append(data, n);
                return !done && received.find("event: WARNING") == std::string::npos;
            });
        });
        REQUIRE(eventually([&] {
            std::lock_guard lock(m);
            return received.find("event: COUNTS") != std::string::npos;
        }));
        rsu.submit_report("car", report(1, {large()}));
        const bool got = eventually([&] {
            std::lock_guard lock(m);
            return received.find("event: WARNING") != std::string::npos;
        });
        done = true;
        client.join();
        CHECK(got);
        CHECK(received.find("There is large anomaly within your range, be carefull!") != std::string::npos);
    }

    TEST_CASE("mode 2: stream metadata drives the skip and lost chunks drop the frame") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.mode = OperatingMode::Mode2;
        cfg.autostart = true;
        std::map<std::uint64_t, std::vector<LabelRecord>> labels;
        for (std::uint64_t s = 0; s < 8; ++s) {
            labels[s] = {LabelRecord{0, 0.5, 0.5, 0.1, 0.1, {}}};
        }
        Rsu rsu(cfg, ReplayDetector::from_records(labels));
        rsu.serve();
        const auto sock = UdpSocket::open();
        std::mt19937_64 rng(1);
        Image noisy(160, 160, 3, 0);
        for (auto& p : noisy.pixels) {
            p = static_cast<std::uint8_t>(rng());
        }
        FramePayload p{0, 15.0, 30.0, 640, 640, encode_jpeg(noisy, 90)};

        // 15 m/s at 30 fps: FSI 0.5, skip 5, frames 0 and 6 processed.
        for (std::uint32_t s = 0; s < 8; ++s) {
            send_frame(sock, rsu.stream_port(), 77, s, p);
        }
        REQUIRE(rsu.wait_frames(8, 5s));
        REQUIRE(eventually([&] { return rsu.status().frames_processed == 2; }));
        CHECK(rsu.status().auto_skip == 5u);
        CHECK(rsu.status().counter.total() == 2);

        rsu.set_skip(0);
        send_frame(sock, rsu.stream_port(), 78, 0, p);
        send_frame(sock, rsu.stream_port(), 78, 1, p, true);
        send_frame(sock, rsu.stream_port(), 78, 2, p);
        REQUIRE(rsu.wait_frames(10, 5s));
        REQUIRE(eventually([&] { return rsu.status().dropped_frames == 1; }));
        REQUIRE(eventually([&] { return rsu.status().frames_processed == 4; }));
        CHECK(rsu.status().counter.total() == 4);
        REQUIRE(rsu.drain_uploads(5s));
        CHECK(count_jpg(dir / "cloud") == 4);
    }

    TEST_CASE("mode 2 ignores mode 1 reports") {
        TempDir dir;
        auto cfg = loopback_config(dir);
        cfg.mode = OperatingMode::Mode2;
        cfg.autostart = true;
        Rsu rsu(cfg, ReplayDetector::from_records({}));
        rsu.serve();
        rsu.submit_report("car", report(1, {small()}));
        CHECK(rsu.status().reports_ignored == 1);
        CHECK(rsu.status().counter.total() == 0);
    }

    TEST_CASE("shutdown is idempotent and closes clients") {
        TempDir dir;
        Rsu rsu(loopback_config(dir));
        rsu.serve();
        auto ch = ControlChannel::connect(control(rsu));
        ch.send(Hello{"vehicle", "v"});
        REQUIRE(rsu.wait_vehicles(1, 5s));
        rsu.shutdown();
        rsu.shutdown();
        CHECK_THROWS_AS(ch.receive(2s), NetworkError);
    }
}
