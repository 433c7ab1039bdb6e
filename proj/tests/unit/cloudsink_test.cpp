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
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "../support/testutil.h"
#include "roadwatch/cloudsink.h"
#include "roadwatch/errors.h"

using namespace roadwatch;
using namespace roadwatch::test;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

UploadRecord record(std::string node, std::uint64_t seq, std::size_t image_bytes = 100,
                    SizeClass size = SizeClass::Small, int mode = 1) {
    const std::vector<Detection> dets{det(AnomalyClass::D40, 0, 0, 10, 10), det(AnomalyClass::D00, 0, 0, 5, 5),
                                      det(AnomalyClass::D40, 5, 5, 10, 10)};
    return make_upload_record(std::move(node), mode, seq, 1700000000000 + static_cast<std::int64_t>(seq), dets, size,
                              Bytes(image_bytes, 0xAB));
}

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
    std::size_t n = 0;
    if (!fs::is_directory(dir)) {
        return 0;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        n += e.is_regular_file() && e.path().extension() == ext ? 1 : 0;
    }
    return n;
}

// Fails the first `failures` uploads, then delegates.
class FlakySink : public CloudSink {
public:
    FlakySink(std::unique_ptr<CloudSink> inner, int failures) : inner_(std::move(inner)), failures_(failures) {}

    std::string upload(const UploadRecord& r) override {
        ++calls;
        if (failures_-- > 0) {
            throw UploadError("injected transient failure");
        }
        return inner_->upload(r);
    }
    std::string describe() const override { return "flaky"; }

    std::atomic<int> calls{0};

private:
    std::unique_ptr<CloudSink> inner_;
    std::atomic<int> failures_;
};

class BrokenSink : public CloudSink {
public:
    std::string upload(const UploadRecord&) override { throw UploadError("sink unwritable"); }
    std::string describe() const override { return "broken"; }
};

UploadQueue::Options fast_options(const fs::path& dead) {
    UploadQueue::Options o;
    o.backoff = 10ms;
    o.dead_letter_dir = dead;
    return o;
}

}  // namespace

TEST_SUITE("cloudsink") {
    TEST_CASE("record naming") {
        const auto r = record("car", 17, 10, SizeClass::Large);
        CHECK(r.classes == std::vector{0, 3});
        CHECK(object_stem(r) == "1700000000017_17_D00-D40_large");
        CHECK(receipt_for(r) == "rw-car-17");
        auto none = r;
        none.classes.clear();
        CHECK(object_stem(none) == "1700000000017_17_none_large");
    }

    TEST_CASE("sidecar layout and round trip") {
        const auto r = record("car", 17, 10, SizeClass::Large, 2);
        CHECK(sidecar_json(r) ==
              R"({"timestamp_ms":1700000000017,"frame_seq":17,"node_id":"car","classes":[0,3],"size_class":"large","mode":2})");
        const auto back = parse_sidecar(sidecar_json(r));
        CHECK(back.timestamp_ms == r.timestamp_ms);
        CHECK(back.frame_seq == r.frame_seq);
        CHECK(back.node_id == r.node_id);
        CHECK(back.classes == r.classes);
        CHECK(back.size_class == r.size_class);
        CHECK(back.mode == r.mode);
        CHECK(back.receipt == "rw-car-17");
        CHECK_THROWS_AS(parse_sidecar("{}"), ParseError);
        CHECK_THROWS_AS(parse_sidecar("nope"), ParseError);
    }

    TEST_CASE("directory sink writes one pair per record") {
        TempDir dir;
        DirectorySink sink(dir.path());
        const auto r = record("car", 17);
        const auto receipt = sink.upload(r);
        CHECK(fs::exists(dir / (object_stem(r) + ".jpg")));
        CHECK(fs::exists(dir / (object_stem(r) + ".json")));
        CHECK(sink.upload(r) == receipt);
        CHECK(count_ext(dir.path(), ".jpg") == 1);
        CHECK(count_ext(dir.path(), ".json") == 1);
        // A restarted sink remembers what is already stored.
        DirectorySink again(dir.path());
        CHECK(again.upload(r) == receipt);
        CHECK(count_ext(dir.path(), ".jpg") == 1);
        CHECK_THROWS_AS(sink.upload(record("car", 18, 0)), UploadError);
    }

    TEST_CASE("same stem from two nodes keeps both objects") {
        TempDir dir;
        DirectorySink sink(dir.path());
        const auto a = record("a", 3);
        const auto b = record("b", 3);
        REQUIRE(object_stem(a) == object_stem(b));
        const auto ra = sink.upload(a);
        const auto rb = sink.upload(b);
        CHECK(ra != rb);
        CHECK(fs::exists(dir / (object_stem(a) + ".jpg")));
        CHECK(fs::exists(dir / (object_stem(a) + "_2.jpg")));
        const auto side = read_file(dir / (object_stem(a) + "_2.json"));
        CHECK(parse_sidecar(std::string(side.begin(), side.end())).node_id == "b");
        CHECK(storage_report(dir.path()).objects == 2);
        DirectorySink again(dir.path());
        again.upload(record("c", 3));
        CHECK(fs::exists(dir / (object_stem(a) + "_3.jpg")));
    }

    TEST_CASE("directory sink on a path that is a file") {
        TempDir dir;
        std::ofstream(dir / "blocker") << "x";
        DirectorySink sink(dir / "blocker");
        CHECK_THROWS_AS(sink.upload(record("car", 1)), UploadError);
    }

    TEST_CASE("storage report") {
        TempDir dir;
        CHECK(storage_report(dir.path()).objects == 0);
        CHECK(storage_report(dir.path()).total_bytes == 0);
        DirectorySink sink(dir.path());
        sink.upload(record("a", 1, 10000, SizeClass::Large));
        sink.upload(record("a", 2, 20000, SizeClass::Large, 2));
        fs::create_directories(dir / "failed");
        std::ofstream(dir / "failed" / "x.json") << "{}";
        const auto rep = storage_report(dir.path());
        CHECK(rep.objects == 2);
        CHECK(rep.total_bytes >= 30000);
        CHECK(rep.bytes_by_size.at("small") == 0);
        CHECK(rep.bytes_by_size.at("large") == rep.total_bytes);
        CHECK(rep.bytes_by_mode.at("1") + rep.bytes_by_mode.at("2") == rep.total_bytes);
        CHECK(rep.bytes_by_mode.at("1") >= 10000);
    }

    TEST_CASE("queue: duplicates and a transient failure store each key once") {
        TempDir dir;
        auto flaky = std::make_unique<FlakySink>(std::make_unique<DirectorySink>(dir / "cloud"), 1);
        auto* flaky_raw = flaky.get();
        UploadQueue q(std::move(flaky), fast_options(dir / "dead"));
        std::set<std::pair<std::string, std::uint64_t>> keys;
        for (std::uint64_t i = 0; i < 30; ++i) {
            const std::string node = i % 2 ? "a" : "b";
            q.enqueue(record(node, i % 12));
            keys.emplace(node, i % 12);
        }
        REQUIRE(q.drain(10s));
        CHECK(count_ext(dir / "cloud", ".jpg") == keys.size());
        CHECK(count_ext(dir / "cloud", ".json") == keys.size());
        CHECK(count_ext(dir / "dead", ".jpg") == 0);
        const auto st = q.stats();
        CHECK(st.failed_attempts == 1);
        CHECK(st.uploaded == 30);
        CHECK(st.dead_lettered == 0);
        CHECK(flaky_raw->calls == 31);
        CHECK(q.receipts().size() == keys.size());
    }

    TEST_CASE("queue: persistent failure dead-letters after the retries") {
        TempDir dir;
        UploadQueue q(std::make_unique<BrokenSink>(), fast_options(dir / "failed"));
        const auto r = record("car", 5);
        q.enqueue(r);
        REQUIRE(q.drain(5s));
        const auto st = q.stats();
        CHECK(st.failed_attempts == 4);
        CHECK(st.dead_lettered == 1);
        CHECK(fs::exists(dir / "failed" / (object_stem(r) + ".jpg")));
        CHECK(fs::exists(dir / "failed" / (object_stem(r) + ".json")));
    }

    TEST_CASE("queue: unwritable directory sink dead-letters") {
        TempDir dir;
        std::ofstream(dir / "cloud") << "not a directory";
        UploadQueue q(make_sink((dir / "cloud").string()), fast_options(dir / "failed"));
        q.enqueue(record("car", 1));
        REQUIRE(q.drain(5s));
        CHECK(q.stats().dead_lettered == 1);
        CHECK(count_ext(dir / "failed", ".jpg") == 1);
    }

    TEST_CASE("queue: overflow drops the oldest") {
        TempDir dir;
        auto o = fast_options(dir / "dead");
        o.capacity = 2;
        // The sink blocks until released so the queue fills up.
        struct GateSink : CloudSink {
            std::atomic<bool> open{false};
            std::atomic<bool> entered{false};
            std::vector<std::uint64_t> seen;
            std::string upload(const UploadRecord& r) override {
                entered = true;
                while (!open) {
                    std::this_thread::sleep_for(1ms);
                }
                seen.push_back(r.frame_seq);
                return receipt_for(r);
            }
            std::string describe() const override { return "gate"; }
        };
        auto gate = std::make_unique<GateSink>();
        auto* g = gate.get();
        UploadQueue q(std::move(gate), o);
        q.enqueue(record("n", 0));
        REQUIRE(eventually([&] { return g->entered.load(); }));
        for (std::uint64_t i = 1; i <= 4; ++i) {
            q.enqueue(record("n", i));
        }
        CHECK(q.depth() == 3);
        g->open = true;
        REQUIRE(q.drain(5s));
        CHECK(q.stats().overflow_dropped == 2);
        CHECK(g->seen == std::vector<std::uint64_t>{0, 3, 4});
    }

    TEST_CASE("http sink posts multipart and dedups") {
        httplib::Server server;
        std::atomic<int> posts{0};
        std::string last_meta;
        std::size_t last_image = 0;
        server.Post("/upload", [&](const httplib::Request& req, httplib::Response& res) {
            if (posts++ == 0) {
                res.status = 503;
                return;
            }
            last_meta = req.get_file_value("metadata").content;
            last_image = req.get_file_value("image").content.size();
            res.set_content(R"({"receipt":"srv-1"})", "application/json");
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread t([&] { server.listen_after_bind(); });
        server.wait_until_ready();

        HttpSink sink("http://127.0.0.1:" + std::to_string(port) + "/upload", 2s);
        const auto r = record("car", 9, 321);
        CHECK_THROWS_AS(sink.upload(r), UploadError);
        CHECK(sink.upload(r) == "srv-1");
        CHECK(sink.upload(r) == "srv-1");
        CHECK(posts == 2);
        CHECK(last_image == 321);
        CHECK(parse_sidecar(last_meta).frame_seq == 9);
        server.stop();
        t.join();
    }

    TEST_CASE("http sink: unreachable server") {
        HttpSink sink("http://127.0.0.1:1/upload", 500ms);
        CHECK_THROWS_AS(sink.upload(record("car", 1)), UploadError);
        CHECK(make_sink("http://127.0.0.1:1/x")->describe().rfind("http(", 0) == 0);
        CHECK(make_sink("some/dir")->describe().rfind("dir(", 0) == 0);
    }
}
