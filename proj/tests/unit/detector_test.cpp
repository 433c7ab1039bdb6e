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

#include <fstream>
#include <random>

#include "../support/testutil.h"
#include "roadwatch/detector.h"
#include "roadwatch/errors.h"

using namespace roadwatch;
using roadwatch::test::TempDir;

namespace {

Frame frame(std::uint64_t seq, int w = 640, int h = 640) {
    Frame f;
    f.seq = seq;
    f.width = w;
    f.height = h;
    return f;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

std::string bridge(const std::string& args) { return std::string("exec:") + ROADWATCH_BRIDGE_STUB + " " + args; }

}  // namespace

TEST_SUITE("detector") {
    TEST_CASE("label line parsing") {
        const auto r = parse_label_line("3 0.5 0.5 0.4 0.25");
        CHECK(r.class_id == 3);
        CHECK(r.w == 0.4);
        CHECK_FALSE(r.conf.has_value());
        CHECK(parse_label_line("1 0.1 0.2 0.3 0.4 0.75").conf == 0.75);
        CHECK_THROWS_AS(parse_label_line("1 0.1 0.2 0.3"), ParseError);
        CHECK_THROWS_AS(parse_label_line("x 0.1 0.2 0.3 0.4"), ParseError);
        CHECK_THROWS_AS(parse_label_line("1 0.1 0.2 1.3 0.4"), ParseError);
        CHECK_THROWS_AS(parse_label_line("1 nan 0.2 0.3 0.4"), ParseError);
        CHECK(parse_label_line(format_label_line(r)) == r);
    }

    TEST_CASE("a centered 0.4 x 0.25 label is a 256 x 160 box") {
        const auto b = denormalize(parse_label_line("3 0.5 0.5 0.4 0.25"), 640, 640);
        CHECK(b == BoundingBox{192, 240, 256, 160});
    }

    TEST_CASE("denormalize clamps into the frame") {
        const auto b = denormalize(LabelRecord{0, 0.99, 0.01, 0.2, 0.2, {}}, 100, 100);
        CHECK(b.x + b.length <= 100);
        CHECK(b.y >= 0);
        CHECK(b.length == 20);
        CHECK_THROWS_AS(denormalize(LabelRecord{}, 0, 10), ArgumentError);
    }

    TEST_CASE("normalize(denormalize(r)) is within half a pixel") {
        std::mt19937_64 rng(11);
        std::uniform_int_distribution<int> dim(16, 2000);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 5000; ++i) {
            const int fw = dim(rng);
            const int fh = dim(rng);
            LabelRecord r;
            r.w = std::max(1.0 / fw, u(rng));
            r.h = std::max(1.0 / fh, u(rng));
            r.cx = r.w / 2 + u(rng) * (1.0 - r.w);
            r.cy = r.h / 2 + u(rng) * (1.0 - r.h);
            const auto back = normalize(denormalize(r, fw, fh), fw, fh);
            REQUIRE(std::abs(back.cx - r.cx) * fw <= 0.5 + 1e-9);
            REQUIRE(std::abs(back.cy - r.cy) * fh <= 0.5 + 1e-9);
            REQUIRE(std::abs(back.w - r.w) * fw <= 0.5 + 1e-9);
            REQUIRE(std::abs(back.h - r.h) * fh <= 0.5 + 1e-9);
        }
    }

    TEST_CASE("replay looks up {seq}.txt") {
        TempDir dir;
        write_text(dir / "0.txt", "3 0.5 0.5 0.4 0.25\n");
        auto d = ReplayDetector::load(dir.path(), ClassSet::Four);
        const auto dets = d->detect(frame(0), {});
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].cls == AnomalyClass::D40);
        CHECK(dets[0].box == BoundingBox{192, 240, 256, 160});
        CHECK(dets[0].confidence == 1.0);
        CHECK(d->detect(frame(1), {}).empty());
    }

    TEST_CASE("empty label directory yields nothing") {
        TempDir dir;
        auto d = ReplayDetector::load(dir.path(), ClassSet::Four);
        for (std::uint64_t s = 0; s < 20; ++s) {
            CHECK(d->detect(frame(s), {}).empty());
        }
        CHECK_THROWS_AS(ReplayDetector::load(dir / "missing", ClassSet::Four), ArgumentError);
    }

    TEST_CASE("class outside the set is a parse error naming file and line") {
        TempDir dir;
        write_text(dir / "4.txt", "0 0.5 0.5 0.1 0.1\n9 0.5 0.5 0.1 0.1\n");
        try {
            ReplayDetector::load(dir.path(), ClassSet::Four);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            const std::string what = e.what();
            CHECK(what.find("4.txt:2") != std::string::npos);
        }
        write_text(dir / "4.txt", "5 0.5 0.5 0.1 0.1\n");
        CHECK_THROWS_AS(ReplayDetector::load(dir.path(), ClassSet::Four), ParseError);
        CHECK_NOTHROW(ReplayDetector::load(dir.path(), ClassSet::Eight));
    }

    TEST_CASE("confidence threshold") {
        auto d = ReplayDetector::from_records({{0, {LabelRecord{1, 0.5, 0.5, 0.1, 0.1, 0.99}}}});
        CHECK(d->detect(frame(0), {1.0, ClassSet::Four}).empty());
        CHECK(d->detect(frame(0), {0.99, ClassSet::Four}).size() == 1);
    }

    TEST_CASE("raising the threshold only removes detections") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<int> cls(0, 3);
        for (int trial = 0; trial < 300; ++trial) {
            std::vector<LabelRecord> recs;
            for (int i = 0; i < 8; ++i) {
                recs.push_back(LabelRecord{cls(rng), u(rng), u(rng), 0.01 + 0.5 * u(rng), 0.01 + 0.5 * u(rng), u(rng)});
            }
            double t1 = u(rng);
            double t2 = u(rng);
            if (t1 > t2) {
                std::swap(t1, t2);
            }
            const auto lo = records_to_detections(recs, 640, 480, {t1, ClassSet::Four});
            const auto hi = records_to_detections(recs, 640, 480, {t2, ClassSet::Four});
            for (const auto& d : hi) {
                REQUIRE(std::find(lo.begin(), lo.end(), d) != lo.end());
                REQUIRE(d.confidence >= t2);
            }
        }
    }

    TEST_CASE("replay is deterministic") {
        TempDir dir;
        write_text(dir / "0.txt", "0 0.3 0.3 0.2 0.2 0.5\n1 0.6 0.6 0.1 0.3\n");
        write_text(dir / "2.txt", "2 0.3 0.7 0.2 0.2\n");
        auto a = ReplayDetector::load(dir.path(), ClassSet::Four);
        auto b = ReplayDetector::load(dir.path(), ClassSet::Four);
        for (std::uint64_t s = 0; s < 4; ++s) {
            CHECK(a->detect(frame(s), {}) == b->detect(frame(s), {}));
        }
    }

    TEST_CASE("make_detector wants exactly one backend") {
        TempDir dir;
        CHECK_THROWS_AS(make_detector(std::nullopt, std::nullopt, ClassSet::Four), ArgumentError);
        CHECK_THROWS_AS(make_detector(dir.path(), std::string("exec:true"), ClassSet::Four), ArgumentError);
        CHECK_THROWS_AS(BridgeDetector("ftp:x"), ArgumentError);
    }

    TEST_CASE("bridge: empty stub") {
        BridgeDetector d(bridge("empty"));
        CHECK(d.detect(frame(0), {}).empty());
        CHECK(d.detect(frame(1), {}).empty());
    }

    TEST_CASE("bridge: one box denormalizes like replay") {
        BridgeDetector d(bridge("echo"));
        const auto dets = d.detect(frame(7), {});
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].cls == AnomalyClass::D40);
        CHECK(dets[0].box == BoundingBox{192, 240, 256, 160});
        CHECK(dets[0].confidence == doctest::Approx(0.9));
        CHECK(d.detect(frame(8), {0.95, ClassSet::Four}).empty());
    }

    TEST_CASE("bridge: mismatched seq is a protocol error") {
        BridgeDetector d(bridge("mismatch"));
        CHECK_THROWS_AS(d.detect(frame(3), {}), ProtocolError);
    }

    TEST_CASE("bridge: timeout is a detector error") {
        BridgeDetector d(bridge("sleep 2000"), std::chrono::milliseconds(200));
        CHECK_THROWS_AS(d.detect(frame(0), {}), DetectorError);
    }

    TEST_CASE("bridge: a dead process is a detector error") {
        BridgeDetector d("exec:exit 0");
        CHECK_THROWS_AS(d.detect(frame(0), {}), DetectorError);
    }
}
