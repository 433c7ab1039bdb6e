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

#include <random>
#include <vector>

#include "roadwatch/core.h"
#include "roadwatch/errors.h"

using namespace roadwatch;

namespace {

BoundingBox box(std::int64_t l, std::int64_t w) { return BoundingBox{0, 0, l, w}; }

Detection det(AnomalyClass c) { return Detection{c, box(10, 10), 1.0}; }

}  // namespace

TEST_SUITE("core") {
    TEST_CASE("class ids and names are stable") {
        CHECK(class_id(AnomalyClass::D00) == 0);
        CHECK(class_id(AnomalyClass::D40) == 3);
        CHECK(class_id(AnomalyClass::Repair) == 7);
        CHECK(class_name(AnomalyClass::D20) == "D20");
        CHECK(class_description(AnomalyClass::D00) == "Longitudinal crack");
        CHECK(class_description(AnomalyClass::D40) == "Pothole");
        CHECK(class_from_name("D50") == AnomalyClass::D50);
        CHECK_FALSE(class_from_id(8).has_value());
        CHECK_FALSE(class_from_id(-1).has_value());
    }

    TEST_CASE("the four-class set is exactly D00 D10 D20 D40") {
        std::vector<AnomalyClass> four;
        for (int id = 0; id < static_cast<int>(kNumClasses); ++id) {
            if (in_class_set(*class_from_id(id), ClassSet::Four)) {
                four.push_back(*class_from_id(id));
            }
        }
        CHECK(four == std::vector{AnomalyClass::D00, AnomalyClass::D10, AnomalyClass::D20, AnomalyClass::D40});
        CHECK(class_set_size(ClassSet::Eight) == 8);
        CHECK_THROWS_AS(class_set_from_count(5), ArgumentError);
    }

    TEST_CASE("bbox_area") {
        CHECK(bbox_area(box(640, 640)) == 409600);
        CHECK(bbox_area(box(1, 1)) == 1);
        CHECK(bbox_area(box(256, 160)) == 40960);
    }

    TEST_CASE("classify_size on 640x640 at rho 10%") {
        const SizeConfig cfg;
        CHECK(rho_pixels(cfg, 640, 640) == 40960.0);
        CHECK(classify_size(box(256, 160), 640, 640, cfg) == SizeClass::Large);
        CHECK(classify_size(box(200, 200), 640, 640, cfg) == SizeClass::Small);
        CHECK(classify_size(box(640, 640), 640, 640, cfg) == SizeClass::Large);
        CHECK(classify_size(box(40959, 1), 640, 640, cfg) == SizeClass::Small);
        CHECK_THROWS_AS(classify_size(box(1, 1), 0, 640, cfg), ArgumentError);
        CHECK_THROWS_AS(classify_size(box(1, 1), 640, -3, cfg), ArgumentError);
    }

    TEST_CASE("classify_size agrees with the direct inequality") {
        std::mt19937_64 rng(7);
        const SizeConfig cfg{0.25};
        for (int i = 0; i < 2000; ++i) {
            const int fw = std::uniform_int_distribution<int>(1, 1920)(rng);
            const int fh = std::uniform_int_distribution<int>(1, 1080)(rng);
            const auto b = box(std::uniform_int_distribution<std::int64_t>(1, fw)(rng),
                               std::uniform_int_distribution<std::int64_t>(1, fh)(rng));
            // 0.25 is exact in binary, so 4*A >= w*h is the same rule in integers.
            const bool large = 4 * bbox_area(b) >= std::int64_t{fw} * fh;
            CHECK((classify_size(b, fw, fh, cfg) == SizeClass::Large) == large);
        }
    }

    TEST_CASE("compute_fsi") {
        CHECK(compute_fsi({0.0, 30.0}) == 0.0);
        CHECK(compute_fsi({15.0, 30.0}) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(compute_fsi({5.5556, 30.0}) == doctest::Approx(0.18519).epsilon(1e-4));
        CHECK(compute_fsi({kmh_to_mps(20.0), 30.0}) == doctest::Approx(0.185185185).epsilon(1e-9));
        CHECK_THROWS_AS(compute_fsi({1.0, 0.0}), ArgumentError);
        CHECK_THROWS_AS(compute_fsi({1.0, -5.0}), ArgumentError);
    }

    TEST_CASE("compute_fsi is monotone in speed and fps") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> speed(0.01, 60.0);
        std::uniform_real_distribution<double> fps(1.0, 120.0);
        for (int i = 0; i < 500; ++i) {
            const double s1 = speed(rng), s2 = speed(rng), f1 = fps(rng), f2 = fps(rng);
            if (s1 < s2) {
                CHECK(compute_fsi({s1, f1}) < compute_fsi({s2, f1}));
            }
            if (f1 < f2) {
                CHECK(compute_fsi({s1, f1}) > compute_fsi({s1, f2}));
            }
        }
    }

    TEST_CASE("skip_policy is a step at 0.5") {
        CHECK(skip_policy(0.5).skip == 5);
        CHECK(skip_policy(0.5).stride() == 6);
        CHECK(skip_policy(0.18519).skip == 30);
        CHECK(skip_policy(0.18519).stride() == 31);
        CHECK(skip_policy(10.0).skip == 5);
        CHECK(skip_policy(0.0).skip == 30);
        CHECK(skip_policy(std::nextafter(0.5, 0.0)).skip == 30);
        CHECK_THROWS_AS(skip_policy(-0.1), ArgumentError);
    }

    TEST_CASE("kmh_to_mps") {
        CHECK(kmh_to_mps(0.0) == 0.0);
        CHECK(kmh_to_mps(36.0) == doctest::Approx(10.0).epsilon(1e-15));
        CHECK(kmh_to_mps(20.0) == doctest::Approx(5.5556).epsilon(1e-4));
    }

    TEST_CASE("should_process") {
        const auto p5 = SkipPolicy::manual(5);
        CHECK(should_process(0, p5));
        CHECK(should_process(0, SkipPolicy::manual(30)));
        CHECK(should_process(6, p5));
        CHECK_FALSE(should_process(3, p5));
    }

    TEST_CASE("should_process selects ceil(N/stride) of the first N frames") {
        for (std::uint32_t skip : {0u, 1u, 5u, 30u}) {
            const auto policy = SkipPolicy::manual(skip);
            for (std::uint64_t n = 0; n < 200; ++n) {
                std::uint64_t hits = 0;
                for (std::uint64_t s = 0; s < n; ++s) {
                    hits += should_process(s, policy) ? 1 : 0;
                }
                CHECK(hits == (n + policy.stride() - 1) / policy.stride());
            }
        }
    }

    TEST_CASE("counter observe and reset") {
        const auto p5 = SkipPolicy::manual(5);
        AnomalyCounter c;
        const std::vector<Detection> pothole{det(AnomalyClass::D40)};
        CHECK(c.observe(0, pothole, p5));
        CHECK(c.count(AnomalyClass::D40) == 1);
        CHECK(c.total() == 1);

        const auto before = c;
        CHECK_FALSE(c.observe(3, pothole, p5));
        CHECK(c.counts() == before.counts());
        CHECK(c.last_seq() == 3u);

        AnomalyCounter d;
        d.observe(0, std::vector{det(AnomalyClass::D00), det(AnomalyClass::D00), det(AnomalyClass::D40)}, p5);
        CHECK(d.count(AnomalyClass::D00) == 2);
        CHECK(d.count(AnomalyClass::D40) == 1);
        CHECK(d.total() == 3);

        d.reset();
        CHECK(d.total() == 0);
        CHECK_FALSE(d.last_seq().has_value());
        d.reset();
        CHECK(d == AnomalyCounter{});
    }

    TEST_CASE("counter rejects out-of-order frames") {
        AnomalyCounter c;
        c.observe(4, {}, SkipPolicy::manual(0));
        CHECK_THROWS_AS(c.observe(4, {}, SkipPolicy::manual(0)), OrderingError);
        CHECK_THROWS_AS(c.observe(2, {}, SkipPolicy::manual(0)), OrderingError);
    }

    TEST_CASE("counter matches a brute-force recount of the observation log") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const auto policy = SkipPolicy::manual(std::uniform_int_distribution<std::uint32_t>(0, 10)(rng));
            AnomalyCounter counter;
            std::vector<std::pair<std::uint64_t, std::vector<Detection>>> log;
            std::uint64_t seq = 0;
            for (int f = 0; f < 100; ++f) {
                seq += std::uniform_int_distribution<std::uint64_t>(1, 3)(rng);
                std::vector<Detection> dets;
                const int n = std::uniform_int_distribution<int>(0, 3)(rng);
                for (int k = 0; k < n; ++k) {
                    dets.push_back(det(*class_from_id(std::uniform_int_distribution<int>(0, 7)(rng))));
                }
                counter.observe(seq, dets, policy);
                log.emplace_back(seq, dets);
            }
            AnomalyCounter::Counts expected{};
            std::uint64_t total = 0;
            for (const auto& [s, dets] : log) {
                if (s % policy.stride() != 0) {
                    continue;
                }
                for (const auto& d : dets) {
                    ++expected[static_cast<std::size_t>(d.cls)];
                    ++total;
                }
            }
            CHECK(counter.counts() == expected);
            CHECK(counter.total() == total);
        }
    }
}
