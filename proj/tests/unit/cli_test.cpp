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
#include <httplib.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "../support/testutil.h"
#include "roadwatch/bytes.h"
#include "roadwatch/cli.h"
#include "roadwatch/cloudsink.h"
#include "roadwatch/simharness.h"

using namespace roadwatch;
using namespace roadwatch::test;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

const fs::path kEval = fs::path(ROADWATCH_FIXTURES) / "eval";

// Every line is a JSON document.
bool all_json(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        if (!nlohmann::json::accept(line)) {
            return false;
        }
        ++n;
    }
    return n > 0;
}

std::string small_scenario(const TempDir& dir) {
    Scenario s;
    s.road_length_m = 20;
    s.speed_mps = 5;
    s.fps = 30;
    s.camera_span_m = 31 * s.fsi();
    s.anomalies = {{2.2, AnomalyClass::D40, 0.1}, {9.1, AnomalyClass::D00, 0.02}};
    const auto path = dir / "s.json";
    write_file_atomic(path, scenario_to_json(s));
    return path.string();
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("help and usage exit codes") {
        auto r = cli({"--help"});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("evaluate") != std::string::npos);
        for (const char* sub : {"endnode", "rsu", "vehicle", "simulate", "equivalence", "sweep", "evaluate",
                                "latency", "storage-report"}) {
            r = cli({sub, "--help"});
            CHECK_MESSAGE(r.code == kExitOk, sub);
            CHECK(!r.out.empty());
        }
        CHECK(cli({}).code == kExitUsage);
        CHECK(cli({"frobnicate"}).code == kExitUsage);
        CHECK(cli({"evaluate", "--truths", "x"}).code == kExitUsage);
        CHECK(cli({"evaluate", "--preds", "x", "--truths", "y", "--bogus"}).code == kExitUsage);
        CHECK(cli({"--format", "yaml", "sweep", "--random"}).code == kExitUsage);
        CHECK(cli({"endnode", "--mode", "3", "--source", "x"}).code == kExitUsage);
    }

    TEST_CASE("missing scenario file") {
        const auto r = cli({"equivalence", "--scenario", "missing.json"});
        CHECK(r.code == kExitFailure);
        CHECK(r.err.find("missing.json") != std::string::npos);
    }

    TEST_CASE("evaluate golden table") {
        const auto r = cli({"evaluate", "--preds", (kEval / "preds").string(), "--truths", (kEval / "truths").string(),
                            "--iou", "0.5"});
        CHECK(r.code == kExitOk);
        const auto expected = read_file(kEval / "expected.txt");
        CHECK(r.out == std::string(expected.begin(), expected.end()));
    }

    TEST_CASE("evaluate json") {
        const auto r = cli({"--format", "json", "evaluate", "--preds", (kEval / "preds").string(), "--truths",
                            (kEval / "truths").string()});
        REQUIRE(r.code == kExitOk);
        const auto j = nlohmann::json::parse(r.out);
        CHECK(j["all"]["tp"] == 3);
        CHECK(j["all"]["fp"] == 4);
        CHECK(j["all"]["fn"] == 3);
        CHECK(j["all"]["map50"].get<double>() == doctest::Approx((0.5 + 0.0 + 2.0 / 3.0) / 3.0).epsilon(1e-12));
        CHECK(j["classes"].size() == 4);
        CHECK(nlohmann::json::parse(j.dump()) == j);
    }

    TEST_CASE("evaluate rejects missing directories") {
        CHECK(cli({"evaluate", "--preds", "/nonexistent", "--truths", (kEval / "truths").string()}).code ==
              kExitFailure);
    }

    TEST_CASE("simulate, storage-report, sweep and equivalence") {
        TempDir dir;
        const auto scen = small_scenario(dir);
        auto r = cli({"simulate", "--scenario", scen, "--out", (dir / "out").string()});
        CHECK(r.code == kExitOk);
        CHECK(fs::exists(dir / "out" / "manifest.json"));
        CHECK(fs::exists(dir / "out" / "frames" / "0.jpg"));

        r = cli({"--format", "json", "simulate", "--random", "--seed", "4", "--out", (dir / "r1").string()});
        CHECK(r.code == kExitOk);
        CHECK(all_json(r.out));
        cli({"simulate", "--random", "--seed", "4", "--out", (dir / "r2").string()});
        CHECK(read_file(dir / "r1" / "manifest.json") == read_file(dir / "r2" / "manifest.json"));

        r = cli({"sweep", "--scenario", scen, "--speeds-kmh", "20,60", "--skips", "-1,0"});
        CHECK(r.code == kExitOk);
        CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 5);
        r = cli({"--format", "json", "sweep", "--scenario", scen});
        CHECK(r.code == kExitOk);
        CHECK(all_json(r.out));

        r = cli({"--format", "json", "equivalence", "--scenario", scen});
        CHECK(r.code == kExitOk);
        REQUIRE(all_json(r.out));
        CHECK(nlohmann::json::parse(r.out)["equal"] == true);
        r = cli({"equivalence", "--random", "--seed", "3"});
        CHECK(r.code == kExitOk);

    }

    TEST_CASE("latency") {
        TempDir dir;
        const auto scen = small_scenario(dir);
        auto r = cli({"latency", "--scenario", scen, "--max-frames", "40"});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("mean") != std::string::npos);
        r = cli({"--format", "json", "latency", "--scenario", scen, "--max-frames", "40"});
        REQUIRE(r.code == kExitOk);
        REQUIRE(all_json(r.out));
        CHECK(nlohmann::json::parse(r.out)["frames"] == 35);
        CHECK(cli({"latency", "--scenario", scen, "--max-frames", "12"}).code == kExitUsage);
    }

    TEST_CASE("rsu, endnode and vehicle sessions") {
        TempDir dir;
        const auto scen = small_scenario(dir);
        const auto sink = dir / "sink";
        Run rsu_run;
        std::thread rsu([&] {
            rsu_run = cli({"--format", "json", "rsu", "--control-port", "47811", "--stream-port", "47812", "--api-port", "47813",
                           "--autostart", "--sink", sink.string(), "--duration", "4"});
        });
        Run vehicle_run;
        std::thread vehicle([&] {
            vehicle_run = cli({"--format", "json", "vehicle", "--rsu", "127.0.0.1:47811", "--count", "1",
                               "--duration", "4"});
        });
        httplib::Client api("127.0.0.1", 47813);
        REQUIRE(eventually([&] {
            const auto res = api.Get("/status");
            return res && res->status == 200 && nlohmann::json::parse(res->body)["vehicles"] == 1;
        }));
        const auto en = cli({"--format", "json", "endnode", "--mode", "1", "--source", scen, "--rsu",
                             "127.0.0.1:47811", "--speed-kmh", "18", "--fast"});
        vehicle.join();
        rsu.join();
        CHECK(en.code == kExitOk);
        CHECK(all_json(en.out));
        INFO("vehicle out: ", vehicle_run.out, " err: ", vehicle_run.err, " endnode: ", en.out, en.err, " rsu: ", rsu_run.out, rsu_run.err);
        CHECK(vehicle_run.code == kExitOk);
        REQUIRE(all_json(vehicle_run.out));
        CHECK(nlohmann::json::parse(vehicle_run.out)["type"] == "WARNING");
        CHECK(rsu_run.code == kExitOk);
        CHECK(all_json(rsu_run.out));

        const auto r = cli({"--format", "json", "storage-report", "--sink", sink.string()});
        CHECK(r.code == kExitOk);
        REQUIRE(all_json(r.out));
        CHECK(nlohmann::json::parse(r.out)["objects"] == 2);
    }

    TEST_CASE("config file supplies defaults and flags override it") {
        TempDir dir;
        const auto cfg = dir / "c.json";
        std::ofstream(cfg) << R"({"format": "json", "evaluate": {"iou": 0.9}})";
        const auto preds = (kEval / "preds").string();
        const auto truths = (kEval / "truths").string();
        auto r = cli({"--config", cfg.string(), "evaluate", "--preds", preds, "--truths", truths});
        REQUIRE(r.code == kExitOk);
        CHECK(nlohmann::json::parse(r.out)["iou"] == 0.9);
        r = cli({"--config", cfg.string(), "evaluate", "--preds", preds, "--truths", truths, "--iou", "0.5"});
        REQUIRE(r.code == kExitOk);
        CHECK(nlohmann::json::parse(r.out)["iou"] == 0.5);

        std::ofstream(cfg) << R"({"evaluate": {"nonsense": 1}})";
        CHECK(cli({"--config", cfg.string(), "evaluate", "--preds", preds, "--truths", truths}).code == kExitUsage);
        CHECK(cli({"--config", (dir / "absent.json").string(), "sweep", "--random"}).code != kExitOk);
    }
}
