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
// Independent reference implementations and random generators shared by the
// unit suites and the acceptance runner.

#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "roadwatch/core.h"
#include "roadwatch/metrics.h"
#include "roadwatch/protocol.h"

namespace roadwatch::test {

// Largest same-class, IoU-feasible assignment by exhaustive search.
inline std::uint64_t brute_force_tp(const std::vector<Detection>& preds, const std::vector<Detection>& truths,
                                    double thr, std::size_t p, std::vector<bool>& used) {
    if (p == preds.size()) {
        return 0;
    }
    std::uint64_t best = brute_force_tp(preds, truths, thr, p + 1, used);
    for (std::size_t t = 0; t < truths.size(); ++t) {
        if (used[t] || preds[p].cls != truths[t].cls || iou(preds[p].box, truths[t].box) < thr) {
            continue;
        }
        used[t] = true;
        best = std::max(best, 1 + brute_force_tp(preds, truths, thr, p + 1, used));
        used[t] = false;
    }
    return best;
}

inline std::uint64_t brute_force_tp(const std::vector<Detection>& preds, const std::vector<Detection>& truths,
                                    double thr) {
    std::vector<bool> used(truths.size(), false);
    return brute_force_tp(preds, truths, thr, 0, used);
}

// Boxes crowded into a 34x34 patch so overlaps are common.
inline std::vector<Detection> random_boxes(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> pos(0, 20);
    std::uniform_int_distribution<int> size(4, 14);
    std::uniform_int_distribution<int> cls(0, 1);
    std::uniform_real_distribution<double> conf(0.0, 1.0);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(Detection{static_cast<AnomalyClass>(cls(rng)), BoundingBox{pos(rng), pos(rng), size(rng), size(rng)},
                                conf(rng)});
    }
    return out;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
    static const std::string kAlphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 -_.,!?\"\\/\t\xc3\xa9";
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 2);
    std::string s;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = pick(rng);
        if (c == kAlphabet.size() - 2) {
            s += "\xc3\xa9";  // keep UTF-8 valid
        } else {
            s += kAlphabet[c];
        }
    }
    return s;
}

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
    Bytes b(n);
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& x : b) {
        x = static_cast<std::uint8_t>(byte(rng));
    }
    return b;
}

inline ControlMessage random_message(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind(0, 5);
    std::uniform_int_distribution<std::uint64_t> u64(0, (std::uint64_t{1} << 53));
    std::uniform_int_distribution<std::int64_t> i64(-(std::int64_t{1} << 50), std::int64_t{1} << 50);
    std::uniform_int_distribution<int> cls(0, 7);
    std::uniform_int_distribution<int> small(0, 5);
    std::uniform_real_distribution<double> real(0.0, 100.0);
    std::bernoulli_distribution coin;
    const auto size = [&] { return coin(rng) ? SizeClass::Large : SizeClass::Small; };
    switch (kind(rng)) {
        case 0: {
            static const char* kRoles[] = {"endnode", "vehicle", "console"};
            return Hello{kRoles[small(rng) % 3], random_text(rng, 20)};
        }
        case 1: {
            AnomalyReport r;
            r.frame_seq = u64(rng);
            for (int i = small(rng); i > 0; --i) {
                r.detections.push_back(Detection{static_cast<AnomalyClass>(cls(rng)),
                                                 BoundingBox{i64(rng) % 5000, i64(rng) % 5000, 1 + int(u64(rng) % 640),
                                                             1 + int(u64(rng) % 640)},
                                                 real(rng) / 100.0});
            }
            r.size_class = size();
            r.speed_mps = real(rng);
            r.timestamp_ms = i64(rng);
            r.image = random_bytes(rng, u64(rng) % 3000);
            return r;
        }
        case 2: {
            Warning w;
            w.class_id = cls(rng);
            w.size_class = size();
            w.frame_seq = u64(rng);
            w.timestamp_ms = i64(rng);
            if (coin(rng)) {
                w.text = random_text(rng, 60);
            }
            return w;
        }
        case 3: {
            const auto count = u64(rng);
            return GeneralWarning{count, u64(rng), general_warning_text(count), i64(rng)};
        }
        case 4: {
            CountsUpdate c;
            for (int i = small(rng); i > 0; --i) {
                const auto v = u64(rng);
                c.per_class[std::string(class_name(static_cast<AnomalyClass>(cls(rng))))] = v;
                c.total += v;
            }
            return c;
        }
        default:
            return Bye{random_text(rng, 20)};
    }
}

}  // namespace roadwatch::test
