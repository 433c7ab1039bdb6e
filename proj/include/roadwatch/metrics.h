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

// Detection-quality evaluation: IoU matching, precision / recall / F1 and
// all-points average precision at a fixed IoU threshold.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "roadwatch/core.h"

namespace roadwatch {

inline constexpr double kDefaultIou = 0.5;

struct MatchCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    MatchCounts& operator+=(const MatchCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const MatchCounts&) const = default;
};

// Per-frame detections keyed by frame seq. Ground truth uses the same
// shape; its confidences are ignored.
using FrameDetections = std::map<std::uint64_t, std::vector<Detection>>;

double iou(const BoundingBox& a, const BoundingBox& b);

// Result of matching one frame: which prediction matched which truth.
struct Matching {
    std::vector<int> pred_to_truth;  // -1 when unmatched
    MatchCounts counts;
};

// Class-strict matching in descending confidence order (ties keep input
// order). Each prediction takes the free same-class truth with the highest
// IoU >= threshold; when none is free it tries to re-seat an already matched
// prediction on another feasible truth (augmenting path), so the matched set
// is always a maximum-cardinality matching that favours confident boxes.
Matching match(std::span<const Detection> preds, std::span<const Detection> truths,
               double iou_threshold = kDefaultIou);

MatchCounts match_detections(std::span<const Detection> preds, std::span<const Detection> truths,
                             double iou_threshold = kDefaultIou);

double precision(const MatchCounts& c);
double recall(const MatchCounts& c);
double f1(double p, double r);

// All-points interpolated AP for one class over many frames. Predictions of
// other classes are ignored.
double average_precision(const FrameDetections& preds, const FrameDetections& truths, AnomalyClass cls,
                         double iou_threshold = kDefaultIou);

struct ClassReport {
    AnomalyClass cls = AnomalyClass::D00;
    std::uint64_t truths = 0;
    MatchCounts counts;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double ap50 = 0.0;
};

struct EvalReport {
    double iou_threshold = kDefaultIou;
    double confidence_threshold = 0.25;
    std::vector<ClassReport> classes;  // classes in the class set
    MatchCounts overall;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double map50 = 0.0;  // mean AP over classes with >= 1 truth
};

// Counts use predictions at or above `confidence_threshold`; AP uses every
// prediction.
EvalReport evaluate(const FrameDetections& preds, const FrameDetections& truths, ClassSet set,
                    double iou_threshold = kDefaultIou, double confidence_threshold = 0.25);

std::string format_report_table(const EvalReport& report);

}  // namespace roadwatch
