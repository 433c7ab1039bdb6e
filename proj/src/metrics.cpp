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

#include "roadwatch/metrics.h"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

namespace roadwatch {

namespace {

class Matcher {
public:
    Matcher(std::span<const Detection> preds, std::span<const Detection> truths, double threshold)
        : feasible_(preds.size()), owner_(truths.size(), -1) {
        for (std::size_t p = 0; p < preds.size(); ++p) {
            std::vector<std::pair<double, int>> cands;
            for (std::size_t t = 0; t < truths.size(); ++t) {
                if (preds[p].cls != truths[t].cls) {
                    continue;
                }
                const double v = iou(preds[p].box, truths[t].box);
                if (v >= threshold) {
                    cands.emplace_back(v, static_cast<int>(t));
                }
            }
            std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
            for (const auto& c : cands) {
                feasible_[p].push_back(c.second);
            }
        }
    }

    bool place(int p) {
        visited_.assign(owner_.size(), false);
        return augment(p);
    }

    const std::vector<int>& owner() const { return owner_; }

private:
    bool augment(int p) {
        for (int t : feasible_[p]) {
            if (owner_[t] < 0) {
                owner_[t] = p;
                return true;
            }
        }
        for (int t : feasible_[p]) {
            if (visited_[t]) {
                continue;
            }
            visited_[t] = true;
            if (augment(owner_[t])) {
                owner_[t] = p;
                return true;
            }
        }
        return false;
    }

    std::vector<std::vector<int>> feasible_;
    std::vector<int> owner_;
    std::vector<bool> visited_;
};

std::vector<std::size_t> confidence_order(std::span<const Detection> preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
    return order;
}

std::vector<Detection> of_class(const std::vector<Detection>& dets, AnomalyClass cls) {
    std::vector<Detection> out;
    std::copy_if(dets.begin(), dets.end(), std::back_inserter(out), [cls](const Detection& d) { return d.cls == cls; });
    return out;
}

const std::vector<Detection>& frame_or_empty(const FrameDetections& frames, std::uint64_t seq) {
    static const std::vector<Detection> kEmpty;
    const auto it = frames.find(seq);
    return it == frames.end() ? kEmpty : it->second;
}

std::set<std::uint64_t> frame_keys(const FrameDetections& a, const FrameDetections& b) {
    std::set<std::uint64_t> keys;
    for (const auto& [k, _] : a) {
        keys.insert(k);
    }
    for (const auto& [k, _] : b) {
        keys.insert(k);
    }
    return keys;
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
    const auto ix = std::max<std::int64_t>(0, std::min(a.x + a.length, b.x + b.length) - std::max(a.x, b.x));
    const auto iy = std::max<std::int64_t>(0, std::min(a.y + a.width, b.y + b.width) - std::max(a.y, b.y));
    const auto inter = ix * iy;
    const auto uni = bbox_area(a) + bbox_area(b) - inter;
    if (uni <= 0) {
        return 0.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Matching match(std::span<const Detection> preds, std::span<const Detection> truths, double iou_threshold) {
    Matcher matcher(preds, truths, iou_threshold);
    for (std::size_t p : confidence_order(preds)) {
        matcher.place(static_cast<int>(p));
    }
    Matching result;
    result.pred_to_truth.assign(preds.size(), -1);
    for (std::size_t t = 0; t < truths.size(); ++t) {
        const int p = matcher.owner()[t];
        if (p >= 0) {
            result.pred_to_truth[p] = static_cast<int>(t);
            ++result.counts.tp;
        }
    }
    result.counts.fp = preds.size() - result.counts.tp;
    result.counts.fn = truths.size() - result.counts.tp;
    return result;
}

MatchCounts match_detections(std::span<const Detection> preds, std::span<const Detection> truths,
                             double iou_threshold) {
    return match(preds, truths, iou_threshold).counts;
}

double precision(const MatchCounts& c) {
    const auto denom = c.tp + c.fp;
    return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double recall(const MatchCounts& c) {
    const auto denom = c.tp + c.fn;
    return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double f1(double p, double r) {
    const double denom = p + r;
    return denom <= 0.0 ? 0.0 : 2.0 * p * r / denom;
}

double average_precision(const FrameDetections& preds, const FrameDetections& truths, AnomalyClass cls,
                         double iou_threshold) {
    struct Scored {
        double conf;
        bool tp;
    };
    std::vector<Scored> scored;
    std::uint64_t n_truth = 0;
    for (std::uint64_t seq : frame_keys(preds, truths)) {
        const auto p = of_class(frame_or_empty(preds, seq), cls);
        const auto t = of_class(frame_or_empty(truths, seq), cls);
        n_truth += t.size();
        const auto m = match(p, t, iou_threshold);
        for (std::size_t i = 0; i < p.size(); ++i) {
            scored.push_back({p[i].confidence, m.pred_to_truth[i] >= 0});
        }
    }
    if (n_truth == 0 || scored.empty()) {
        return 0.0;
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.conf > b.conf; });

    std::vector<double> prec(scored.size());
    std::vector<double> rec(scored.size());
    std::uint64_t tp = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        tp += scored[i].tp ? 1 : 0;
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp) / static_cast<double>(n_truth);
    }
    // Precision envelope: max precision at any recall >= r_i.
    for (std::size_t i = scored.size() - 1; i > 0; --i) {
        prec[i - 1] = std::max(prec[i - 1], prec[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        if (rec[i] > prev_recall) {
            ap += (rec[i] - prev_recall) * prec[i];
            prev_recall = rec[i];
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

EvalReport evaluate(const FrameDetections& preds, const FrameDetections& truths, ClassSet set,
                    double iou_threshold, double confidence_threshold) {
    EvalReport report;
    report.iou_threshold = iou_threshold;
    report.confidence_threshold = confidence_threshold;

    double ap_sum = 0.0;
    std::size_t ap_classes = 0;
    for (std::size_t c = 0; c < class_set_size(set); ++c) {
        const auto cls = static_cast<AnomalyClass>(c);
        ClassReport cr;
        cr.cls = cls;
        for (std::uint64_t seq : frame_keys(preds, truths)) {
            auto p = of_class(frame_or_empty(preds, seq), cls);
            std::erase_if(p, [&](const Detection& d) { return d.confidence < confidence_threshold; });
            const auto t = of_class(frame_or_empty(truths, seq), cls);
            cr.truths += t.size();
            cr.counts += match_detections(p, t, iou_threshold);
        }
        cr.precision = precision(cr.counts);
        cr.recall = recall(cr.counts);
        cr.f1 = f1(cr.precision, cr.recall);
        cr.ap50 = average_precision(preds, truths, cls, iou_threshold);
        if (cr.truths > 0) {
            ap_sum += cr.ap50;
            ++ap_classes;
        }
        report.overall += cr.counts;
        report.classes.push_back(cr);
    }
    report.precision = precision(report.overall);
    report.recall = recall(report.overall);
    report.f1 = f1(report.precision, report.recall);
    report.map50 = ap_classes == 0 ? 0.0 : ap_sum / static_cast<double>(ap_classes);
    return report;
}

std::string format_report_table(const EvalReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "# iou=%.2f conf=%.2f\n", report.iou_threshold, report.confidence_threshold);
    out += line;
    std::snprintf(line, sizeof(line), "%-7s %6s %5s %5s %5s %7s %7s %7s %7s\n", "class", "truths", "TP", "FP", "FN",
                  "P", "R", "F1", "AP50");
    out += line;
    for (const auto& c : report.classes) {
        std::snprintf(line, sizeof(line), "%-7s %6llu %5llu %5llu %5llu %7.4f %7.4f %7.4f %7.4f\n",
                      std::string(class_name(c.cls)).c_str(), static_cast<unsigned long long>(c.truths),
                      static_cast<unsigned long long>(c.counts.tp), static_cast<unsigned long long>(c.counts.fp),
                      static_cast<unsigned long long>(c.counts.fn), c.precision, c.recall, c.f1, c.ap50);
        out += line;
    }
    std::uint64_t truths = 0;
    for (const auto& c : report.classes) {
        truths += c.truths;
    }
    std::snprintf(line, sizeof(line), "%-7s %6llu %5llu %5llu %5llu %7.4f %7.4f %7.4f %7.4f\n", "all",
                  static_cast<unsigned long long>(truths), static_cast<unsigned long long>(report.overall.tp),
                  static_cast<unsigned long long>(report.overall.fp), static_cast<unsigned long long>(report.overall.fn),
                  report.precision, report.recall, report.f1, report.map50);
    out += line;
    return out;
}

}  // namespace roadwatch
