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

#include "roadwatch/core.h"

#include <cmath>
#include <string>

#include "roadwatch/errors.h"

namespace roadwatch {

namespace {

struct ClassInfo {
    AnomalyClass cls;
    std::string_view name;
    std::string_view description;
};

constexpr std::array<ClassInfo, kNumClasses> kClasses = {{
    {AnomalyClass::D00, "D00", "Longitudinal crack"},
    {AnomalyClass::D10, "D10", "Transverse crack"},
    {AnomalyClass::D20, "D20", "Alligator crack"},
    {AnomalyClass::D40, "D40", "Pothole"},
    {AnomalyClass::D43, "D43", "Crosswalk blur"},
    {AnomalyClass::D44, "D44", "White line blur"},
    {AnomalyClass::D50, "D50", "Manhole cover"},
    {AnomalyClass::Repair, "REPAIR", "Repair"},
}};

}  // namespace

int class_id(AnomalyClass c) { return static_cast<int>(c); }

std::string_view class_name(AnomalyClass c) { return kClasses[static_cast<std::size_t>(c)].name; }

std::string_view class_description(AnomalyClass c) {
    return kClasses[static_cast<std::size_t>(c)].description;
}

std::optional<AnomalyClass> class_from_id(int id) {
    if (id < 0 || id >= static_cast<int>(kNumClasses)) {
        return std::nullopt;
    }
    return static_cast<AnomalyClass>(id);
}

std::optional<AnomalyClass> class_from_name(std::string_view name) {
    for (const auto& info : kClasses) {
        if (info.name == name) {
            return info.cls;
        }
    }
    return std::nullopt;
}

bool in_class_set(AnomalyClass c, ClassSet set) {
    return set == ClassSet::Eight || class_id(c) <= class_id(AnomalyClass::D40);
}

std::size_t class_set_size(ClassSet set) { return set == ClassSet::Four ? 4 : kNumClasses; }

ClassSet class_set_from_count(int n) {
    if (n == 4) {
        return ClassSet::Four;
    }
    if (n == 8) {
        return ClassSet::Eight;
    }
    throw ArgumentError("class set must be 4 or 8, got " + std::to_string(n));
}

std::string_view size_class_name(SizeClass s) { return s == SizeClass::Large ? "large" : "small"; }

std::optional<SizeClass> size_class_from_name(std::string_view name) {
    if (name == "large") {
        return SizeClass::Large;
    }
    if (name == "small") {
        return SizeClass::Small;
    }
    return std::nullopt;
}

std::int64_t bbox_area(const BoundingBox& box) { return box.length * box.width; }

double rho_pixels(const SizeConfig& cfg, std::int64_t frame_w, std::int64_t frame_h) {
    if (frame_w <= 0 || frame_h <= 0) {
        throw ArgumentError("frame dimensions must be positive");
    }
    if (!(cfg.rho_fraction > 0.0 && cfg.rho_fraction < 1.0)) {
        throw ArgumentError("rho_fraction must lie in (0, 1)");
    }
    return cfg.rho_fraction * static_cast<double>(frame_w * frame_h);
}

SizeClass classify_size(const BoundingBox& box, std::int64_t frame_w, std::int64_t frame_h,
                        const SizeConfig& cfg) {
    const double rho = rho_pixels(cfg, frame_w, frame_h);
    return static_cast<double>(bbox_area(box)) >= rho ? SizeClass::Large : SizeClass::Small;
}

SizeClass max_size_class(std::span<const Detection> detections, std::int64_t frame_w,
                         std::int64_t frame_h, const SizeConfig& cfg) {
    const double rho = rho_pixels(cfg, frame_w, frame_h);
    for (const auto& d : detections) {
        if (static_cast<double>(bbox_area(d.box)) >= rho) {
            return SizeClass::Large;
        }
    }
    return SizeClass::Small;
}

double compute_fsi(const MotionState& m) {
    if (!(m.fps > 0.0)) {
        throw ArgumentError("fps must be positive");
    }
    if (m.speed_mps < 0.0) {
        throw ArgumentError("speed must be non-negative");
    }
    return m.speed_mps / m.fps;
}

SkipPolicy skip_policy(double fsi) {
    if (!(fsi >= 0.0)) {
        throw ArgumentError("fsi must be non-negative");
    }
    return SkipPolicy{fsi, fsi >= kFsiThreshold ? kSkipFast : kSkipSlow};
}

double kmh_to_mps(double kmh) { return kmh / 3.6; }

bool should_process(std::uint64_t frame_seq, const SkipPolicy& policy) {
    return frame_seq % policy.stride() == 0;
}

bool AnomalyCounter::observe(std::uint64_t frame_seq, std::span<const Detection> detections,
                             const SkipPolicy& policy) {
    if (last_seq_ && frame_seq <= *last_seq_) {
        throw OrderingError("frame " + std::to_string(frame_seq) + " is not after frame " +
                            std::to_string(*last_seq_));
    }
    last_seq_ = frame_seq;
    if (!should_process(frame_seq, policy)) {
        return false;
    }
    add(detections);
    return true;
}

void AnomalyCounter::add(std::span<const Detection> detections) {
    for (const auto& d : detections) {
        ++counts_[static_cast<std::size_t>(d.cls)];
        ++total_;
    }
}

void AnomalyCounter::reset() { *this = AnomalyCounter{}; }

}  // namespace roadwatch
