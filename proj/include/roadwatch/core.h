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

// Domain types and the anomaly assessment math: box area, large/small size
// rule, frame span interval, the frame-skip policy and the per-class counter.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace roadwatch {

// RDD2022 damage classes. The integer values are the wire/label ids.
enum class AnomalyClass : int {
    D00 = 0,  // longitudinal crack
    D10 = 1,  // transverse crack
    D20 = 2,  // alligator crack
    D40 = 3,  // pothole
    D43 = 4,  // crosswalk blur
    D44 = 5,  // white line blur
    D50 = 6,  // manhole cover
    Repair = 7,
};

inline constexpr std::size_t kNumClasses = 8;

enum class ClassSet { Four, Eight };

int class_id(AnomalyClass c);
std::string_view class_name(AnomalyClass c);         // "D00", ..., "REPAIR"
std::string_view class_description(AnomalyClass c);  // "Longitudinal crack", ...
std::optional<AnomalyClass> class_from_id(int id);
std::optional<AnomalyClass> class_from_name(std::string_view name);
bool in_class_set(AnomalyClass c, ClassSet set);
std::size_t class_set_size(ClassSet set);
ClassSet class_set_from_count(int n);  // 4 or 8, ArgumentError otherwise

// Axis-aligned box in frame pixels. `length` runs along x, `width` along y.
struct BoundingBox {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t length = 0;
    std::int64_t width = 0;

    bool operator==(const BoundingBox&) const = default;
};

struct Detection {
    AnomalyClass cls = AnomalyClass::D00;
    BoundingBox box;
    double confidence = 1.0;

    bool operator==(const Detection&) const = default;
};

struct SizeConfig {
    double rho_fraction = 0.10;
};

enum class SizeClass { Small, Large };

std::string_view size_class_name(SizeClass s);  // "small" / "large"
std::optional<SizeClass> size_class_from_name(std::string_view name);

struct MotionState {
    double speed_mps = 0.0;
    double fps = 30.0;

    bool operator==(const MotionState&) const = default;
};

// Process one frame, then skip `skip` frames.
struct SkipPolicy {
    double fsi = 0.0;
    std::uint32_t skip = 0;

    std::uint64_t stride() const { return std::uint64_t{skip} + 1; }
    bool operator==(const SkipPolicy&) const = default;

    static SkipPolicy manual(std::uint32_t skip_frames) { return SkipPolicy{0.0, skip_frames}; }
};

inline constexpr double kFsiThreshold = 0.5;
inline constexpr std::uint32_t kSkipFast = 5;
inline constexpr std::uint32_t kSkipSlow = 30;

std::int64_t bbox_area(const BoundingBox& box);

// Area threshold in pixels^2 for a w x h frame.
double rho_pixels(const SizeConfig& cfg, std::int64_t frame_w, std::int64_t frame_h);

SizeClass classify_size(const BoundingBox& box, std::int64_t frame_w, std::int64_t frame_h,
                        const SizeConfig& cfg);

// Largest size class over a set of detections (Small for an empty set).
SizeClass max_size_class(std::span<const Detection> detections, std::int64_t frame_w,
                         std::int64_t frame_h, const SizeConfig& cfg);

// Road meters covered per captured frame.
double compute_fsi(const MotionState& m);

SkipPolicy skip_policy(double fsi);

double kmh_to_mps(double kmh);

bool should_process(std::uint64_t frame_seq, const SkipPolicy& policy);

// Per-class tally of detections seen on processed frames.
class AnomalyCounter {
public:
    using Counts = std::array<std::uint64_t, kNumClasses>;

    // Gates on should_process and counts one per detection. Throws
    // OrderingError unless frame_seq is strictly past the last observed seq.
    // Returns whether the frame was processed.
    bool observe(std::uint64_t frame_seq, std::span<const Detection> detections,
                 const SkipPolicy& policy);

    // Counts detections of an already-gated frame.
    void add(std::span<const Detection> detections);

    void reset();

    std::uint64_t count(AnomalyClass c) const { return counts_[static_cast<std::size_t>(c)]; }
    const Counts& counts() const { return counts_; }
    std::uint64_t total() const { return total_; }
    std::optional<std::uint64_t> last_seq() const { return last_seq_; }

    bool operator==(const AnomalyCounter&) const = default;

private:
    Counts counts_{};
    std::uint64_t total_ = 0;
    std::optional<std::uint64_t> last_seq_;
};

}  // namespace roadwatch
