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

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

#include "roadwatch/bytes.h"
#include "roadwatch/core.h"

namespace roadwatch {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    Bytes pixels;

    Image() = default;
    Image(int w, int h, int ch, std::uint8_t fill = 0);

    std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
};

// Throws ArgumentError on an empty image or libjpeg failure.
Bytes encode_jpeg(const Image& image, int quality = 90);
// Decodes to RGB when `force_rgb`, otherwise to the stored colour space.
Image decode_jpeg(std::span<const std::uint8_t> jpeg, bool force_rgb = false);
// Header-only decode.
std::pair<int, int> jpeg_dimensions(std::span<const std::uint8_t> jpeg);

// Drawing clips to the image bounds. Gray images use the first channel.
void fill_rect(Image& image, const BoundingBox& box, Rgb colour);
void draw_rect(Image& image, const BoundingBox& box, Rgb colour, int thickness = 2);
void draw_text(Image& image, int x, int y, std::string_view text, Rgb colour, int scale = 2);

inline constexpr int kIndicatorSize = 24;
inline constexpr Rgb kIndicatorRed{220, 20, 20};
inline constexpr Rgb kIndicatorGreen{20, 200, 20};

// Boxes with class labels plus the corner indicator (red when `large`).
Bytes annotate_frame(std::span<const std::uint8_t> jpeg, std::span<const Detection> detections,
                     bool large);

}  // namespace roadwatch
