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

#include "roadwatch/image.h"

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <jpeglib.h>

#include "roadwatch/errors.h"

namespace roadwatch {

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
struct Glyph {
    char ch;
    std::array<std::uint8_t, 5> rows;
};

constexpr std::array<Glyph, 16> kFont = {{
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'D', {6, 5, 5, 5, 6}}, {'R', {6, 5, 6, 5, 5}},
    {'E', {7, 4, 6, 4, 7}}, {'P', {7, 5, 7, 4, 4}}, {'A', {2, 5, 7, 5, 5}}, {'I', {7, 2, 2, 2, 7}},
}};

void put_pixel(Image& image, int x, int y, Rgb colour) {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) {
        return;
    }
    auto* p = image.at(x, y);
    if (image.channels == 1) {
        p[0] = static_cast<std::uint8_t>((colour[0] * 30 + colour[1] * 59 + colour[2] * 11) / 100);
        return;
    }
    p[0] = colour[0];
    p[1] = colour[1];
    p[2] = colour[2];
}

Rgb class_colour(AnomalyClass c) {
    static constexpr std::array<Rgb, kNumClasses> kColours = {{
        {255, 200, 0}, {0, 160, 255}, {255, 0, 255}, {255, 80, 0},
        {0, 255, 200}, {160, 255, 0}, {128, 128, 255}, {255, 255, 255},
    }};
    return kColours[static_cast<std::size_t>(c)];
}

}  // namespace

Image::Image(int w, int h, int ch, std::uint8_t fill)
    : width(w), height(h), channels(ch), pixels(static_cast<std::size_t>(w) * h * ch, fill) {}

Bytes encode_jpeg(const Image& image, int quality) {
    if (image.width <= 0 || image.height <= 0 || (image.channels != 1 && image.channels != 3) ||
        image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
        throw ArgumentError("encode_jpeg: invalid image");
    }
    jpeg_compress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = on_jpeg_error;
    unsigned char* out = nullptr;
    unsigned long out_size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(out);
        throw ArgumentError(std::string("encode_jpeg: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &out, &out_size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = image.channels;
    cinfo.in_color_space = image.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    const auto stride = static_cast<std::size_t>(image.width) * image.channels;
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPLE*>(image.pixels.data() + cinfo.next_scanline * stride);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    Bytes result(out, out + out_size);
    std::free(out);
    return result;
}

Image decode_jpeg(std::span<const std::uint8_t> jpeg, bool force_rgb) {
    if (jpeg.empty()) {
        throw ArgumentError("decode_jpeg: empty input");
    }
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = on_jpeg_error;
    Image image;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ArgumentError(std::string("decode_jpeg: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, jpeg.data(), static_cast<unsigned long>(jpeg.size()));
    jpeg_read_header(&cinfo, TRUE);
    if (force_rgb || cinfo.jpeg_color_space != JCS_GRAYSCALE) {
        cinfo.out_color_space = JCS_RGB;
    }
    jpeg_start_decompress(&cinfo);
    image.width = static_cast<int>(cinfo.output_width);
    image.height = static_cast<int>(cinfo.output_height);
    image.channels = cinfo.output_components;
    image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * image.channels);
    const auto stride = static_cast<std::size_t>(image.width) * image.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPLE* row = image.pixels.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return image;
}

std::pair<int, int> jpeg_dimensions(std::span<const std::uint8_t> jpeg) {
    if (jpeg.empty()) {
        throw ArgumentError("jpeg_dimensions: empty input");
    }
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = on_jpeg_error;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ArgumentError(std::string("jpeg_dimensions: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, jpeg.data(), static_cast<unsigned long>(jpeg.size()));
    jpeg_read_header(&cinfo, TRUE);
    const std::pair<int, int> dims{static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height)};
    jpeg_destroy_decompress(&cinfo);
    return dims;
}

void fill_rect(Image& image, const BoundingBox& box, Rgb colour) {
    const auto x0 = static_cast<int>(std::max<std::int64_t>(box.x, 0));
    const auto y0 = static_cast<int>(std::max<std::int64_t>(box.y, 0));
    const auto x1 = static_cast<int>(std::min<std::int64_t>(box.x + box.length, image.width));
    const auto y1 = static_cast<int>(std::min<std::int64_t>(box.y + box.width, image.height));
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            put_pixel(image, x, y, colour);
        }
    }
}

void draw_rect(Image& image, const BoundingBox& box, Rgb colour, int thickness) {
    const auto t = static_cast<std::int64_t>(thickness);
    fill_rect(image, {box.x, box.y, box.length, std::min(t, box.width)}, colour);
    fill_rect(image, {box.x, box.y + box.width - t, box.length, std::min(t, box.width)}, colour);
    fill_rect(image, {box.x, box.y, std::min(t, box.length), box.width}, colour);
    fill_rect(image, {box.x + box.length - t, box.y, std::min(t, box.length), box.width}, colour);
}

void draw_text(Image& image, int x, int y, std::string_view text, Rgb colour, int scale) {
    int pen = x;
    for (char ch : text) {
        const auto it = std::find_if(kFont.begin(), kFont.end(), [ch](const Glyph& g) { return g.ch == ch; });
        if (it != kFont.end()) {
            for (int row = 0; row < 5; ++row) {
                for (int col = 0; col < 3; ++col) {
                    if (it->rows[row] & (4 >> col)) {
                        fill_rect(image, {pen + col * scale, y + row * scale, scale, scale}, colour);
                    }
                }
            }
        }
        pen += 4 * scale;
    }
}

Bytes annotate_frame(std::span<const std::uint8_t> jpeg, std::span<const Detection> detections,
                     bool large) {
    Image image = decode_jpeg(jpeg, true);
    for (const auto& d : detections) {
        const auto colour = class_colour(d.cls);
        draw_rect(image, d.box, colour);
        const int label_y = static_cast<int>(d.box.y) >= 14 ? static_cast<int>(d.box.y) - 12
                                                            : static_cast<int>(d.box.y) + 4;
        draw_text(image, static_cast<int>(d.box.x) + 2, label_y, class_name(d.cls), colour);
    }
    const int size = std::min({kIndicatorSize, image.width, image.height});
    fill_rect(image, {image.width - size, 0, size, size}, large ? kIndicatorRed : kIndicatorGreen);
    return encode_jpeg(image);
}

}  // namespace roadwatch
