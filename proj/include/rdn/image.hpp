// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "rdn/errors.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

using Image = Tensor4<float>;  // (1, 3, H, W), values in [0, 1]

// 8-bit RGB or grayscale PNG -> (1, 3, H, W) with values byte/255.
// Grayscale is replicated across the three channels.
inline Image load_image(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError("cannot read PNG '" + path + "': " + png.message);
    }
    if (png.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&png);
        throw IoError("unsupported PNG '" + path + "': only 8-bit images are accepted");
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        throw IoError("cannot decode PNG '" + path + "': " + png.message);
    }
    const std::size_t h = png.height, w = png.width;
    Image img({1, 3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(0, c, y, x) = bytes[(y * w + x) * 3 + c] / 255.0f;
    return img;
}

inline std::uint8_t to_byte(float v) {
    const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

// Writes the first batch item as 8-bit RGB, clamping to [0, 1].
inline void save_image(const std::string& path, const Image& img) {
    const Shape& s = img.shape();
    if (s.c != 3) throw DimensionError("save_image: expected 3 channels, got shape " + s.str());
    std::vector<std::uint8_t> bytes(s.h * s.w * 3);
    for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
            for (std::size_t c = 0; c < 3; ++c) bytes[(y * s.w + x) * 3 + c] = to_byte(img.at(0, c, y, x));
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(s.w);
    png.height = static_cast<png_uint_32>(s.h);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        throw IoError("cannot write PNG '" + path + "': " + png.message);
    }
}

}  // namespace rdn
