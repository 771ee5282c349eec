// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rdn/errors.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Keys cubic convolution kernel with a = -0.5 (support [-2, 2]).
inline double keys_kernel(double x, double a = -0.5) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
    return 0.0;
}

namespace detail {

struct Tap {
    std::size_t index;
    double weight;
};

// Normalized taps for each output sample of an integer-factor downsample.
// The kernel is stretched by `factor` (antialiasing) and out-of-range source
// positions are clamped to the border.
inline std::vector<std::vector<Tap>> downsample_taps(std::size_t in_size, std::size_t factor) {
    const std::size_t out_size = in_size / factor;
    const double scale = static_cast<double>(factor);
    const double support = 2.0 * scale;
    std::vector<std::vector<Tap>> taps(out_size);
    for (std::size_t i = 0; i < out_size; ++i) {
        const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
        const auto lo = static_cast<std::ptrdiff_t>(std::ceil(center - support));
        const auto hi = static_cast<std::ptrdiff_t>(std::floor(center + support));
        double total = 0.0;
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
            const double wgt = keys_kernel((static_cast<double>(j) - center) / scale);
            if (wgt == 0.0) continue;
            const auto idx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(in_size) - 1));
            auto it = std::find_if(taps[i].begin(), taps[i].end(), [idx](const Tap& t) { return t.index == idx; });
            if (it == taps[i].end()) {
                taps[i].push_back({idx, wgt});
            } else {
                it->weight += wgt;
            }
            total += wgt;
        }
        for (Tap& t : taps[i]) t.weight /= total;
    }
    return taps;
}

}  // namespace detail

// Separable antialiased bicubic downsampling by an integer factor. Height and
// width must already be multiples of `factor`. Accumulates in double and
// clamps the result to [0, 1].
template <typename T>
Tensor4<T> bicubic_downsample(const Tensor4<T>& img, std::size_t factor) {
    const Shape& s = img.shape();
    if (factor == 0 || s.h % factor != 0 || s.w % factor != 0) {
        throw UsageError("bicubic_downsample: size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " is not divisible by " + std::to_string(factor) + " (crop first)");
    }
    const std::size_t oh = s.h / factor, ow = s.w / factor;
    const auto col_taps = detail::downsample_taps(s.w, factor);
    const auto row_taps = detail::downsample_taps(s.h, factor);
    Tensor4<T> out({s.n, s.c, oh, ow});
    std::vector<double> horiz(s.h * ow);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* plane = img.plane_ptr(n, c);
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (const auto& t : col_taps[x]) acc += t.weight * static_cast<double>(plane[y * s.w + t.index]);
                    horiz[y * ow + x] = acc;
                }
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (const auto& t : row_taps[y]) acc += t.weight * horiz[t.index * ow + x];
                    out.at(n, c, y, x) = static_cast<T>(std::clamp(acc, 0.0, 1.0));
                }
        }
    }
    return out;
}

}  // namespace rdn
