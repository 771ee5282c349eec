// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rdn/errors.hpp"

namespace rdn {

struct Shape {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t numel() const noexcept { return n * c * h * w; }
    std::size_t plane() const noexcept { return h * w; }
    std::size_t image() const noexcept { return c * h * w; }

    friend bool operator==(const Shape&, const Shape&) = default;

    std::string str() const {
        std::ostringstream os;
        os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
        return os.str();
    }
};

// Dense (batch, channel, row, col) array, row-major.
template <typename T>
class Tensor4 {
public:
    using value_type = T;

    Tensor4() = default;

    explicit Tensor4(Shape shape, T fill = T(0)) : shape_(validated(shape)), data_(shape_.numel(), fill) {}

    Tensor4(Shape shape, std::vector<T> values) : shape_(validated(shape)), data_(std::move(values)) {
        if (data_.size() != shape_.numel()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_.str());
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept { return data_[offset(n, c, y, x)]; }
    const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[offset(n, c, y, x)];
    }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T* plane_ptr(std::size_t n, std::size_t c) noexcept { return data_.data() + offset(n, c, 0, 0); }
    const T* plane_ptr(std::size_t n, std::size_t c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor4<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor4<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor4& a, const Tensor4& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    static Shape validated(Shape s) {
        if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
            throw DimensionError("tensor dimensions must be >= 1, got " + s.str());
        }
        return s;
    }

    Shape shape_{};
    std::vector<T> data_;
};

// Bitwise comparison of the underlying storage, so NaN payloads and signed
// zeros count as differences.
template <typename T>
bool bitwise_equal(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (!(a.shape() == b.shape())) return false;
    return std::equal(a.values().begin(), a.values().end(), b.values().begin(), [](T x, T y) {
        return std::memcmp(&x, &y, sizeof(T)) == 0;
    });
}

// Channels [begin, begin + count) of every batch item.
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& t, std::size_t begin, std::size_t count) {
    const Shape& s = t.shape();
    if (count == 0 || begin + count > s.c) {
        throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") outside " + std::to_string(s.c) + " channels");
    }
    Tensor4<T> out({s.n, count, s.h, s.w});
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n) {
        std::copy_n(t.plane_ptr(n, begin), count * plane, out.plane_ptr(n, 0));
    }
    return out;
}

// Inverse of the depth-to-space rearrangement used by pixel_shuffle:
// out(n, oc*r*r + dy*r + dx, y, x) = in(n, oc, r*y + dy, r*x + dx).
template <typename T>
Tensor4<T> pixel_unshuffle(const Tensor4<T>& t, std::size_t r) {
    const Shape& s = t.shape();
    if (r == 0 || s.h % r != 0 || s.w % r != 0) {
        throw DimensionError("pixel_unshuffle: spatial size " + s.str() + " not divisible by " + std::to_string(r));
    }
    const std::size_t oh = s.h / r, ow = s.w / r;
    Tensor4<T> out({s.n, s.c * r * r, oh, ow});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t dy = 0; dy < r; ++dy)
                for (std::size_t dx = 0; dx < r; ++dx) {
                    const std::size_t oc = c * r * r + dy * r + dx;
                    for (std::size_t y = 0; y < oh; ++y)
                        for (std::size_t x = 0; x < ow; ++x) out.at(n, oc, y, x) = t.at(n, c, r * y + dy, r * x + dx);
                }
    return out;
}

// Stack single-item tensors of equal shape along the batch axis.
template <typename T>
Tensor4<T> stack_batch(std::span<const Tensor4<T>> items) {
    if (items.empty()) throw UsageError("stack_batch: no items");
    const Shape first = items.front().shape();
    if (first.n != 1) throw DimensionError("stack_batch: items must have batch size 1, got " + first.str());
    Tensor4<T> out({items.size(), first.c, first.h, first.w});
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!(items[i].shape() == first)) {
            throw DimensionError("stack_batch: item " + std::to_string(i) + " has shape " + items[i].shape().str() +
                                 ", expected " + first.str());
        }
        std::copy(items[i].values().begin(), items[i].values().end(), out.data() + i * first.image());
    }
    return out;
}

template <typename T>
Tensor4<T> batch_item(const Tensor4<T>& t, std::size_t index) {
    const Shape& s = t.shape();
    if (index >= s.n) throw DimensionError("batch_item: index out of range");
    Tensor4<T> out({1, s.c, s.h, s.w});
    std::copy_n(t.data() + index * s.image(), s.image(), out.data());
    return out;
}

// Spatial crop [y0, y0 + h) x [x0, x0 + w) of every channel.
template <typename T>
Tensor4<T> crop(const Tensor4<T>& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    const Shape& s = t.shape();
    if (h == 0 || w == 0 || y0 + h > s.h || x0 + w > s.w) {
        throw DimensionError("crop: window exceeds tensor " + s.str());
    }
    Tensor4<T> out({s.n, s.c, h, w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < h; ++y)
                std::copy_n(&t.at(n, c, y0 + y, x0), w, &out.at(n, c, y, 0));
    return out;
}

template <typename T>
Tensor4<T> clamp01(Tensor4<T> t) {
    for (T& v : t.values()) v = std::clamp(v, T(0), T(1));
    return t;
}

}  // namespace rdn
