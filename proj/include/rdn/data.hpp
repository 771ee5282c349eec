// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdn/errors.hpp"
#include "rdn/image.hpp"
#include "rdn/resample.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Largest centered crop whose sides are multiples of `factor`.
inline Image center_crop_to_multiple(const Image& img, std::size_t factor) {
    const Shape& s = img.shape();
    const std::size_t h = s.h - s.h % factor, w = s.w - s.w % factor;
    if (h == 0 || w == 0) {
        throw UsageError("image " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is smaller than scale " +
                         std::to_string(factor));
    }
    if (h == s.h && w == s.w) return img;
    return crop(img, (s.h - h) / 2, (s.w - w) / 2, h, w);
}

struct ImagePair {
    Image hr;  // (1, 3, H, W), H and W multiples of scale
    Image lr;  // (1, 3, H / scale, W / scale)
    std::size_t scale = 2;
    std::string source;
};

inline ImagePair make_image_pair(const Image& hr_full, std::size_t scale, std::string source = {}) {
    ImagePair pair;
    pair.hr = center_crop_to_multiple(hr_full, scale);
    pair.lr = bicubic_downsample(pair.hr, scale);
    pair.scale = scale;
    pair.source = std::move(source);
    return pair;
}

enum class DatasetRole { train, val, test };

struct DatasetManifest {
    std::string name;
    std::vector<std::string> paths;  // sorted, unique
    DatasetRole role = DatasetRole::test;
};

// One path per line, '#' starts a comment, blank lines ignored. Relative
// paths resolve against the manifest's directory.
inline DatasetManifest load_manifest(const std::string& manifest_path, DatasetRole role = DatasetRole::test) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
    namespace fs = std::filesystem;
    const fs::path base = fs::path(manifest_path).parent_path();
    DatasetManifest manifest;
    manifest.name = fs::path(manifest_path).stem().string();
    manifest.role = role;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        fs::path p = line.substr(first, last - first + 1);
        if (p.is_relative()) p = base / p;
        p = p.lexically_normal();
        if (!fs::exists(p)) throw IoError("manifest '" + manifest_path + "' lists missing file '" + p.string() + "'");
        manifest.paths.push_back(p.string());
    }
    std::sort(manifest.paths.begin(), manifest.paths.end());
    if (auto dup = std::adjacent_find(manifest.paths.begin(), manifest.paths.end()); dup != manifest.paths.end()) {
        throw ConfigError("manifest '" + manifest_path + "' lists '" + *dup + "' more than once");
    }
    if (manifest.paths.empty()) throw ConfigError("manifest '" + manifest_path + "' is empty");
    return manifest;
}

inline std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, std::size_t scale) {
    std::vector<ImagePair> pairs;
    pairs.reserve(manifest.paths.size());
    for (const auto& path : manifest.paths) pairs.push_back(make_image_pair(load_image(path), scale, path));
    return pairs;
}

struct Patch {
    Image lr;  // (1, 3, p, p)
    Image hr;  // (1, 3, r*p, r*p)
    std::size_t lr_y = 0;
    std::size_t lr_x = 0;
};

namespace detail {

// One of the eight flips/rotations of the square, applied per channel.
inline Image dihedral(const Image& img, unsigned mode) {
    const Shape& s = img.shape();
    const bool transpose = mode & 4u;
    Image out({s.n, s.c, transpose ? s.w : s.h, transpose ? s.h : s.w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t x = 0; x < s.w; ++x) {
                    std::size_t sy = (mode & 1u) ? s.h - 1 - y : y;
                    std::size_t sx = (mode & 2u) ? s.w - 1 - x : x;
                    if (transpose) {
                        out.at(n, c, x, y) = img.at(n, c, sy, sx);
                    } else {
                        out.at(n, c, y, x) = img.at(n, c, sy, sx);
                    }
                }
    return out;
}

}  // namespace detail

// Uniformly random aligned crops: an LR window at (y, x) pairs with the HR
// window at (r*y, r*x). Deterministic in `seed`.
inline std::vector<Patch> extract_patches(const ImagePair& pair, std::size_t patch_lr, std::size_t count,
                                          std::uint64_t seed, bool augment = false) {
    const Shape& ls = pair.lr.shape();
    if (patch_lr == 0 || patch_lr > ls.h || patch_lr > ls.w) {
        throw UsageError("extract_patches: patch " + std::to_string(patch_lr) + " exceeds LR image " +
                         std::to_string(ls.h) + "x" + std::to_string(ls.w) + " of '" + pair.source + "'");
    }
    const std::size_t r = pair.scale;
    std::mt19937_64 engine(seed);
    std::uniform_int_distribution<std::size_t> pick_y(0, ls.h - patch_lr);
    std::uniform_int_distribution<std::size_t> pick_x(0, ls.w - patch_lr);
    std::uniform_int_distribution<unsigned> pick_mode(0, 7);
    std::vector<Patch> patches;
    patches.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Patch p;
        p.lr_y = pick_y(engine);
        p.lr_x = pick_x(engine);
        p.lr = crop(pair.lr, p.lr_y, p.lr_x, patch_lr, patch_lr);
        p.hr = crop(pair.hr, r * p.lr_y, r * p.lr_x, r * patch_lr, r * patch_lr);
        if (augment) {
            const unsigned mode = pick_mode(engine);
            p.lr = detail::dihedral(p.lr, mode);
            p.hr = detail::dihedral(p.hr, mode);
        }
        patches.push_back(std::move(p));
    }
    return patches;
}

struct Batch {
    Image lr;  // (b, 3, p, p)
    Image hr;  // (b, 3, r*p, r*p)
    std::vector<std::size_t> indices;  // positions in the patch list
};

// Shuffled batches; the last partial batch is kept.
inline std::vector<Batch> make_batches(std::span<const Patch> patches, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw UsageError("make_batches: batch size must be >= 1");
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 engine(seed);
    std::shuffle(order.begin(), order.end(), engine);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::vector<Image> lr, hr;
        Batch b;
        for (std::size_t i = start; i < end; ++i) {
            lr.push_back(patches[order[i]].lr);
            hr.push_back(patches[order[i]].hr);
            b.indices.push_back(order[i]);
        }
        b.lr = stack_batch(std::span<const Image>(lr));
        b.hr = stack_batch(std::span<const Image>(hr));
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace rdn
