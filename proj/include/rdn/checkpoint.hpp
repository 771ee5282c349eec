// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "rdn/config.hpp"
#include "rdn/errors.hpp"
#include "rdn/model.hpp"
#include "rdn/optim.hpp"

// Checkpoint file layout (all integers little-endian):
//
//   "URDN"                     4 bytes magic
//   version                    u32
//   settings length            u32, then that many bytes of UTF-8
//                              "key=value\n" lines (model.* and train.*)
//   tensor count               u32
//   per tensor:
//     name length              u32, then UTF-8 name
//     shape                    4 x u32 (n, c, h, w)
//     value, m, v              3 x numel IEEE-754 binary32
//   epoch                      u64
//   step                       u64
//   rng state                  u64
namespace rdn {

inline constexpr char kCheckpointMagic[4] = {'U', 'R', 'D', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    Tensor4<float> value;
    Tensor4<float> m;
    Tensor4<float> v;
};

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::uint64_t epoch = 0;      // completed epochs
    std::uint64_t step = 0;       // completed optimizer steps
    std::uint64_t rng_state = 0;  // shuffle stream state
    std::vector<CheckpointTensor> tensors;
};

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void f32s(const Tensor4<float>& t) {
        for (float f : t.values()) u32(std::bit_cast<std::uint32_t>(f));
    }
    void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s);
    }
    const std::vector<char>& bytes() const noexcept { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<char>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw CheckpointTruncatedError("checkpoint '" + path_ + "' is truncated at byte " + std::to_string(pos_));
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::string str() { return raw(u32()); }
    Tensor4<float> f32s(const Shape& shape) {
        need(shape.numel() * 4);
        Tensor4<float> t(shape);
        for (float& f : t.values()) f = std::bit_cast<float>(u32());
        return t;
    }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

private:
    const std::vector<char>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
    detail::ByteWriter w;
    w.raw(std::string(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    w.str(model_settings(ckpt.model) + train_settings(ckpt.train));
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.str(t.name);
        const Shape& s = t.value.shape();
        for (std::size_t d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
        w.f32s(t.value);
        w.f32s(t.m);
        w.f32s(t.v);
    }
    w.u64(ckpt.epoch);
    w.u64(ckpt.step);
    w.u64(ckpt.rng_state);
    return w.bytes();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& path = "<memory>") {
    detail::ByteReader r(bytes, path);
    if (r.raw(4) != std::string(kCheckpointMagic, 4)) throw CheckpointError("'" + path + "' is not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                                     ", expected " + std::to_string(kCheckpointVersion));
    }
    RunConfig cfg;
    apply_settings(cfg, r.str(), path);
    Checkpoint ckpt;
    ckpt.model = cfg.model;
    ckpt.train = cfg.train;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = r.str();
        Shape s;
        s.n = r.u32();
        s.c = r.u32();
        s.h = r.u32();
        s.w = r.u32();
        for (std::size_t d : {s.n, s.c, s.h, s.w}) {
            if (d == 0 || d > (std::size_t{1} << 20)) {
                throw CheckpointError("checkpoint '" + path + "': tensor '" + t.name + "' has invalid shape " + s.str());
            }
        }
        t.value = r.f32s(s);
        t.m = r.f32s(s);
        t.v = r.f32s(s);
        ckpt.tensors.push_back(std::move(t));
    }
    ckpt.epoch = r.u64();
    ckpt.step = r.u64();
    ckpt.rng_state = r.u64();
    if (!r.at_end()) throw CheckpointError("checkpoint '" + path + "' has trailing bytes");
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint '" + tmp + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to checkpoint '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path);
}

inline std::vector<CheckpointTensor> snapshot_parameters(const RdnWeights<float>& weights) {
    std::vector<CheckpointTensor> out;
    weights.for_each_parameter([&](const std::string& name, const Parameter<float>& p) {
        out.push_back({name, p.value, p.m, p.v});
    });
    return out;
}

// Copies checkpoint tensors into `weights`, which must have been built from
// a compatible configuration. Reports the first tensor whose name or shape
// disagrees.
inline void restore_parameters(const Checkpoint& ckpt, RdnWeights<float>& weights) {
    auto named = weights.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, param] = named[i];
        if (i >= ckpt.tensors.size()) throw ShapeMismatchError(name, "missing from checkpoint");
        const CheckpointTensor& t = ckpt.tensors[i];
        if (t.name != name) throw ShapeMismatchError(name, "checkpoint has '" + t.name + "' in its place");
        if (!(t.value.shape() == param->shape())) {
            throw ShapeMismatchError(name, "checkpoint shape " + t.value.shape().str() + ", model expects " +
                                               param->shape().str());
        }
    }
    if (ckpt.tensors.size() > named.size()) {
        throw ShapeMismatchError(ckpt.tensors[named.size()].name, "not present in the model");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        Parameter<float>& p = *named[i].second;
        p.value = ckpt.tensors[i].value;
        p.m = ckpt.tensors[i].m;
        p.v = ckpt.tensors[i].v;
        p.zero_grad();
    }
}

}  // namespace rdn
