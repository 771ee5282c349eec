// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdn/autodiff.hpp"
#include "rdn/errors.hpp"
#include "rdn/rng.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Switches that remove one connection family each, for ablation runs.
struct Ablation {
    bool disable_global_residual = false;
    bool disable_dense_connections = false;
    bool disable_local_residual = false;

    friend bool operator==(const Ablation&, const Ablation&) = default;

    std::string label() const {
        std::string out;
        auto append = [&out](const char* s) { out += out.empty() ? s : std::string("+") + s; };
        if (disable_global_residual) append("no-grl");
        if (disable_dense_connections) append("no-ldc");
        if (disable_local_residual) append("no-lrl");
        return out.empty() ? "baseline" : out;
    }
};

struct ModelConfig {
    std::size_t scale = 2;
    std::size_t num_rdb = 4;         // D
    std::size_t layers_per_rdb = 3;  // C
    std::size_t growth = 32;         // G
    std::size_t base_channels = 64;  // G0
    std::size_t in_channels = 3;
    Ablation ablation{};

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    void validate() const {
        if (scale < 2 || scale > 4) throw ConfigError("model.scale must be 2, 3 or 4, got " + std::to_string(scale));
        if (num_rdb < 1) throw ConfigError("model.num_rdb must be >= 1");
        if (layers_per_rdb < 1) throw ConfigError("model.layers_per_rdb must be >= 1");
        if (growth < 1) throw ConfigError("model.growth must be >= 1");
        if (base_channels < 1) throw ConfigError("model.base_channels must be >= 1");
        if (in_channels != 3) throw ConfigError("model.in_channels must be 3");
    }

    // Input channels of dense layer l (0-based) inside an RDB.
    std::size_t dense_layer_inputs(std::size_t l) const {
        if (ablation.disable_dense_connections) return l == 0 ? base_channels : growth;
        return base_channels + l * growth;
    }
    std::size_t fusion_inputs() const {
        return ablation.disable_dense_connections ? growth : base_channels + layers_per_rdb * growth;
    }
    // (channels emitted by each pre-shuffle conv, shuffle factor) per stage.
    std::vector<std::pair<std::size_t, std::size_t>> upscale_stages() const {
        if (scale == 4) return {{base_channels * 4, 2}, {base_channels * 4, 2}};
        return {{base_channels * scale * scale, scale}};
    }
};

template <typename T>
struct ConvParams {
    Parameter<T> weight;
    Parameter<T> bias;

    ConvParams() = default;
    ConvParams(std::size_t cout, std::size_t cin, std::size_t k) : weight(Shape{cout, cin, k, k}), bias(Shape{cout, 1, 1, 1}) {}

    std::size_t fan_in() const { return weight.shape().c * weight.shape().h * weight.shape().w; }
};

template <typename T>
struct RdbWeights {
    std::vector<ConvParams<T>> layers;
    ConvParams<T> lff;
};

// Every learned convolution of the network, addressable by a stable name.
// Canonical order (used by checkpoints and initialization):
//   sfe.conv1, sfe.conv2, rdb[d].layer[l]..., rdb[d].lff, gff.conv1x1,
//   gff.conv3x3, up.pre_shuffle[s], out.conv; each with .weight and .bias.
template <typename T>
class RdnWeights {
public:
    explicit RdnWeights(const ModelConfig& config) : config_(config) {
        config_.validate();
        const std::size_t g0 = config_.base_channels, g = config_.growth;
        sfe1 = ConvParams<T>(g0, config_.in_channels, 3);
        sfe2 = ConvParams<T>(g0, g0, 3);
        rdb.resize(config_.num_rdb);
        for (auto& block : rdb) {
            for (std::size_t l = 0; l < config_.layers_per_rdb; ++l)
                block.layers.emplace_back(g, config_.dense_layer_inputs(l), 3);
            block.lff = ConvParams<T>(g0, config_.fusion_inputs(), 1);
        }
        gff1x1 = ConvParams<T>(g0, config_.num_rdb * g0, 1);
        gff3x3 = ConvParams<T>(g0, g0, 3);
        for (const auto& [channels, factor] : config_.upscale_stages()) up.emplace_back(channels, g0, 3);
        out = ConvParams<T>(config_.in_channels, g0, 3);
    }

    // Parameters hold references into this object while a tape is alive.
    RdnWeights(const RdnWeights&) = default;
    RdnWeights& operator=(const RdnWeights&) = default;

    const ModelConfig& config() const noexcept { return config_; }

    template <typename Fn>
    void for_each_conv(Fn&& fn) {
        visit_convs(*this, fn);
    }
    template <typename Fn>
    void for_each_conv(Fn&& fn) const {
        visit_convs(*this, fn);
    }

    // fn(name, Parameter&) in canonical order.
    template <typename Fn>
    void for_each_parameter(Fn&& fn) {
        for_each_conv([&](const std::string& name, auto& conv) {
            fn(name + ".weight", conv.weight);
            fn(name + ".bias", conv.bias);
        });
    }
    template <typename Fn>
    void for_each_parameter(Fn&& fn) const {
        for_each_conv([&](const std::string& name, const auto& conv) {
            fn(name + ".weight", conv.weight);
            fn(name + ".bias", conv.bias);
        });
    }

    std::vector<std::pair<std::string, Parameter<T>*>> named_parameters() {
        std::vector<std::pair<std::string, Parameter<T>*>> out_list;
        for_each_parameter([&](const std::string& name, Parameter<T>& p) { out_list.emplace_back(name, &p); });
        return out_list;
    }

    Parameter<T>& parameter(const std::string& name) {
        Parameter<T>* found = nullptr;
        for_each_parameter([&](const std::string& n, Parameter<T>& p) {
            if (n == name) found = &p;
        });
        if (!found) throw UsageError("no parameter named '" + name + "'");
        return *found;
    }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for_each_parameter([&](const std::string&, const Parameter<T>& p) { total += p.value.size(); });
        return total;
    }

    void zero_grad() {
        for_each_parameter([](const std::string&, Parameter<T>& p) { p.zero_grad(); });
    }

    ConvParams<T> sfe1;
    ConvParams<T> sfe2;
    std::vector<RdbWeights<T>> rdb;
    ConvParams<T> gff1x1;
    ConvParams<T> gff3x3;
    std::vector<ConvParams<T>> up;
    ConvParams<T> out;

private:
    template <typename Self, typename Fn>
    static void visit_convs(Self& self, Fn& fn) {
        fn(std::string("sfe.conv1"), self.sfe1);
        fn(std::string("sfe.conv2"), self.sfe2);
        for (std::size_t d = 0; d < self.rdb.size(); ++d) {
            const std::string prefix = "rdb[" + std::to_string(d) + "]";
            for (std::size_t l = 0; l < self.rdb[d].layers.size(); ++l)
                fn(prefix + ".layer[" + std::to_string(l) + "]", self.rdb[d].layers[l]);
            fn(prefix + ".lff", self.rdb[d].lff);
        }
        fn(std::string("gff.conv1x1"), self.gff1x1);
        fn(std::string("gff.conv3x3"), self.gff3x3);
        for (std::size_t s = 0; s < self.up.size(); ++s) fn("up.pre_shuffle[" + std::to_string(s) + "]", self.up[s]);
        fn(std::string("out.conv"), self.out);
    }

    ModelConfig config_;
};

// He-normal weights, N(0, 2 / fan_in) with fan_in = cin * k * k; zero biases.
template <typename T>
void kaiming_init(RdnWeights<T>& weights, std::uint64_t seed) {
    std::mt19937_64 engine(derive_seed(seed, "kaiming"));
    weights.for_each_conv([&](const std::string&, ConvParams<T>& conv) {
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(conv.fan_in())));
        for (T& v : conv.weight.value.values()) v = static_cast<T>(normal(engine));
        conv.bias.value.fill(T(0));
    });
}

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, ConvParams<T>& conv) {
    return conv2d(tape, input, conv.weight, conv.bias);
}

template <typename T>
struct ShallowFeatures {
    Var<T> f_minus1;  // feeds global residual learning
    Var<T> f0;        // feeds the first RDB
};

template <typename T>
ShallowFeatures<T> sfe_forward(Tape<T>& tape, const Var<T>& img_lr, RdnWeights<T>& weights) {
    if (img_lr.shape().c != weights.config().in_channels) {
        throw DimensionError("sfe_forward: image has " + std::to_string(img_lr.shape().c) + " channels, expected " +
                             std::to_string(weights.config().in_channels));
    }
    Var<T> f_minus1 = conv2d(tape, img_lr, weights.sfe1);
    Var<T> f0 = conv2d(tape, f_minus1, weights.sfe2);
    return {f_minus1, f0};
}

template <typename T>
Var<T> rdb_forward(Tape<T>& tape, const Var<T>& f_prev, RdbWeights<T>& block, const Ablation& ablation) {
    std::vector<Var<T>> features{f_prev};
    for (auto& layer : block.layers) {
        Var<T> in = ablation.disable_dense_connections
                        ? features.back()
                        : (features.size() == 1 ? features.front() : concat_channels(tape, std::span<const Var<T>>(features)));
        features.push_back(relu(tape, conv2d(tape, in, layer)));
    }
    Var<T> fusion_in = ablation.disable_dense_connections ? features.back()
                                                          : concat_channels(tape, std::span<const Var<T>>(features));
    Var<T> fused = conv2d(tape, fusion_in, block.lff);
    if (ablation.disable_local_residual) return fused;
    return add(tape, fused, f_prev);
}

template <typename T>
Var<T> dff_forward(Tape<T>& tape, const Var<T>& f_minus1, std::span<const Var<T>> rdb_outputs, RdnWeights<T>& weights) {
    if (rdb_outputs.size() != weights.config().num_rdb) {
        throw UsageError("dff_forward: expected " + std::to_string(weights.config().num_rdb) + " RDB outputs, got " +
                         std::to_string(rdb_outputs.size()));
    }
    Var<T> fused = rdb_outputs.size() == 1 ? rdb_outputs.front() : concat_channels(tape, rdb_outputs);
    Var<T> gf = conv2d(tape, conv2d(tape, fused, weights.gff1x1), weights.gff3x3);
    if (weights.config().ablation.disable_global_residual) return gf;
    return add(tape, f_minus1, gf);
}

// Sub-pixel upscaling followed by the RGB projection. Output is unclamped.
template <typename T>
Var<T> upscale_forward(Tape<T>& tape, const Var<T>& f_dff, RdnWeights<T>& weights) {
    const auto stages = weights.config().upscale_stages();
    if (stages.size() != weights.up.size()) throw ConfigError("upscale_forward: weights do not match scale");
    Var<T> x = f_dff;
    for (std::size_t s = 0; s < stages.size(); ++s) x = pixel_shuffle(tape, conv2d(tape, x, weights.up[s]), stages[s].second);
    return conv2d(tape, x, weights.out);
}

template <typename T>
Var<T> model_forward(Tape<T>& tape, const Var<T>& img_lr, RdnWeights<T>& weights) {
    const ModelConfig& cfg = weights.config();
    ShallowFeatures<T> sf = sfe_forward(tape, img_lr, weights);
    std::vector<Var<T>> outputs;
    outputs.reserve(cfg.num_rdb);
    Var<T> x = sf.f0;
    for (auto& block : weights.rdb) {
        x = rdb_forward(tape, x, block, cfg.ablation);
        outputs.push_back(x);
    }
    Var<T> f_dff = dff_forward(tape, sf.f_minus1, std::span<const Var<T>>(outputs), weights);
    return upscale_forward(tape, f_dff, weights);
}

// Inference without recording; the result is not clamped.
template <typename T>
Tensor4<T> predict(const Tensor4<T>& img_lr, RdnWeights<T>& weights) {
    Tape<T> tape(false);
    return model_forward(tape, tape.constant(img_lr), weights).value();
}

}  // namespace rdn
