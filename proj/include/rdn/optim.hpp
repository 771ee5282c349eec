// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "rdn/autodiff.hpp"
#include "rdn/errors.hpp"
#include "rdn/model.hpp"

namespace rdn {

struct TrainConfig {
    double lr0 = 1e-4;
    std::size_t lr_halving_period = 15;  // epochs
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_train = 8;
    std::size_t batch_eval = 4;
    std::size_t epochs = 200;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 5;  // epochs; 0 saves only at the end
    std::size_t patch_lr = 32;
    std::size_t patches_per_image = 16;
    bool augment = false;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

    void validate() const {
        if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be > 0");
        if (lr_halving_period < 1) throw ConfigError("train.lr_halving_period must be >= 1");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must be in (0, 1)");
        if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must be in (0, 1)");
        if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
        if (batch_train < 1 || batch_eval < 1) throw ConfigError("batch sizes must be >= 1");
        if (patch_lr < 1) throw ConfigError("train.patch_lr must be >= 1");
        if (patches_per_image < 1) throw ConfigError("train.patches_per_image must be >= 1");
    }
};

// Step schedule: lr0 halved once per completed period.
inline double lr_at(std::size_t epoch, const TrainConfig& cfg = {}) {
    return std::ldexp(cfg.lr0, -static_cast<int>(epoch / cfg.lr_halving_period));
}

// One bias-corrected Adam update for step t (1-based). Zeroes the gradients.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, double lr, std::uint64_t t, const TrainConfig& cfg = {}) {
    if (t == 0) throw UsageError("adam_step: step counter starts at 1");
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2, eps = cfg.adam_eps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (Parameter<T>* p : params) {
        if (!p->grad.all_finite()) throw NumericError("adam_step: non-finite gradient");
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            const double m = b1 * p->m[i] + (1.0 - b1) * g;
            const double v = b2 * p->v[i] + (1.0 - b2) * g * g;
            p->m[i] = static_cast<T>(m);
            p->v[i] = static_cast<T>(v);
            p->value[i] = static_cast<T>(p->value[i] - lr * (m / c1) / (std::sqrt(v / c2) + eps));
        }
        p->zero_grad();
    }
}

template <typename T>
void adam_step(RdnWeights<T>& weights, double lr, std::uint64_t t, const TrainConfig& cfg = {}) {
    std::vector<Parameter<T>*> params;
    weights.for_each_parameter([&](const std::string&, Parameter<T>& p) { params.push_back(&p); });
    adam_step(std::span<Parameter<T>* const>(params), lr, t, cfg);
}

}  // namespace rdn
