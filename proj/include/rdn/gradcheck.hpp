// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rdn/autodiff.hpp"
#include "rdn/model.hpp"
#include "rdn/rng.hpp"

// Central finite-difference verification of tape gradients, run in double
// precision. Each probe is a scalar function of some Parameters; the checker
// compares tape gradients against differences along single coordinates and
// along random directions.
namespace rdn {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Relative error uses max(|analytic|, |numeric|, floor) as denominator.
    double floor = 1e-4;
    std::size_t coords_per_param = 6;
    std::size_t directions_per_param = 2;
    std::uint64_t seed = 7;
    std::string fault_op;  // non-empty: corrupt this op's adjoint (self-test)
    double fault_scale = 1.5;
};

struct GradProbe {
    std::string name;
    std::vector<Parameter<double>*> params;
    std::function<Var<double>(Tape<double>&)> loss;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t comparisons = 0;
    bool passed = false;
};

inline double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheckEntry check_probe(const GradProbe& probe, const GradCheckOptions& opts) {
    std::mt19937_64 engine(derive_seed(opts.seed, probe.name));
    for (auto* p : probe.params) p->zero_grad();
    {
        Tape<double> tape;
        if (!opts.fault_op.empty()) tape.inject_fault(opts.fault_op, opts.fault_scale);
        tape.backward(probe.loss(tape));
    }
    std::vector<Tensor4<double>> analytic;
    for (auto* p : probe.params) analytic.push_back(p->grad);

    auto evaluate = [&] {
        Tape<double> tape(false);
        return probe.loss(tape).value()[0];
    };

    GradCheckEntry entry;
    entry.name = probe.name;
    const double h = opts.step;
    for (std::size_t pi = 0; pi < probe.params.size(); ++pi) {
        Tensor4<double>& value = probe.params[pi]->value;
        const Tensor4<double>& grad = analytic[pi];
        const std::size_t n = value.size();

        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        std::shuffle(coords.begin(), coords.end(), engine);
        coords.resize(std::min(n, opts.coords_per_param));
        for (std::size_t i : coords) {
            const double orig = value[i];
            value[i] = orig + h;
            const double fp = evaluate();
            value[i] = orig - h;
            const double fm = evaluate();
            value[i] = orig;
            entry.max_rel_error = std::max(entry.max_rel_error, relative_error(grad[i], (fp - fm) / (2 * h), opts.floor));
            ++entry.comparisons;
        }

        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t d = 0; d < opts.directions_per_param; ++d) {
            std::vector<double> dir(n);
            for (double& u : dir) u = normal(engine);
            const Tensor4<double> orig = value;
            for (std::size_t i = 0; i < n; ++i) value[i] = orig[i] + h * dir[i];
            const double fp = evaluate();
            for (std::size_t i = 0; i < n; ++i) value[i] = orig[i] - h * dir[i];
            const double fm = evaluate();
            value = orig;
            double projected = 0.0;
            for (std::size_t i = 0; i < n; ++i) projected += grad[i] * dir[i];
            entry.max_rel_error =
                std::max(entry.max_rel_error, relative_error(projected, (fp - fm) / (2 * h), opts.floor));
            ++entry.comparisons;
        }
    }
    for (auto* p : probe.params) p->zero_grad();
    entry.passed = entry.max_rel_error <= opts.tolerance;
    return entry;
}

namespace detail {

inline Tensor4<double> random_tensor(Shape s, std::mt19937_64& engine, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor4<double> t(s);
    for (double& v : t.values()) v = dist(engine);
    return t;
}

// Values bounded away from the ReLU kink by more than any probe step.
inline Tensor4<double> kink_free_tensor(Shape s, std::mt19937_64& engine) {
    Tensor4<double> t = random_tensor(s, engine, 0.05, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (double& v : t.values())
        if (flip(engine)) v = -v;
    return t;
}

}  // namespace detail

// Owns the tensors a suite of probes refers to.
class GradCheckSuite {
public:
    explicit GradCheckSuite(const ModelConfig& composite, std::uint64_t seed = 7) : engine_(seed) {
        using detail::kink_free_tensor;
        using detail::random_tensor;

        for (std::size_t k : {std::size_t{3}, std::size_t{1}}) {
            auto& x = keep(random_tensor({2, 3, 5, 4}, engine_));
            auto& w = keep(random_tensor({4, 3, k, k}, engine_));
            auto& b = keep(random_tensor({4, 1, 1, 1}, engine_));
            auto proj = random_tensor({2, 4, 5, 4}, engine_);
            probes_.push_back({"conv2d[" + std::to_string(k) + "x" + std::to_string(k) + "]", {&x, &w, &b},
                               [&x, &w, &b, proj](Tape<double>& t) {
                                   return weighted_sum(t, conv2d(t, t.variable(x), w, b), proj);
                               }});
        }
        {
            auto& x = keep(kink_free_tensor({2, 3, 4, 4}, engine_));
            auto proj = random_tensor({2, 3, 4, 4}, engine_);
            probes_.push_back({"relu", {&x}, [&x, proj](Tape<double>& t) {
                                   return weighted_sum(t, relu(t, t.variable(x)), proj);
                               }});
        }
        {
            auto& a = keep(random_tensor({2, 2, 3, 4}, engine_));
            auto& b = keep(random_tensor({2, 3, 3, 4}, engine_));
            auto proj = random_tensor({2, 5, 3, 4}, engine_);
            probes_.push_back({"concat_channels", {&a, &b}, [&a, &b, proj](Tape<double>& t) {
                                   return weighted_sum(t, concat_channels(t, {t.variable(a), t.variable(b)}), proj);
                               }});
        }
        {
            auto& a = keep(random_tensor({2, 3, 3, 4}, engine_));
            auto& b = keep(random_tensor({2, 3, 3, 4}, engine_));
            auto proj = random_tensor({2, 3, 3, 4}, engine_);
            probes_.push_back({"add", {&a, &b}, [&a, &b, proj](Tape<double>& t) {
                                   return weighted_sum(t, add(t, t.variable(a), t.variable(b)), proj);
                               }});
        }
        for (std::size_t r : {std::size_t{2}, std::size_t{3}}) {
            auto& x = keep(random_tensor({2, 2 * r * r, 3, 2}, engine_));
            auto proj = random_tensor({2, 2, 3 * r, 2 * r}, engine_);
            probes_.push_back({"pixel_shuffle[x" + std::to_string(r) + "]", {&x}, [&x, proj, r](Tape<double>& t) {
                                   return weighted_sum(t, pixel_shuffle(t, t.variable(x), r), proj);
                               }});
        }
        {
            auto& x = keep(random_tensor({2, 3, 4, 4}, engine_));
            auto target = x.value;
            // Keep every difference well away from the L1 kink.
            auto shift = detail::kink_free_tensor({2, 3, 4, 4}, engine_);
            for (std::size_t i = 0; i < target.size(); ++i) target[i] += shift[i];
            probes_.push_back({"l1_loss", {&x}, [&x, target](Tape<double>& t) { return l1_loss(t, t.variable(x), target); }});
            auto target2 = random_tensor({2, 3, 4, 4}, engine_);
            probes_.push_back(
                {"mse_loss", {&x}, [&x, target2](Tape<double>& t) { return mse_loss(t, t.variable(x), target2); }});
        }
        add_composite("rdn", composite);
    }

    std::vector<GradCheckEntry> run(const GradCheckOptions& opts) const {
        std::vector<GradCheckEntry> out;
        for (const auto& probe : probes_) out.push_back(check_probe(probe, opts));
        return out;
    }

    const std::vector<GradProbe>& probes() const noexcept { return probes_; }

private:
    Parameter<double>& keep(Tensor4<double> t) {
        tensors_.push_back(std::make_unique<Parameter<double>>(std::move(t)));
        return *tensors_.back();
    }

    void add_composite(const std::string& name, const ModelConfig& cfg) {
        models_.push_back(std::make_unique<RdnWeights<double>>(cfg));
        RdnWeights<double>& weights = *models_.back();
        kaiming_init(weights, engine_());
        // Non-zero biases so their gradients are exercised through every layer.
        std::uniform_real_distribution<double> bias(-0.1, 0.1);
        weights.for_each_conv([&](const std::string&, ConvParams<double>& c) {
            for (double& v : c.bias.value.values()) v = bias(engine_);
        });
        auto& x = keep(detail::random_tensor({1, cfg.in_channels, 8, 8}, engine_, 0.0, 1.0));
        auto proj = detail::random_tensor({1, cfg.in_channels, 8 * cfg.scale, 8 * cfg.scale}, engine_);
        std::vector<Parameter<double>*> params{&x};
        weights.for_each_parameter([&](const std::string&, Parameter<double>& p) { params.push_back(&p); });
        probes_.push_back({name, params, [&x, &weights, proj](Tape<double>& t) {
                               return weighted_sum(t, model_forward(t, t.variable(x), weights), proj);
                           }});
    }

    std::mt19937_64 engine_;
    std::vector<std::unique_ptr<Parameter<double>>> tensors_;
    std::vector<std::unique_ptr<RdnWeights<double>>> models_;
    std::vector<GradProbe> probes_;
};

// The composite configuration used by the gradient gate.
inline ModelConfig gradcheck_model_config() {
    ModelConfig cfg;
    cfg.scale = 2;
    cfg.num_rdb = 2;
    cfg.layers_per_rdb = 2;
    cfg.growth = 4;
    cfg.base_channels = 8;
    return cfg;
}

}  // namespace rdn
