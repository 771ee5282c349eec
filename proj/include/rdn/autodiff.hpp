// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdn/detail/gemm.hpp"
#include "rdn/errors.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// A learned tensor with its gradient and Adam moments. grad/m/v always have
// the value's shape.
template <typename T>
struct Parameter {
    Tensor4<T> value;
    Tensor4<T> grad;
    Tensor4<T> m;
    Tensor4<T> v;

    Parameter() = default;
    explicit Parameter(Shape shape) : value(shape), grad(shape), m(shape), v(shape) {}
    explicit Parameter(Tensor4<T> init)
        : value(std::move(init)), grad(value.shape()), m(value.shape()), v(value.shape()) {}

    const Shape& shape() const noexcept { return value.shape(); }
    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    const void* owner = nullptr;

    Tensor4<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor4<T>(value.shape());
        return grad;
    }
};

}  // namespace detail

// Handle to a value produced on a Tape. Cheap to copy.
template <typename T>
class Var {
public:
    Var() = default;

    const Tensor4<T>& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    explicit operator bool() const noexcept { return static_cast<bool>(node_); }

private:
    friend class Tape<T>;
    explicit Var(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node<T>> node_;
};

// Records forward operations in execution order and replays their adjoints
// in exact reverse order. With recording disabled the ops only compute
// values and nothing is retained.
template <typename T>
class Tape {
public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return entries_.size(); }

    // Scale the upstream gradient of every entry named `op` during backward.
    // Only used to prove that the gradient checker catches a broken adjoint.
    void inject_fault(std::string op, T scale) {
        fault_op_ = std::move(op);
        fault_scale_ = scale;
    }

    Var<T> constant(Tensor4<T> value) { return make(std::move(value), false); }

    // Leaf whose gradient is accumulated into `param.grad` by backward().
    Var<T> variable(Parameter<T>& param) {
        Var<T> out = make(param.value, recording_);
        if (recording_) {
            NodePtr node = out.node_;
            record("leaf", node, [node, &param] {
                const auto& g = node->grad;
                for (std::size_t i = 0; i < g.size(); ++i) param.grad[i] += g[i];
            });
        }
        return out;
    }

    // Builds an op output. `requires_grad` is forced off when not recording.
    Var<T> make(Tensor4<T> value, bool requires_grad) {
        auto node = std::make_shared<detail::Node<T>>();
        node->value = std::move(value);
        node->requires_grad = requires_grad && recording_;
        node->owner = this;
        return Var<T>(std::move(node));
    }

    void record(std::string op, NodePtr output, std::function<void()> backward) {
        entries_.push_back(Entry{std::move(op), std::move(output), std::move(backward)});
    }

    static NodePtr node(const Var<T>& v) { return v.node_; }

    void backward(const Var<T>& loss) {
        if (!loss) throw UsageError("backward: null loss");
        if (loss.node_->owner != this) throw UsageError("backward: loss was not produced on this tape");
        if (loss.value().size() != 1) {
            throw UsageError("backward: loss must be a scalar, got shape " + loss.shape().str());
        }
        if (entries_.empty()) throw UsageError("backward: no recorded forward pass on this tape");
        if (!std::isfinite(loss.value()[0])) throw NumericError("backward: loss is not finite");
        if (loss.requires_grad()) {
            loss.node_->grad_buffer()[0] = T(1);
            for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
                if (it->output->grad.empty()) continue;
                if (!fault_op_.empty() && it->op == fault_op_) {
                    for (T& g : it->output->grad.values()) g *= fault_scale_;
                }
                it->backward();
            }
        }
        entries_.clear();
    }

    void clear() { entries_.clear(); }

private:
    friend class Var<T>;

    struct Entry {
        std::string op;
        NodePtr output;
        std::function<void()> backward;
    };

    bool recording_;
    std::vector<Entry> entries_;
    std::string fault_op_;
    T fault_scale_ = T(1);
};

namespace detail {

template <typename T>
void require_finite(const Tensor4<T>& t, const char* op, const char* operand) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite values in " + operand);
}

// Columns x with 0 <= x + dx < w, as [first, last).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_columns(std::size_t w, std::ptrdiff_t dx) {
    const auto sw = static_cast<std::ptrdiff_t>(w);
    return {std::clamp<std::ptrdiff_t>(-dx, 0, sw), std::clamp<std::ptrdiff_t>(sw - dx, 0, sw)};
}

// Rows (ci, ky, kx) of the zero-padded patch matrix for one batch item.
template <typename T>
void im2col(const T* in, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, T* col) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* plane = in + ci * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = col + ((ci * k + ky) * k + kx) * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    T* dst = row + y * w;
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill_n(dst, w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(sy) * w;
                    const auto [x0, x1] = valid_columns(w, dx);
                    std::fill(dst, dst + x0, T(0));
                    std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
                    std::fill(dst + x1, dst + w, T(0));
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patch-matrix gradients back onto the image.
template <typename T>
void col2im_add(const T* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, T* in) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        T* plane = in + ci * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = col + ((ci * k + ky) * k + kx) * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const T* src = row + y * w;
                    T* dst = plane + static_cast<std::size_t>(sy) * w;
                    const auto [x0, x1] = valid_columns(w, dx);
                    for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x + dx] += src[x];
                }
            }
        }
    }
}

}  // namespace detail

// Stride-1 cross-correlation with "same" zero padding, kernel 1x1 or 3x3.
// weight: (cout, cin, k, k); bias: (cout, 1, 1, 1).
template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, Parameter<T>& weight, Parameter<T>& bias) {
    const Shape is = input.shape();
    const Shape ws = weight.shape();
    if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
        throw DimensionError("conv2d: weight kernel must be 1x1 or 3x3, got " + ws.str());
    }
    if (ws.c != is.c) {
        throw DimensionError("conv2d: input has " + std::to_string(is.c) + " channels but weight expects " +
                             std::to_string(ws.c));
    }
    if (!(bias.shape() == Shape{ws.n, 1, 1, 1})) {
        throw DimensionError("conv2d: bias shape " + bias.shape().str() + " does not match " +
                             std::to_string(ws.n) + " output channels");
    }
    detail::require_finite(input.value(), "conv2d", "input");

    const std::size_t k = ws.h, cin = is.c, cout = ws.n, h = is.h, w = is.w, hw = h * w;
    const std::size_t kdim = cin * k * k;
    Tensor4<T> out({is.n, cout, h, w});
    std::vector<T> col(k == 1 ? 0 : kdim * hw);
    const T* wptr = weight.value.data();
    for (std::size_t n = 0; n < is.n; ++n) {
        for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.plane_ptr(n, co), hw, bias.value[co]);
        const T* src = input.value().plane_ptr(n, 0);
        if (k != 1) {
            detail::im2col(src, cin, h, w, k, col.data());
            src = col.data();
        }
        detail::gemm_acc(cout, hw, kdim, wptr, kdim, std::size_t{1}, src, hw, out.plane_ptr(n, 0), hw);
    }

    Var<T> result = tape.make(std::move(out), true);
    if (tape.recording()) {
        auto in_node = Tape<T>::node(input);
        auto out_node = Tape<T>::node(result);
        tape.record("conv2d", out_node, [in_node, out_node, &weight, &bias, k, cin, cout, h, w, hw, kdim] {
            const Tensor4<T>& g = out_node->grad;
            const Tensor4<T>& x = in_node->value;
            std::vector<T> col(k == 1 ? 0 : kdim * hw);
            std::vector<T> dcol(in_node->requires_grad && k != 1 ? kdim * hw : 0);
            for (std::size_t n = 0; n < x.shape().n; ++n) {
                const T* gn = g.plane_ptr(n, 0);
                for (std::size_t co = 0; co < cout; ++co) {
                    const T* row = gn + co * hw;
                    T s = 0;
                    for (std::size_t i = 0; i < hw; ++i) s += row[i];
                    bias.grad[co] += s;
                }
                const T* src = x.plane_ptr(n, 0);
                if (k != 1) {
                    detail::im2col(src, cin, h, w, k, col.data());
                    src = col.data();
                }
                detail::gemm_nt_acc(cout, kdim, hw, gn, hw, src, hw, weight.grad.data(), kdim);
                if (in_node->requires_grad) {
                    T* dx = in_node->grad_buffer().plane_ptr(n, 0);
                    if (k == 1) {
                        detail::gemm_acc(kdim, hw, cout, weight.value.data(), std::size_t{1}, kdim, gn, hw, dx, hw);
                    } else {
                        std::fill(dcol.begin(), dcol.end(), T(0));
                        detail::gemm_acc(kdim, hw, cout, weight.value.data(), std::size_t{1}, kdim, gn, hw,
                                         dcol.data(), hw);
                        detail::col2im_add(dcol.data(), cin, h, w, k, dx);
                    }
                }
            }
        });
    }
    return result;
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& input) {
    Tensor4<T> out = input.value();
    for (T& v : out.values()) v = v > T(0) ? v : T(0);
    Var<T> result = tape.make(std::move(out), input.requires_grad());
    if (result.requires_grad()) {
        auto in_node = Tape<T>::node(input);
        auto out_node = Tape<T>::node(result);
        tape.record("relu", out_node, [in_node, out_node] {
            const Tensor4<T>& g = out_node->grad;
            const Tensor4<T>& x = in_node->value;
            Tensor4<T>& dx = in_node->grad_buffer();
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] > T(0)) dx[i] += g[i];
        });
    }
    return result;
}

template <typename T>
Var<T> concat_channels(Tape<T>& tape, std::span<const Var<T>> inputs) {
    if (inputs.empty()) throw DimensionError("concat_channels: empty input list");
    const Shape first = inputs.front().shape();
    std::size_t channels = 0;
    bool any_grad = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Shape s = inputs[i].shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw DimensionError("concat_channels: input " + std::to_string(i) + " has shape " + s.str() +
                                 ", incompatible with " + first.str());
        }
        channels += s.c;
        any_grad = any_grad || inputs[i].requires_grad();
    }
    Tensor4<T> out({first.n, channels, first.h, first.w});
    const std::size_t plane = first.plane();
    for (std::size_t n = 0; n < first.n; ++n) {
        std::size_t c0 = 0;
        for (const auto& in : inputs) {
            std::copy_n(in.value().plane_ptr(n, 0), in.shape().c * plane, out.plane_ptr(n, c0));
            c0 += in.shape().c;
        }
    }
    Var<T> result = tape.make(std::move(out), any_grad);
    if (result.requires_grad()) {
        std::vector<typename Tape<T>::NodePtr> in_nodes;
        for (const auto& in : inputs) in_nodes.push_back(Tape<T>::node(in));
        auto out_node = Tape<T>::node(result);
        tape.record("concat_channels", out_node, [in_nodes, out_node, plane] {
            const Tensor4<T>& g = out_node->grad;
            for (std::size_t n = 0; n < g.shape().n; ++n) {
                std::size_t c0 = 0;
                for (const auto& in : in_nodes) {
                    const std::size_t c = in->value.shape().c;
                    if (in->requires_grad) {
                        const T* src = g.plane_ptr(n, c0);
                        T* dst = in->grad_buffer().plane_ptr(n, 0);
                        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                    }
                    c0 += c;
                }
            }
        });
    }
    return result;
}

template <typename T>
Var<T> concat_channels(Tape<T>& tape, std::initializer_list<Var<T>> inputs) {
    return concat_channels(tape, std::span<const Var<T>>(inputs.begin(), inputs.size()));
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    if (!(a.shape() == b.shape())) {
        throw DimensionError("add: shape " + a.shape().str() + " does not match " + b.shape().str());
    }
    Tensor4<T> out = a.value();
    const Tensor4<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Var<T> result = tape.make(std::move(out), a.requires_grad() || b.requires_grad());
    if (result.requires_grad()) {
        auto a_node = Tape<T>::node(a);
        auto b_node = Tape<T>::node(b);
        auto out_node = Tape<T>::node(result);
        tape.record("add", out_node, [a_node, b_node, out_node] {
            const Tensor4<T>& g = out_node->grad;
            for (auto* in : {a_node.get(), b_node.get()}) {
                if (!in->requires_grad) continue;
                Tensor4<T>& d = in->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            }
        });
    }
    return result;
}

// Depth-to-space: out(n, oc, r*y + dy, r*x + dx) = in(n, oc*r*r + dy*r + dx, y, x).
template <typename T>
Var<T> pixel_shuffle(Tape<T>& tape, const Var<T>& input, std::size_t r) {
    const Shape s = input.shape();
    if (r == 0 || s.c % (r * r) != 0) {
        throw DimensionError("pixel_shuffle: " + std::to_string(s.c) + " channels not divisible by r^2 = " +
                             std::to_string(r * r));
    }
    const std::size_t oc_count = s.c / (r * r);
    Tensor4<T> out({s.n, oc_count, s.h * r, s.w * r});
    const Tensor4<T>& in = input.value();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t oc = 0; oc < oc_count; ++oc)
            for (std::size_t dy = 0; dy < r; ++dy)
                for (std::size_t dx = 0; dx < r; ++dx) {
                    const std::size_t ic = oc * r * r + dy * r + dx;
                    for (std::size_t y = 0; y < s.h; ++y)
                        for (std::size_t x = 0; x < s.w; ++x) out.at(n, oc, r * y + dy, r * x + dx) = in.at(n, ic, y, x);
                }
    Var<T> result = tape.make(std::move(out), input.requires_grad());
    if (result.requires_grad()) {
        auto in_node = Tape<T>::node(input);
        auto out_node = Tape<T>::node(result);
        tape.record("pixel_shuffle", out_node, [in_node, out_node, r] {
            const Tensor4<T> g = pixel_unshuffle(out_node->grad, r);
            Tensor4<T>& d = in_node->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        });
    }
    return result;
}

namespace detail {

template <typename T, typename Value, typename Deriv>
Var<T> elementwise_loss(Tape<T>& tape, const Var<T>& pred, const Tensor4<T>& target, const char* op, Value value,
                        Deriv deriv) {
    if (!(pred.shape() == target.shape())) {
        throw DimensionError(std::string(op) + ": prediction shape " + pred.shape().str() +
                             " does not match target " + target.shape().str());
    }
    const Tensor4<T>& p = pred.value();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += value(static_cast<double>(p[i]) - target[i]);
    const double count = static_cast<double>(p.size());
    Var<T> result = tape.make(Tensor4<T>({1, 1, 1, 1}, static_cast<T>(total / count)), pred.requires_grad());
    if (result.requires_grad()) {
        auto in_node = Tape<T>::node(pred);
        auto out_node = Tape<T>::node(result);
        tape.record(op, out_node, [in_node, out_node, target, count, deriv] {
            const T g = out_node->grad[0];
            const Tensor4<T>& x = in_node->value;
            Tensor4<T>& d = in_node->grad_buffer();
            for (std::size_t i = 0; i < x.size(); ++i) {
                d[i] += static_cast<T>(static_cast<double>(g) * deriv(static_cast<double>(x[i]) - target[i]) / count);
            }
        });
    }
    return result;
}

}  // namespace detail

// Mean absolute error. Subgradient at zero difference is 0.
template <typename T>
Var<T> l1_loss(Tape<T>& tape, const Var<T>& pred, const Tensor4<T>& target) {
    return detail::elementwise_loss(
        tape, pred, target, "l1_loss", [](double d) { return std::abs(d); },
        [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
}

template <typename T>
Var<T> mse_loss(Tape<T>& tape, const Var<T>& pred, const Tensor4<T>& target) {
    return detail::elementwise_loss(
        tape, pred, target, "mse_loss", [](double d) { return d * d; }, [](double d) { return 2.0 * d; });
}

// sum(x * weights): a scalar projection used to probe gradients.
template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, const Tensor4<T>& weights) {
    if (!(x.shape() == weights.shape())) {
        throw DimensionError("weighted_sum: shape " + x.shape().str() + " does not match weights " +
                             weights.shape().str());
    }
    T total = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) total += x.value()[i] * weights[i];
    Var<T> result = tape.make(Tensor4<T>({1, 1, 1, 1}, total), x.requires_grad());
    if (result.requires_grad()) {
        auto in_node = Tape<T>::node(x);
        auto out_node = Tape<T>::node(result);
        tape.record("weighted_sum", out_node, [in_node, out_node, weights] {
            const T g = out_node->grad[0];
            Tensor4<T>& d = in_node->grad_buffer();
            for (std::size_t i = 0; i < weights.size(); ++i) d[i] += g * weights[i];
        });
    }
    return result;
}

}  // namespace rdn
