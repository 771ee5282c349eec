// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rdn/autodiff.hpp"
#include "rdn/gradcheck.hpp"
#include "rdn/tensor.hpp"

namespace {

using rdn::Parameter;
using rdn::Shape;
using rdn::Tape;
using rdn::Tensor4;
using rdn::Var;

template <typename T = double>
Tensor4<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor4<T> t(s);
    for (T& v : t.values()) v = static_cast<T>(u(eng));
    return t;
}

// Straightforward zero-padded cross-correlation, one output at a time.
Tensor4<double> naive_conv(const Tensor4<double>& x, const Tensor4<double>& w, const Tensor4<double>& b) {
    const Shape xs = x.shape(), ws = w.shape();
    const long pad = static_cast<long>(ws.h / 2);
    Tensor4<double> out({xs.n, ws.n, xs.h, xs.w});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t co = 0; co < ws.n; ++co)
            for (std::size_t y = 0; y < xs.h; ++y)
                for (std::size_t xx = 0; xx < xs.w; ++xx) {
                    double s = b[co];
                    for (std::size_t ci = 0; ci < xs.c; ++ci)
                        for (std::size_t ky = 0; ky < ws.h; ++ky)
                            for (std::size_t kx = 0; kx < ws.w; ++kx) {
                                const long sy = static_cast<long>(y + ky) - pad;
                                const long sx = static_cast<long>(xx + kx) - pad;
                                if (sy < 0 || sx < 0 || sy >= static_cast<long>(xs.h) || sx >= static_cast<long>(xs.w))
                                    continue;
                                s += w.at(co, ci, ky, kx) *
                                     x.at(n, ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                            }
                    out.at(n, co, y, xx) = s;
                }
    return out;
}

Tensor4<double> forward_conv(const Tensor4<double>& x, Parameter<double>& w, Parameter<double>& b) {
    Tape<double> tape(false);
    return rdn::conv2d(tape, tape.constant(x), w, b).value();
}

TEST(Tensor, RejectsZeroDimensions) {
    EXPECT_THROW(Tensor4<float>(Shape{1, 0, 2, 2}), rdn::DimensionError);
    EXPECT_THROW(Tensor4<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), rdn::DimensionError);
}

TEST(Tensor, DataLengthMatchesShape) {
    Tensor4<float> t({2, 3, 4, 5});
    EXPECT_EQ(t.size(), 120u);
    EXPECT_EQ(t.offset(1, 2, 3, 4), 119u);
}

TEST(Conv2d, OneByOneUnitKernelIsIdentity) {
    Parameter<double> w(Tensor4<double>({1, 1, 1, 1}, 1.0));
    Parameter<double> b(Shape{1, 1, 1, 1});
    const auto x = random_tensor({2, 1, 4, 5}, 1);
    EXPECT_TRUE(rdn::bitwise_equal(forward_conv(x, w, b), x));
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    Parameter<double> w(Shape{3, 3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) w.value.at(c, c, 1, 1) = 1.0;
    Parameter<double> b(Shape{3, 1, 1, 1});
    const auto x = random_tensor({1, 3, 5, 4}, 2);
    EXPECT_TRUE(rdn::bitwise_equal(forward_conv(x, w, b), x));
}

TEST(Conv2d, AllOnesKernelOnOneToNine) {
    Tensor4<double> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Parameter<double> w(Tensor4<double>({1, 1, 3, 3}, 1.0));
    Parameter<double> b(Shape{1, 1, 1, 1});
    const auto out = forward_conv(x, w, b);
    const auto oracle = naive_conv(x, w.value, b.value);
    EXPECT_EQ(out.at(0, 0, 1, 1), 45.0);
    EXPECT_EQ(oracle.at(0, 0, 1, 1), 45.0);
    // Corner sees only the 2x2 neighbourhood {1, 2, 4, 5}.
    EXPECT_EQ(out.at(0, 0, 0, 0), 12.0);
}

TEST(Conv2d, MatchesNaiveLoopOracle) {
    for (std::size_t k : {1u, 3u}) {
        const auto x = random_tensor({2, 5, 7, 6}, 10 + k);
        Parameter<double> w(random_tensor({4, 5, k, k}, 20 + k));
        Parameter<double> b(random_tensor({4, 1, 1, 1}, 30 + k));
        const auto out = forward_conv(x, w, b);
        const auto oracle = naive_conv(x, w.value, b.value);
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], oracle[i], 1e-12) << "k=" << k << " i=" << i;
    }
}

TEST(Conv2d, WideImageExercisesVectorTail) {
    const auto x = random_tensor({1, 3, 3, 37}, 41);
    Parameter<double> w(random_tensor({5, 3, 3, 3}, 42));
    Parameter<double> b(random_tensor({5, 1, 1, 1}, 43));
    const auto out = forward_conv(x, w, b);
    const auto oracle = naive_conv(x, w.value, b.value);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], oracle[i], 1e-12);
}

TEST(Conv2d, IsLinearInInputWithZeroBias) {
    const auto x = random_tensor({1, 4, 6, 6}, 3), y = random_tensor({1, 4, 6, 6}, 4);
    Parameter<double> w(random_tensor({3, 4, 3, 3}, 5));
    Parameter<double> b(Shape{3, 1, 1, 1});
    const double a = 0.7, c = -1.3;
    Tensor4<double> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * y[i];
    const auto lhs = forward_conv(mix, w, b);
    const auto cx = forward_conv(x, w, b), cy = forward_conv(y, w, b);
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + c * cy[i], 1e-10);
}

TEST(Conv2d, RejectsBadShapesAndValues) {
    Parameter<double> w(Shape{2, 3, 3, 3}), b(Shape{2, 1, 1, 1});
    EXPECT_THROW(forward_conv(Tensor4<double>({1, 4, 3, 3}), w, b), rdn::DimensionError);
    Parameter<double> w5(Shape{2, 3, 5, 5});
    EXPECT_THROW(forward_conv(Tensor4<double>({1, 3, 6, 6}), w5, b), rdn::DimensionError);
    Parameter<double> bad_bias(Shape{3, 1, 1, 1});
    EXPECT_THROW(forward_conv(Tensor4<double>({1, 3, 3, 3}), w, bad_bias), rdn::DimensionError);
    Tensor4<double> x({1, 3, 3, 3});
    x[4] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(forward_conv(x, w, b), rdn::NumericError);
}

TEST(Conv2d, IsDeterministic) {
    const auto x = random_tensor<float>({2, 8, 9, 11}, 6);
    Parameter<float> w(random_tensor<float>({6, 8, 3, 3}, 7)), b(random_tensor<float>({6, 1, 1, 1}, 8));
    Tape<float> t1(false), t2(false);
    EXPECT_TRUE(rdn::bitwise_equal(rdn::conv2d(t1, t1.constant(x), w, b).value(),
                                   rdn::conv2d(t2, t2.constant(x), w, b).value()));
}

TEST(Relu, ForwardCases) {
    Tape<double> tape(false);
    const auto neg = rdn::relu(tape, tape.constant(Tensor4<double>({1, 1, 2, 2}, {-1, -2, -3, -0.5}))).value();
    for (double v : neg.values()) EXPECT_EQ(v, 0.0);
    const auto pos = random_tensor({1, 2, 3, 3}, 9, 0.1, 1.0);
    EXPECT_TRUE(rdn::bitwise_equal(rdn::relu(tape, tape.constant(pos)).value(), pos));
}

TEST(Relu, SubgradientAtZeroIsZero) {
    Parameter<double> x(Tensor4<double>({1, 1, 1, 3}, {-1, 0, 2}));
    Tape<double> tape;
    auto y = rdn::relu(tape, tape.variable(x));
    tape.backward(rdn::weighted_sum(tape, y, Tensor4<double>({1, 1, 1, 3}, 5.0)));
    EXPECT_EQ(x.grad[0], 0.0);
    EXPECT_EQ(x.grad[1], 0.0);
    EXPECT_EQ(x.grad[2], 5.0);
}

TEST(Concat, SingleInputIsIdentity) {
    Tape<double> tape(false);
    const auto a = random_tensor({2, 3, 2, 2}, 11);
    EXPECT_TRUE(rdn::bitwise_equal(rdn::concat_channels(tape, {tape.constant(a)}).value(), a));
}

TEST(Concat, OrdersChannelsAndRoundTrips) {
    Tape<double> tape(false);
    const auto a = random_tensor({2, 2, 3, 2}, 12), b = random_tensor({2, 3, 3, 2}, 13);
    const auto out = rdn::concat_channels(tape, {tape.constant(a), tape.constant(b)}).value();
    EXPECT_EQ(out.shape(), (Shape{2, 5, 3, 2}));
    EXPECT_TRUE(rdn::bitwise_equal(rdn::slice_channels(out, 0, 2), a));
    EXPECT_TRUE(rdn::bitwise_equal(rdn::slice_channels(out, 2, 3), b));
}

TEST(Concat, BackwardSlicesGradient) {
    Parameter<double> a(random_tensor({1, 2, 2, 2}, 14)), b(random_tensor({1, 1, 2, 2}, 15));
    const auto proj = random_tensor({1, 3, 2, 2}, 16);
    Tape<double> tape;
    auto y = rdn::concat_channels(tape, {tape.variable(a), tape.variable(b)});
    tape.backward(rdn::weighted_sum(tape, y, proj));
    EXPECT_TRUE(rdn::bitwise_equal(a.grad, rdn::slice_channels(proj, 0, 2)));
    EXPECT_TRUE(rdn::bitwise_equal(b.grad, rdn::slice_channels(proj, 2, 1)));
}

TEST(Concat, RejectsMismatch) {
    Tape<double> tape(false);
    EXPECT_THROW(rdn::concat_channels(tape, {tape.constant(Tensor4<double>({1, 1, 2, 2})),
                                             tape.constant(Tensor4<double>({1, 1, 2, 3}))}),
                 rdn::DimensionError);
    EXPECT_THROW(rdn::concat_channels(tape, std::span<const Var<double>>{}), rdn::DimensionError);
}

TEST(Add, ForwardCasesAndErrors) {
    Tape<double> tape(false);
    const auto a = random_tensor({1, 2, 3, 3}, 17);
    EXPECT_TRUE(rdn::bitwise_equal(rdn::add(tape, tape.constant(a), tape.constant(Tensor4<double>(a.shape()))).value(), a));
    const auto twice = rdn::add(tape, tape.constant(a), tape.constant(a)).value();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(twice[i], 2 * a[i]);
    EXPECT_THROW(rdn::add(tape, tape.constant(a), tape.constant(Tensor4<double>({1, 2, 3, 2}))), rdn::DimensionError);
}

TEST(Add, GradientReachesBothOperands) {
    Parameter<double> a(random_tensor({1, 1, 2, 2}, 18)), b(random_tensor({1, 1, 2, 2}, 19));
    const auto proj = random_tensor({1, 1, 2, 2}, 20);
    Tape<double> tape;
    tape.backward(rdn::weighted_sum(tape, rdn::add(tape, tape.variable(a), tape.variable(b)), proj));
    EXPECT_TRUE(rdn::bitwise_equal(a.grad, proj));
    EXPECT_TRUE(rdn::bitwise_equal(b.grad, proj));
}

TEST(PixelShuffle, TwoByTwoOrdering) {
    Tape<double> tape(false);
    const auto out = rdn::pixel_shuffle(tape, tape.constant(Tensor4<double>({1, 4, 1, 1}, {1, 2, 3, 4})), 2).value();
    EXPECT_EQ(out.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(out.at(0, 0, 0, 0), 1.0);
    EXPECT_EQ(out.at(0, 0, 0, 1), 2.0);
    EXPECT_EQ(out.at(0, 0, 1, 0), 3.0);
    EXPECT_EQ(out.at(0, 0, 1, 1), 4.0);
}

TEST(PixelShuffle, ScaleOneIsIdentity) {
    Tape<double> tape(false);
    const auto x = random_tensor({1, 3, 4, 4}, 21);
    EXPECT_TRUE(rdn::bitwise_equal(rdn::pixel_shuffle(tape, tape.constant(x), 1).value(), x));
}

TEST(PixelShuffle, MatchesIndexFormulaAndInverts) {
    for (std::size_t r : {2u, 3u}) {
        Tape<double> tape(false);
        const auto x = random_tensor({2, 2 * r * r, 3, 4}, 22 + r);
        const auto y = rdn::pixel_shuffle(tape, tape.constant(x), r).value();
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t oc = 0; oc < 2; ++oc)
                for (std::size_t yy = 0; yy < 3 * r; ++yy)
                    for (std::size_t xx = 0; xx < 4 * r; ++xx)
                        ASSERT_EQ(y.at(n, oc, yy, xx), x.at(n, oc * r * r + (yy % r) * r + (xx % r), yy / r, xx / r));
        EXPECT_TRUE(rdn::bitwise_equal(rdn::pixel_unshuffle(y, r), x));
        std::vector<double> a(x.values().begin(), x.values().end()), b(y.values().begin(), y.values().end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
    }
}

TEST(PixelShuffle, RejectsIndivisibleChannels) {
    Tape<double> tape(false);
    EXPECT_THROW(rdn::pixel_shuffle(tape, tape.constant(Tensor4<double>({1, 6, 2, 2})), 2), rdn::DimensionError);
}

TEST(Losses, L1Values) {
    Tape<double> tape(false);
    const auto t = random_tensor({1, 3, 4, 4}, 23);
    EXPECT_EQ(rdn::l1_loss(tape, tape.constant(t), t).value()[0], 0.0);
    Tensor4<double> shifted = t;
    for (double& v : shifted.values()) v += 0.5;
    EXPECT_NEAR(rdn::l1_loss(tape, tape.constant(shifted), t).value()[0], 0.5, 1e-15);

    const auto p = random_tensor({2, 3, 5, 5}, 24);
    const auto q = random_tensor({2, 3, 5, 5}, 124);
    double sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
    EXPECT_NEAR(rdn::l1_loss(tape, tape.constant(p), q).value()[0], sum / static_cast<double>(p.size()), 1e-15);
    EXPECT_THROW(rdn::l1_loss(tape, tape.constant(p), t), rdn::DimensionError);
}

TEST(Losses, L1GradientIsSignOverCount) {
    Parameter<double> x(Tensor4<double>({1, 1, 1, 4}, {0.5, -0.5, 0.2, 0.0}));
    Tensor4<double> target({1, 1, 1, 4}, {0.0, 0.0, 0.3, 0.0});
    Tape<double> tape;
    tape.backward(rdn::l1_loss(tape, tape.variable(x), target));
    EXPECT_DOUBLE_EQ(x.grad[0], 0.25);
    EXPECT_DOUBLE_EQ(x.grad[1], -0.25);
    EXPECT_DOUBLE_EQ(x.grad[2], -0.25);
    EXPECT_DOUBLE_EQ(x.grad[3], 0.0);
}

TEST(Backward, ScalarWeightGradientIsInput) {
    // loss = sum(w * x) with w a 1x1 conv weight.
    Parameter<double> w(Tensor4<double>({1, 1, 1, 1}, 0.3)), b(Shape{1, 1, 1, 1});
    const auto x = random_tensor({1, 1, 2, 3}, 25);
    Tape<double> tape;
    auto y = rdn::conv2d(tape, tape.constant(x), w, b);
    tape.backward(rdn::weighted_sum(tape, y, Tensor4<double>(x.shape(), 1.0)));
    double sum = 0;
    for (double v : x.values()) sum += v;
    EXPECT_NEAR(w.grad[0], sum, 1e-15);
    EXPECT_DOUBLE_EQ(b.grad[0], 6.0);
}

TEST(Backward, FanOutAccumulates) {
    Parameter<double> x(random_tensor({1, 1, 2, 2}, 26));
    const auto proj = random_tensor({1, 1, 2, 2}, 27);
    Tape<double> tape;
    auto v = tape.variable(x);
    tape.backward(rdn::weighted_sum(tape, rdn::add(tape, v, rdn::add(tape, v, v)), proj));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad[i], 3 * proj[i]);
}

TEST(Backward, UnreachedParameterKeepsZeroGradient) {
    Parameter<double> used(random_tensor({1, 1, 2, 2}, 28)), unused(random_tensor({1, 1, 2, 2}, 29));
    Tape<double> tape;
    tape.variable(unused);
    tape.backward(rdn::weighted_sum(tape, tape.variable(used), Tensor4<double>({1, 1, 2, 2}, 1.0)));
    for (double g : unused.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, UsageContract) {
    Parameter<double> x(random_tensor({1, 1, 2, 2}, 30));
    Tape<double> tape;
    auto v = tape.variable(x);
    EXPECT_THROW(tape.backward(v), rdn::UsageError);  // not a scalar
    auto loss = rdn::weighted_sum(tape, v, Tensor4<double>({1, 1, 2, 2}, 1.0));
    tape.backward(loss);
    EXPECT_EQ(tape.size(), 0u);
    EXPECT_THROW(tape.backward(loss), rdn::UsageError);  // tape already consumed

    Tape<double> other;
    auto foreign = rdn::weighted_sum(other, other.variable(x), Tensor4<double>({1, 1, 2, 2}, 1.0));
    EXPECT_THROW(tape.backward(foreign), rdn::UsageError);
}

TEST(Backward, ReplaysInReverseRecordingOrder) {
    // A chain whose adjoint is only correct if every entry runs after all of
    // its consumers: d/dx of sum(relu(x) + relu(relu(x))).
    Parameter<double> x(Tensor4<double>({1, 1, 1, 2}, {0.5, -0.5}));
    Tape<double> tape;
    auto v = tape.variable(x);
    auto r1 = rdn::relu(tape, v);
    auto r2 = rdn::relu(tape, r1);
    tape.backward(rdn::weighted_sum(tape, rdn::add(tape, r1, r2), Tensor4<double>({1, 1, 1, 2}, 1.0)));
    EXPECT_DOUBLE_EQ(x.grad[0], 2.0);
    EXPECT_DOUBLE_EQ(x.grad[1], 0.0);
}

TEST(Backward, NonRecordingTapeStoresNothing) {
    Parameter<double> w(random_tensor({2, 2, 3, 3}, 31)), b(Shape{2, 1, 1, 1});
    Tape<double> tape(false);
    auto y = rdn::conv2d(tape, tape.constant(random_tensor({1, 2, 4, 4}, 32)), w, b);
    EXPECT_EQ(tape.size(), 0u);
    EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, EveryOpPassesInDoublePrecision) {
    const rdn::GradCheckSuite suite(rdn::gradcheck_model_config(), 7);
    const auto entries = suite.run(rdn::GradCheckOptions{});
    ASSERT_FALSE(entries.empty());
    bool saw_composite = false;
    for (const auto& e : entries) {
        EXPECT_TRUE(e.passed) << e.name << " max rel err " << e.max_rel_error;
        EXPECT_GT(e.comparisons, 0u);
        saw_composite = saw_composite || e.name == "rdn";
    }
    EXPECT_TRUE(saw_composite);
}

TEST(GradCheck, DetectsCorruptedAdjoint) {
    const rdn::GradCheckSuite suite(rdn::gradcheck_model_config(), 7);
    for (const char* op : {"conv2d", "relu", "concat_channels", "add", "pixel_shuffle", "l1_loss", "mse_loss"}) {
        rdn::GradCheckOptions opts;
        opts.fault_op = op;
        bool caught = false;
        for (const auto& e : suite.run(opts)) {
            if (e.name.rfind(op, 0) == 0) {
                EXPECT_FALSE(e.passed) << "fault in " << op << " went unnoticed";
                caught = true;
            }
        }
        EXPECT_TRUE(caught) << op;
    }
}

TEST(GradCheck, RelativeErrorFloor) {
    EXPECT_DOUBLE_EQ(rdn::relative_error(1.0, 1.0, 1e-4), 0.0);
    EXPECT_DOUBLE_EQ(rdn::relative_error(2.0, 1.0, 1e-4), 0.5);
    EXPECT_DOUBLE_EQ(rdn::relative_error(0.0, 1e-6, 1e-4), 1e-2);
}

}  // namespace
