// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rdn/metrics.hpp"
#include "support/synthetic.hpp"

namespace {

using rdn::Image;
using rdn::Shape;

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img({1, 3, h, w});
    for (float& v : img.values()) v = u(eng);
    return img;
}

Image add_noise(const Image& img, double sigma, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    Image out = img;
    for (float& v : out.values()) v = static_cast<float>(std::clamp(v + n(eng), 0.0, 1.0));
    return out;
}

// Root mean squared error in long double, then 20 log10(1 / rmse).
double psnr_oracle(const Image& a, const Image& b) {
    long double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
        acc += d * d;
    }
    const long double rmse = std::sqrt(acc / a.size());
    return static_cast<double>(-20.0L * std::log10(rmse));
}

// Direct 2-D windowed statistics at every valid position.
double ssim_oracle(const Image& a, const Image& b) {
    const std::size_t h = a.shape().h, w = a.shape().w;
    double g[11][11], total = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
    const double c1 = 1e-4, c2 = 9e-4;
    double sum = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        double ch = 0;
        for (std::size_t y = 0; y + 11 <= h; ++y)
            for (std::size_t x = 0; x + 11 <= w; ++x) {
                double mx = 0, my = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        mx += g[i][j] / total * a.at(0, c, y + i, x + j);
                        my += g[i][j] / total * b.at(0, c, y + i, x + j);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double dx = a.at(0, c, y + i, x + j) - mx, dy = b.at(0, c, y + i, x + j) - my;
                        vx += g[i][j] / total * dx * dx;
                        vy += g[i][j] / total * dy * dy;
                        cov += g[i][j] / total * dx * dy;
                    }
                ch += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        sum += ch / static_cast<double>((h - 10) * (w - 10));
    }
    return sum / 3;
}

TEST(Psnr, MatchesOracleOnRandomPairs) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Image a = random_image(17, 23, 2 * s), b = add_noise(a, 0.01 + 0.01 * s, 2 * s + 1);
        EXPECT_NEAR(rdn::psnr(a, b), psnr_oracle(a, b), 1e-9) << "pair " << s;
    }
}

TEST(Psnr, KnownValues) {
    const Image a({1, 3, 4, 4}, 0.25f);
    EXPECT_EQ(rdn::psnr(a, a), rdn::kPsnrCap);
    EXPECT_NEAR(rdn::psnr(Image({1, 3, 4, 4}, 0.0f), Image({1, 3, 4, 4}, 1.0f)), 0.0, 1e-12);
    EXPECT_NEAR(rdn::psnr(Image({1, 3, 4, 4}, 0.0f), Image({1, 3, 4, 4}, 0.5f)), 20 * std::log10(2.0), 1e-12);
    EXPECT_THROW(rdn::psnr(a, Image({1, 3, 4, 5})), rdn::DimensionError);
}

TEST(Psnr, DecreasesWithNoise) {
    const Image clean = rdn::testing::synthetic_image(32, 32, 3);
    const double p1 = rdn::psnr(add_noise(clean, 0.01, 1), clean);
    const double p2 = rdn::psnr(add_noise(clean, 0.02, 1), clean);
    const double p5 = rdn::psnr(add_noise(clean, 0.05, 1), clean);
    EXPECT_GT(p1, p2);
    EXPECT_GT(p2, p5);
}

TEST(Ssim, IdenticalImagesScoreExactlyOne) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Image a = random_image(20, 16, s);
        EXPECT_EQ(rdn::ssim(a, a), 1.0);
    }
}

TEST(Ssim, ConstantImagesClosedForm) {
    for (auto [x, y] : {std::pair{0.2f, 0.7f}, std::pair{0.5f, 0.5f}, std::pair{0.0f, 1.0f}}) {
        const double a = x, b = y;
        const double expected = (2 * a * b + 1e-4) / (a * a + b * b + 1e-4);
        EXPECT_NEAR(rdn::ssim(Image({1, 3, 12, 15}, x), Image({1, 3, 12, 15}, y)), expected, 1e-10);
    }
}

TEST(Ssim, MatchesDirectWindowOracle) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Image a = rdn::testing::synthetic_image(19, 24, s), b = add_noise(a, 0.05, 10 + s);
        EXPECT_NEAR(rdn::ssim(a, b), ssim_oracle(a, b), 1e-10);
    }
}

TEST(Ssim, SymmetricAndBounded) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Image a = random_image(16, 16, 20 + s), b = random_image(16, 16, 40 + s);
        const double ab = rdn::ssim(a, b), ba = rdn::ssim(b, a);
        EXPECT_NEAR(ab, ba, 1e-12);
        EXPECT_LE(ab, 1.0);
        EXPECT_GE(ab, -1.0);
    }
}

TEST(Ssim, DecreasesWithNoise) {
    const Image clean = rdn::testing::synthetic_image(32, 32, 4);
    EXPECT_GT(rdn::ssim(add_noise(clean, 0.01, 2), clean), rdn::ssim(add_noise(clean, 0.05, 2), clean));
}

TEST(Ssim, RejectsSmallImagesAndBatches) {
    EXPECT_THROW(rdn::ssim(Image({1, 3, 10, 20}), Image({1, 3, 10, 20})), rdn::UsageError);
    EXPECT_THROW(rdn::ssim(Image({2, 3, 12, 12}), Image({2, 3, 12, 12})), rdn::UsageError);
    EXPECT_THROW(rdn::ssim(Image({1, 3, 12, 12}), Image({1, 3, 12, 13})), rdn::DimensionError);
}

TEST(Luma, StudioSwingEndpoints) {
    const Image black({1, 3, 2, 2}, 0.0f), white({1, 3, 2, 2}, 1.0f);
    EXPECT_EQ(rdn::luma(black).shape(), (Shape{1, 1, 2, 2}));
    EXPECT_NEAR(rdn::luma(black)[0], 16.0 / 255.0, 1e-7);
    EXPECT_NEAR(rdn::luma(white)[0], 235.0 / 255.0, 1e-6);
    Image red({1, 3, 1, 1}, 0.0f);
    red[0] = 1.0f;
    EXPECT_NEAR(rdn::luma(red)[0], (16.0 + 65.481) / 255.0, 1e-7);
}

TEST(Shave, CropsBorder) {
    const Image img = random_image(10, 12, 1);
    const Image s = rdn::shave(img, 2);
    EXPECT_EQ(s.shape(), (Shape{1, 3, 6, 8}));
    EXPECT_EQ(s.at(0, 1, 0, 0), img.at(0, 1, 2, 2));
    EXPECT_TRUE(rdn::bitwise_equal(rdn::shave(img, 0), img));
    EXPECT_THROW(rdn::shave(img, 5), rdn::UsageError);
}

std::vector<rdn::ImagePair> pairs_of(std::vector<std::pair<std::size_t, std::size_t>> sizes) {
    std::vector<rdn::ImagePair> out;
    std::uint64_t seed = 0;
    for (auto [h, w] : sizes)
        out.push_back(rdn::make_image_pair(rdn::testing::synthetic_image(h, w, seed++), 2, "img" + std::to_string(seed)));
    return out;
}

TEST(Evaluate, RowsFollowInputOrderAcrossSizeChanges) {
    const auto pairs = pairs_of({{24, 24}, {24, 24}, {32, 24}, {24, 24}, {24, 24}, {24, 24}});
    std::vector<std::size_t> batch_sizes;
    rdn::EvalOptions opts;
    opts.batch = 2;
    const auto report = rdn::evaluate_pairs(
        pairs,
        [&](const rdn::Batch& b) {
            batch_sizes.push_back(b.lr.shape().n);
            return b.hr;
        },
        opts, "set", 2);
    ASSERT_EQ(report.rows.size(), 6u);
    EXPECT_EQ(batch_sizes, (std::vector<std::size_t>{2, 1, 2, 1}));
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(report.rows[i].path, pairs[i].source);
        EXPECT_EQ(report.rows[i].psnr_db, rdn::kPsnrCap);
        EXPECT_EQ(report.rows[i].ssim, 1.0);
    }
    EXPECT_EQ(report.mean_psnr, rdn::kPsnrCap);
}

TEST(Evaluate, MeansAndOptions) {
    const auto pairs = pairs_of({{24, 24}, {24, 24}, {24, 24}});
    auto noisy = [](const rdn::Batch& b) {
        rdn::Image out = b.hr;
        const std::size_t item = out.size() / out.shape().n;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (i % item % 7 == 0) out[i] = 1.0f - out[i];
        return out;
    };
    rdn::EvalOptions plain, shaved, luma;
    shaved.shave = 2;
    luma.luma_only = true;
    const auto a = rdn::evaluate_pairs(pairs, noisy, plain, "set", 2);
    const auto b = rdn::evaluate_pairs(pairs, noisy, shaved, "set", 2);
    const auto c = rdn::evaluate_pairs(pairs, noisy, luma, "set", 2);
    double mean = 0;
    for (const auto& r : a.rows) mean += r.psnr_db;
    EXPECT_NEAR(a.mean_psnr, mean / 3, 1e-12);
    EXPECT_NE(a.mean_psnr, b.mean_psnr);
    EXPECT_NE(a.mean_psnr, c.mean_psnr);
    EXPECT_EQ(a.rows.size(), b.rows.size());
    EXPECT_EQ(a.rows.size(), c.rows.size());
    const auto expected = rdn::score_image(noisy({pairs[1].lr, pairs[1].hr, {}}), pairs[1].hr, shaved, pairs[1].source);
    EXPECT_EQ(b.rows[1].psnr_db, expected.psnr_db);
    EXPECT_EQ(b.rows[1].ssim, expected.ssim);
}

TEST(Evaluate, PredictionShapeMismatchIsADimensionError) {
    const auto pairs = pairs_of({{24, 24}});
    EXPECT_THROW(rdn::evaluate_pairs(
                     pairs, [](const rdn::Batch& b) { return b.lr; }, rdn::EvalOptions{}, "set", 2),
                 rdn::DimensionError);
}

TEST(Report, CsvAndTableLayout) {
    rdn::MetricReport r;
    r.dataset = "Set5";
    r.scale = 3;
    r.rows = {{"a.png", 30.5, 0.9}, {"b.png", 31.5, 0.8}};
    r.finalize();
    EXPECT_EQ(rdn::report_csv(r),
              "path,scale,psnr_db,ssim\n"
              "a.png,3,30.500000,0.900000\n"
              "b.png,3,31.500000,0.800000\n"
              "mean,3,31.000000,0.850000\n");
    const std::vector<rdn::MetricReport> reports = {r};
    const std::string table = rdn::report_table(reports);
    EXPECT_NE(table.find("Set5"), std::string::npos);
    EXPECT_NE(table.find("3x PSNR"), std::string::npos);
    EXPECT_NE(table.find("31.00"), std::string::npos);
    EXPECT_NE(table.find("0.850"), std::string::npos);
}

}  // namespace
