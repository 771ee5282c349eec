// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rdn/data.hpp"
#include "rdn/errors.hpp"
#include "rdn/model.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

inline constexpr double kPsnrCap = 100.0;  // reported for identical images

// 10 log10(R^2 / MSE) over every element; kPsnrCap when MSE is zero.
template <typename T>
double psnr(const Tensor4<T>& pred, const Tensor4<T>& gt, double peak = 1.0) {
    if (!(pred.shape() == gt.shape())) {
        throw DimensionError("psnr: shape " + pred.shape().str() + " does not match " + gt.shape().str());
    }
    if (!(peak > 0.0)) throw UsageError("psnr: peak must be > 0");
    double sse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(pred.size());
    if (mse == 0.0) return kPsnrCap;
    return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size = 11, double sigma = 1.5) {
    std::vector<double> g(size);
    const double mid = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double x = static_cast<double>(i) - mid;
        g[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

// Valid-region separable filtering of an h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                        const std::vector<double>& win) {
    const std::size_t k = win.size(), oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(h * ow), out(oh * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += win[i] * plane[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += win[i] * tmp[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace detail

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// valid region only, averaged over channels. Single image (n = 1).
template <typename T>
double ssim(const Tensor4<T>& pred, const Tensor4<T>& gt, double peak = 1.0) {
    if (!(pred.shape() == gt.shape())) {
        throw DimensionError("ssim: shape " + pred.shape().str() + " does not match " + gt.shape().str());
    }
    const Shape& s = pred.shape();
    if (s.n != 1) throw UsageError("ssim: expects a single image, got batch of " + std::to_string(s.n));
    constexpr std::size_t kWindow = 11;
    if (s.h < kWindow || s.w < kWindow) {
        throw UsageError("ssim: image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " is smaller than the 11x11 window");
    }
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto win = detail::gaussian_window(kWindow, 1.5);
    const std::size_t hw = s.plane();
    double total = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) {
        std::vector<double> x(hw), y(hw), xy(hw), dd(hw);
        const T* px = pred.plane_ptr(0, c);
        const T* py = gt.plane_ptr(0, c);
        for (std::size_t i = 0; i < hw; ++i) {
            x[i] = px[i];
            y[i] = py[i];
            xy[i] = x[i] * y[i];
            dd[i] = (x[i] - y[i]) * (x[i] - y[i]);
        }
        const auto mx = detail::filter_valid(x, s.h, s.w, win);
        const auto my = detail::filter_valid(y, s.h, s.w, win);
        const auto sxy = detail::filter_valid(xy, s.h, s.w, win);
        const auto sdd = detail::filter_valid(dd, s.h, s.w, win);
        double acc = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            // mx^2 + my^2 = 2 mx my + dmu^2 and vx + vy = 2 cov + var(x - y).
            const double dmu = mx[i] - my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            const double lum = 2.0 * mx[i] * my[i] + c1;
            const double cs = 2.0 * cov + c2;
            const double num = lum * cs;
            const double den = (lum + dmu * dmu) * (cs + (sdd[i] - dmu * dmu));
            acc += num / den;
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(s.c);
}

// ITU-R BT.601 luma (studio swing) of an RGB image in [0, 1]: one channel.
template <typename T>
Tensor4<T> luma(const Tensor4<T>& rgb) {
    const Shape& s = rgb.shape();
    if (s.c != 3) throw DimensionError("luma: expected 3 channels, got " + s.str());
    Tensor4<T> out({s.n, 1, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) {
                const double v = (16.0 + 65.481 * rgb.at(n, 0, y, x) + 128.553 * rgb.at(n, 1, y, x) +
                                  24.966 * rgb.at(n, 2, y, x)) /
                                 255.0;
                out.at(n, 0, y, x) = static_cast<T>(v);
            }
    return out;
}

template <typename T>
Tensor4<T> shave(const Tensor4<T>& img, std::size_t border) {
    if (border == 0) return img;
    const Shape& s = img.shape();
    if (2 * border >= s.h || 2 * border >= s.w) throw UsageError("shave: border larger than image");
    return crop(img, border, border, s.h - 2 * border, s.w - 2 * border);
}

struct EvalOptions {
    std::size_t shave = 0;
    bool luma_only = false;
    std::size_t batch = 4;
};

struct MetricRow {
    std::string path;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::string dataset;
    std::size_t scale = 2;
    std::string label = "baseline";
    std::vector<MetricRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    void finalize() {
        double p = 0.0, q = 0.0;
        for (const auto& r : rows) {
            p += r.psnr_db;
            q += r.ssim;
        }
        const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
        mean_psnr = p / n;
        mean_ssim = q / n;
    }
};

// Scores one clamped prediction against its ground truth.
inline MetricRow score_image(const Image& pred, const Image& gt, const EvalOptions& opts, std::string path = {}) {
    Image p = shave(clamp01(pred), opts.shave);
    Image g = shave(gt, opts.shave);
    if (opts.luma_only) {
        p = luma(p);
        g = luma(g);
    }
    return {std::move(path), psnr(p, g, 1.0), ssim(p, g, 1.0)};
}

// Receives a batch of same-sized pairs and returns predictions for batch.lr.
using Predictor = std::function<Image(const Batch&)>;

// Runs `predict` over consecutive runs of up to opts.batch same-sized pairs.
// Rows keep the order of `pairs`.
inline MetricReport evaluate_pairs(std::span<const ImagePair> pairs, const Predictor& predict, const EvalOptions& opts,
                                   std::string dataset, std::size_t scale, std::string label = "baseline") {
    MetricReport report;
    report.dataset = std::move(dataset);
    report.scale = scale;
    report.label = std::move(label);
    const std::size_t batch = opts.batch == 0 ? 1 : opts.batch;
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i + 1;
        while (j < pairs.size() && j - i < batch && pairs[j].lr.shape() == pairs[i].lr.shape()) ++j;
        std::vector<Image> lr, hr;
        for (std::size_t k = i; k < j; ++k) {
            lr.push_back(pairs[k].lr);
            hr.push_back(pairs[k].hr);
        }
        Batch b;
        b.lr = stack_batch(std::span<const Image>(lr));
        b.hr = stack_batch(std::span<const Image>(hr));
        const Image pred = predict(b);
        if (!(pred.shape() == b.hr.shape())) {
            throw DimensionError("evaluate: prediction shape " + pred.shape().str() + " does not match HR " +
                                 b.hr.shape().str());
        }
        for (std::size_t k = i; k < j; ++k) {
            report.rows.push_back(score_image(batch_item(pred, k - i), pairs[k].hr, opts, pairs[k].source));
        }
        i = j;
    }
    report.finalize();
    return report;
}

// Degrade every manifest image at `scale`, super-resolve it with `weights`,
// and score the clamped result against the HR original.
inline MetricReport evaluate_dataset(RdnWeights<float>& weights, const DatasetManifest& manifest, std::size_t scale,
                                     const EvalOptions& opts = {}) {
    if (weights.config().scale != scale) {
        throw DimensionError("evaluate: weights were built for scale " + std::to_string(weights.config().scale) +
                             ", asked for " + std::to_string(scale));
    }
    const auto pairs = load_pairs(manifest, scale);
    return evaluate_pairs(
        pairs, [&weights](const Batch& b) { return predict(b.lr, weights); }, opts, manifest.name, scale,
        weights.config().ablation.label());
}

namespace detail {
inline std::string fmt(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}
}  // namespace detail

// CSV: header "path,scale,psnr_db,ssim", one row per image, aggregate last.
inline std::string report_csv(const MetricReport& report) {
    std::ostringstream os;
    os << "path,scale,psnr_db,ssim\n";
    for (const auto& r : report.rows) {
        os << r.path << ',' << report.scale << ',' << detail::fmt(r.psnr_db, 6) << ',' << detail::fmt(r.ssim, 6) << '\n';
    }
    os << "mean," << report.scale << ',' << detail::fmt(report.mean_psnr, 6) << ',' << detail::fmt(report.mean_ssim, 6)
       << '\n';
    return os.str();
}

// Plain-text table, one line per dataset and a PSNR/SSIM column pair per scale.
inline std::string report_table(std::span<const MetricReport> reports) {
    std::vector<std::size_t> scales;
    std::vector<std::string> datasets;
    std::map<std::pair<std::string, std::size_t>, const MetricReport*> cells;
    for (const auto& r : reports) {
        if (std::find(scales.begin(), scales.end(), r.scale) == scales.end()) scales.push_back(r.scale);
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
        cells[{r.dataset, r.scale}] = &r;
    }
    std::sort(scales.begin(), scales.end());
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-14s", "Dataset");
    os << buf;
    for (std::size_t s : scales) {
        std::snprintf(buf, sizeof buf, " | %zux PSNR  SSIM ", s);
        os << buf;
    }
    os << '\n';
    for (const auto& d : datasets) {
        std::snprintf(buf, sizeof buf, "%-14s", d.c_str());
        os << buf;
        for (std::size_t s : scales) {
            auto it = cells.find({d, s});
            if (it == cells.end()) {
                os << " |      -      -   ";
            } else {
                std::snprintf(buf, sizeof buf, " | %8.2f  %5.3f", it->second->mean_psnr, it->second->mean_ssim);
                os << buf;
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace rdn
