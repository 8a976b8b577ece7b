// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/render/image.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace lensfield {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 99.0;

inline void require_same_size(const Image8 &a, const Image8 &b, const char *what) {
    if (a.width != b.width || a.height != b.height)
        throw DomainError(concat(what, ": image sizes differ (", a.width, "x", a.height, " vs ", b.width, "x",
                                 b.height, ")"));
}

/// Mean squared error of [0, 1]-scaled 8-bit values over all channels.
inline double mse(const Image8 &a, const Image8 &b) {
    require_same_size(a, b, "mse");
    double sum = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = (double(a.rgb[i]) - double(b.rgb[i])) / 255.0;
        sum += d * d;
    }
    return a.rgb.empty() ? 0.0 : sum / double(a.rgb.size());
}

inline double psnr_from_mse(double m) {
    if (m <= 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

inline double psnr(const Image8 &a, const Image8 &b) { return psnr_from_mse(mse(a, b)); }

/// PSNR of two linear images after sRGB encoding and 8-bit quantization.
inline double psnr(const Image &a, const Image &b) { return psnr(encode_srgb8(a), encode_srgb8(b)); }

namespace detail {

inline std::array<double, 11> ssim_kernel() {
    std::array<double, 11> k{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double x = i - 5;
        k[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        sum += k[i];
    }
    for (double &v : k)
        v /= sum;
    return k;
}

// Separable 11x11 Gaussian filter, valid region only.
inline std::vector<double> filter_valid(const std::vector<double> &img, int w, int h) {
    static const auto k = ssim_kernel();
    const int ow = w - 10, oh = h - 10;
    std::vector<double> rows(size_t(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i)
                s += k[i] * img[size_t(y) * w + x + i];
            rows[size_t(y) * ow + x] = s;
        }
    std::vector<double> out(size_t(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i)
                s += k[i] * rows[size_t(y + i) * ow + x];
            out[size_t(y) * ow + x] = s;
        }
    return out;
}

} // namespace detail

/// Mean SSIM over channels: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, valid window positions only.
inline double ssim(const Image8 &a, const Image8 &b) {
    require_same_size(a, b, "ssim");
    if (a.width < 11 || a.height < 11)
        throw DomainError(concat("ssim: images must be at least 11x11, got ", a.width, "x", a.height));
    const int w = a.width, h = a.height;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> x(size_t(w) * h), y(size_t(w) * h), xx(x.size()), yy(x.size()), xy(x.size());
        for (size_t p = 0; p < x.size(); ++p) {
            x[p] = a.rgb[p * 3 + ch] / 255.0;
            y[p] = b.rgb[p * 3 + ch] / 255.0;
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = detail::filter_valid(x, w, h), my = detail::filter_valid(y, w, h);
        const auto sxx = detail::filter_valid(xx, w, h), syy = detail::filter_valid(yy, w, h),
                   sxy = detail::filter_valid(xy, w, h);
        double sum = 0.0;
        for (size_t p = 0; p < mx.size(); ++p) {
            const double vx = sxx[p] - mx[p] * mx[p];
            const double vy = syy[p] - my[p] * my[p];
            const double cov = sxy[p] - mx[p] * my[p];
            sum += ((2 * mx[p] * my[p] + c1) * (2 * cov + c2)) /
                   ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        total += sum / double(mx.size());
    }
    return total / 3.0;
}

inline double ssim(const Image &a, const Image &b) { return ssim(encode_srgb8(a), encode_srgb8(b)); }

} // namespace lensfield
