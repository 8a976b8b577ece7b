// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/recon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace lensfield {

struct BatchItem {
    int view = 0;
    int col = 0;
    int row = 0;
    Rgb target = Rgb::Zero();
};

/// Pixels needed so that n rays each evaluating about `samples_per_ray`
/// quadrature points reach `target` points in total.
inline int batch_pixel_count(long target, double samples_per_ray, int rays_per_pixel, int max_pixels) {
    if (rays_per_pixel < 1)
        throw DomainError(concat("batch_pixel_count: rays_per_pixel must be >= 1, got ", rays_per_pixel));
    const double per_pixel = std::max(1.0, samples_per_ray) * rays_per_pixel;
    const double pixels = std::floor(double(target) / per_pixel);
    return static_cast<int>(std::clamp(pixels, 1.0, double(std::max(1, max_pixels))));
}

/// Running average of evaluated quadrature samples per ray.
class SampleEstimator {
  public:
    explicit SampleEstimator(double initial = 256.0, double rate = 0.2) : value_(initial), rate_(rate) {}

    double samples_per_ray() const { return value_; }
    void observe(long samples, long rays) {
        if (rays > 0)
            value_ += rate_ * (double(samples) / double(rays) - value_);
    }
    bool operator==(const SampleEstimator &) const = default;

  private:
    double value_;
    double rate_;
};

/// `count` pixels drawn uniformly over all training pixels.
inline std::vector<BatchItem> make_batch(const Dataset &data, std::mt19937_64 &rng, int count) {
    if (data.train.empty())
        throw DomainError("make_batch: dataset has no training views");
    std::vector<size_t> offsets;
    size_t total = 0;
    for (const View &v : data.train) {
        offsets.push_back(total);
        total += v.image.pixel_count();
    }
    std::uniform_int_distribution<size_t> pick(0, total - 1);
    std::vector<BatchItem> batch(count);
    for (BatchItem &item : batch) {
        const size_t p = pick(rng);
        const auto it = std::upper_bound(offsets.begin(), offsets.end(), p);
        item.view = static_cast<int>(it - offsets.begin()) - 1;
        const Image &img = data.train[item.view].image;
        const size_t local = p - offsets[item.view];
        item.col = static_cast<int>(local % img.width);
        item.row = static_cast<int>(local / img.width);
        item.target = img.at(item.col, item.row);
    }
    return batch;
}

} // namespace lensfield
