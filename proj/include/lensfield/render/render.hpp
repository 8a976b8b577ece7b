// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/field/voxel_field.hpp"
#include "lensfield/optics/camera.hpp"
#include "lensfield/optics/sampling.hpp"
#include "lensfield/parallel.hpp"
#include "lensfield/render/image.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace lensfield {

struct RenderConfig {
    int rays_per_pixel = 1;
    double step_size = 0.01;
    RayBounds bounds{0.0, 16.0};
    int max_samples_per_ray = 4096;
    Rgb background = Rgb::Zero();
    bool use_occupancy = false;
    /// Marching stops once transmittance drops below this value.
    double min_transmittance = 1e-4;

    void validate() const {
        if (rays_per_pixel < 1)
            throw DomainError(concat("RenderConfig: rays_per_pixel must be >= 1, got ", rays_per_pixel));
        if (!(step_size > 0.0))
            throw DomainError(concat("RenderConfig: step_size must be > 0, got ", step_size));
        if (!bounds.valid())
            throw DomainError(concat("RenderConfig: invalid ray bounds [", bounds.t_near, ", ", bounds.t_far, ")"));
        if (max_samples_per_ray < 1)
            throw DomainError(concat("RenderConfig: max_samples_per_ray must be >= 1, got ", max_samples_per_ray));
    }
};

/// Which of the n per-pixel depth strata a ray marches in.
struct Stratum {
    int index = 0;
    int count = 1;
    double jitter = 0.5;
};

struct TapeSample {
    double t;
    Vec3 x;
    double sigma;
    Rgb color;
    double alpha;
    double transmittance; // before this sample
};

/// Quadrature record of one ray, enough to run the reverse pass.
struct RayTape {
    Ray ray;
    ApertureSample aperture;
    Stratum stratum;
    double step = 0.0;
    std::vector<TapeSample> samples;
    double final_transmittance = 1.0;
    Rgb background = Rgb::Zero();
    Rgb color = Rgb::Zero();
    uint64_t field_version = 0;
};

struct RayResult {
    Rgb color = Rgb::Zero();
    double alpha = 0.0;
    int evaluated_samples = 0;
};

struct PixelColor {
    Rgb color = Rgb::Zero();
    double alpha = 0.0;
    int evaluated_samples = 0;
};

struct PixelTape {
    Ray base;
    uint64_t seed = 0;
    std::vector<RayTape> rays;
    int ray_count = 0;
    PixelColor result;
};

/// Alpha-compositing quadrature of the emission-absorption integral along
/// `ray` with a fixed step; sample offsets inside each step follow `stratum`.
/// Samples in cells the occupancy grid marks empty are skipped.
inline RayResult render_ray(const VoxelField &field, const Ray &ray, const RenderConfig &cfg, const Stratum &stratum,
                            RayTape *tape = nullptr) {
    const double step = cfg.step_size;
    const double offset = stratified_t(stratum.index, stratum.count, 0.0, step, stratum.jitter);
    const OccupancyGrid *occupancy = cfg.use_occupancy ? field.occupancy() : nullptr;
    if (tape) {
        tape->ray = ray;
        tape->stratum = stratum;
        tape->step = step;
        tape->samples.clear();
        tape->background = cfg.background;
        tape->field_version = field.version();
    }
    double transmittance = 1.0;
    Rgb accum = Rgb::Zero();
    int evaluated = 0;
    if (auto hit = field.bbox().intersect(ray)) {
        const double t_lo = std::max(hit->first, cfg.bounds.t_near);
        const double t_hi = std::min(hit->second, cfg.bounds.t_far);
        if (t_lo <= t_hi) {
            const double k_start = std::max(0.0, std::ceil((t_lo - cfg.bounds.t_near - offset) / step));
            const long k_end = std::min<long>(static_cast<long>(k_start) + cfg.max_samples_per_ray,
                                              static_cast<long>(std::ceil((t_hi - cfg.bounds.t_near) / step)) + 1);
            for (long k = static_cast<long>(k_start); k < k_end; ++k) {
                const double t = cfg.bounds.t_near + k * step + offset;
                if (t > t_hi || t >= cfg.bounds.t_far)
                    break;
                const Vec3 x = ray.origin + t * ray.direction;
                if (!field.bbox().contains(x))
                    continue;
                const auto loc = field.locate(x);
                if (occupancy && !occupancy->occupied(loc.cell)) {
                    // Jump to the last grid sample before leaving the empty
                    // block or cell; the samples in between are all empty.
                    const int span = occupancy->block_occupied(loc.index) ? 1 : OccupancyGrid::kBlock;
                    const double t_exit = field.cell_exit(loc, ray.origin, ray.direction, span) - 1e-9;
                    const long next = static_cast<long>(std::ceil((t_exit - cfg.bounds.t_near - offset) / step));
                    if (next > k + 1)
                        k = next - 1;
                    continue;
                }
                const FieldSample s = field.sample_at(loc);
                if (!std::isfinite(s.sigma) || !s.color.allFinite())
                    throw NumericError(concat("render_ray: non-finite field value at ", to_string(x)));
                ++evaluated;
                const double decay = std::exp(-s.sigma * step);
                const double alpha = 1.0 - decay;
                accum += (transmittance * alpha) * s.color;
                if (tape)
                    tape->samples.push_back(TapeSample{t, x, s.sigma, s.color, alpha, transmittance});
                transmittance *= decay;
                if (transmittance < cfg.min_transmittance)
                    break;
            }
        }
    }
    RayResult result;
    result.color = accum + transmittance * cfg.background;
    result.alpha = 1.0 - transmittance;
    result.evaluated_samples = evaluated;
    if (tape) {
        tape->final_transmittance = transmittance;
        tape->color = result.color;
    }
    return result;
}

namespace detail {

// Retries the sample at Sobol index i + n, i + 2n, ... when the aperture point
// lands on the focus point.
inline Ray lens_ray_with_redraw(const Camera &camera, const Ray &base, uint64_t seed, int i, int n,
                                ApertureSample &sample) {
    for (int attempt = 0;; ++attempt) {
        try {
            return lens_ray(camera, base, sample);
        } catch (const NumericError &) {
            if (attempt >= 16)
                throw;
            const uint32_t index = static_cast<uint32_t>(i + (attempt + 1) * n);
            const Vec2 disk = concentric_square_to_disk(sobol_2d_scrambled(index, seed));
            sample = ApertureSample{aperture_point(camera, disk), disk, i, n};
        }
    }
}

// Multiplier close to n / golden ratio and coprime with n; i -> (i * m) mod n
// is a permutation that spreads consecutive indices over all strata.
inline int golden_stride(int n) {
    int m = std::max(1, static_cast<int>(std::lround(n * 0.6180339887498949)));
    while (std::gcd(m, n) != 1)
        ++m;
    return m;
}

template <typename SampleFn, typename StratumFn>
PixelColor render_pixel_with(const VoxelField &field, const Camera &camera, const Vec2 &px, const RenderConfig &cfg,
                             uint64_t pixel_seed, int n, SampleFn &&draw, StratumFn &&stratum_of, PixelTape *tape) {
    const Ray base = pinhole_ray(camera, px);
    const double jitter = pixel_jitter(pixel_seed);
    if (tape) {
        tape->base = base;
        tape->seed = pixel_seed;
        tape->ray_count = n;
        if (static_cast<int>(tape->rays.size()) < n)
            tape->rays.resize(n);
    }
    Rgb sum = Rgb::Zero();
    double alpha = 0.0;
    int evaluated = 0;
    for (int i = 0; i < n; ++i) {
        ApertureSample sample = draw(i);
        const Ray ray = lens_ray_with_redraw(camera, base, pixel_seed, i, n, sample);
        RayTape *rt = tape ? &tape->rays[i] : nullptr;
        const RayResult r = render_ray(field, ray, cfg, Stratum{stratum_of(i), n, jitter}, rt);
        if (rt)
            rt->aperture = sample;
        sum += r.color;
        alpha += r.alpha;
        evaluated += r.evaluated_samples;
    }
    PixelColor out{sum / n, alpha / n, evaluated};
    if (tape)
        tape->result = out;
    return out;
}

} // namespace detail

/// Aperture-averaged pixel color: mean of n thin-lens rays through disk
/// samples. A pinhole camera (a_R = 0) collapses to its single pinhole ray.
inline PixelColor render_pixel(const VoxelField &field, const Camera &camera, const Vec2 &px, const RenderConfig &cfg,
                               uint64_t pixel_seed, PixelTape *tape = nullptr) {
    const int n = camera.is_pinhole() ? 1 : cfg.rays_per_pixel;
    return detail::render_pixel_with(
        field, camera, px, cfg, pixel_seed, n,
        [&](int i) { return sample_aperture_disk(camera, pixel_seed, i, n); }, [](int i) { return i; }, tape);
}

/// Mean color over rays leaving the aperture boundary, with the same per-pixel
/// seed and set of depth strata as render_pixel. Ring angles are ordered by
/// index, so strata are assigned through a stride permutation to keep depth
/// offsets uncorrelated with angle.
inline PixelColor render_ring_pixel(const VoxelField &field, const Camera &camera, const Vec2 &px,
                                    const RenderConfig &cfg, uint64_t pixel_seed, PixelTape *tape = nullptr) {
    if (!(camera.aperture_radius > 0.0))
        throw DomainError("render_ring_pixel: aperture radius must be > 0");
    const int n = cfg.rays_per_pixel;
    return detail::render_pixel_with(
        field, camera, px, cfg, pixel_seed, n,
        [&](int i) { return sample_aperture_ring(camera, pixel_seed, i, n); },
        [n, m = detail::golden_stride(n)](int i) { return static_cast<int>((int64_t(i) * m) % n); }, tape);
}

inline uint64_t pixel_seed(uint64_t image_seed, int col, int row) {
    return hash_values(image_seed, static_cast<uint64_t>(col), static_cast<uint64_t>(row));
}

/// Renders every pixel in row-major order. Pixel seeds derive from
/// `image_seed`, so output does not depend on the worker count.
inline Image render_image(const VoxelField &field, const Camera &camera, const RenderConfig &cfg, uint64_t image_seed,
                          bool serial = true) {
    cfg.validate();
    camera.validate();
    Image img(camera.width, camera.height);
    parallel_for(img.pixel_count(), worker_count(serial), [&](size_t begin, size_t end, int) {
        for (size_t p = begin; p < end; ++p) {
            const int col = static_cast<int>(p % camera.width);
            const int row = static_cast<int>(p / camera.width);
            const PixelColor c =
                render_pixel(field, camera, pixel_center(col, row), cfg, pixel_seed(image_seed, col, row));
            img.set(col, row, c.color);
        }
    });
    return img;
}

} // namespace lensfield
