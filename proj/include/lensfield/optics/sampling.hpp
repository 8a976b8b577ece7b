// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/optics/camera.hpp"

#include <array>
#include <cmath>
#include <cstdint>

namespace lensfield {

namespace detail {

// Direction numbers of the first two Sobol dimensions. Dimension 0 is the
// van der Corput sequence; dimension 1 uses the primitive polynomial x + 1
// with m_1 = 1, giving m_k = (2 m_{k-1}) ^ m_{k-1}.
constexpr std::array<uint32_t, 32> sobol_directions(int dim) {
    std::array<uint32_t, 32> v{};
    if (dim == 0) {
        for (int k = 0; k < 32; ++k)
            v[k] = 1u << (31 - k);
        return v;
    }
    uint64_t m = 1;
    for (int k = 0; k < 32; ++k) {
        v[k] = static_cast<uint32_t>(m << (31 - k));
        m = (m << 1) ^ m;
    }
    return v;
}

inline constexpr auto kSobolDim0 = sobol_directions(0);
inline constexpr auto kSobolDim1 = sobol_directions(1);

} // namespace detail

/// Raw 32-bit digits of the `index`-th 2D Sobol point in Gray-code order.
constexpr std::array<uint32_t, 2> sobol_2d_bits(uint32_t index) {
    const uint32_t gray = index ^ (index >> 1);
    uint32_t x = 0, y = 0;
    for (int k = 0; gray >> k; ++k) {
        if ((gray >> k) & 1u) {
            x ^= detail::kSobolDim0[k];
            y ^= detail::kSobolDim1[k];
        }
    }
    return {x, y};
}

inline Vec2 sobol_2d(uint32_t index) {
    const auto bits = sobol_2d_bits(index);
    return Vec2(bits[0] * 0x1.0p-32, bits[1] * 0x1.0p-32);
}

/// Sobol point with random digit scrambling (XOR with per-dimension masks
/// derived from `seed`). Each scramble keeps the (0, m, 2)-net structure.
inline Vec2 sobol_2d_scrambled(uint32_t index, uint64_t seed) {
    const auto bits = sobol_2d_bits(index);
    const auto mx = static_cast<uint32_t>(hash_values(seed, 0x5eed0u) >> 32);
    const auto my = static_cast<uint32_t>(hash_values(seed, 0x5eed1u) >> 32);
    return Vec2((bits[0] ^ mx) * 0x1.0p-32, (bits[1] ^ my) * 0x1.0p-32);
}

/// Shirley-Chiu concentric map from [0,1)^2 onto the unit disk.
inline Vec2 concentric_square_to_disk(const Vec2 &u) {
    const Vec2 o = 2.0 * u - Vec2::Ones();
    if (o.x() == 0.0 && o.y() == 0.0)
        return Vec2::Zero();
    double r, theta;
    if (std::abs(o.x()) > std::abs(o.y())) {
        r = o.x();
        theta = 0.25 * kPi * (o.y() / o.x());
    } else {
        r = o.y();
        theta = 0.5 * kPi - 0.25 * kPi * (o.x() / o.y());
    }
    return Vec2(r * std::cos(theta), r * std::sin(theta));
}

/// Depth jitter in [0,1) shared by every ray of one pixel.
inline double pixel_jitter(uint64_t pixel_seed) { return hash_to_unit(hash_values(pixel_seed, 0x717u)); }

inline Vec3 aperture_point(const Camera &camera, const Vec2 &disk) {
    return camera.center() + camera.aperture_radius * (disk.x() * camera.right() + disk.y() * camera.down());
}

/// Area-uniform aperture sample for ray `i` of `n`. The aperture plane passes
/// through the lens center perpendicular to the optical axis.
inline ApertureSample sample_aperture_disk(const Camera &camera, uint64_t pixel_seed, int i, int n) {
    if (i < 0 || i >= n)
        throw DomainError(concat("sample_aperture_disk: index ", i, " outside [0, ", n, ")"));
    const Vec2 disk = concentric_square_to_disk(sobol_2d_scrambled(static_cast<uint32_t>(i), pixel_seed));
    return ApertureSample{aperture_point(camera, disk), disk, i, n};
}

/// Sample on the aperture boundary; angles are stratified over [0, 2pi) with
/// one per-pixel rotation.
inline ApertureSample sample_aperture_ring(const Camera &camera, uint64_t pixel_seed, int i, int n) {
    if (i < 0 || i >= n)
        throw DomainError(concat("sample_aperture_ring: index ", i, " outside [0, ", n, ")"));
    if (!(camera.aperture_radius > 0.0))
        throw DomainError("sample_aperture_ring: ring undefined for zero aperture radius");
    const double rotation = hash_to_unit(hash_values(pixel_seed, 0x819u));
    const double theta = 2.0 * kPi * (i + rotation) / n;
    const Vec2 disk(std::cos(theta), std::sin(theta));
    return ApertureSample{aperture_point(camera, disk), disk, i, n};
}

/// Offset of ray `i` of `n` inside the interval [t_start, t_end): the rays of
/// a pixel occupy disjoint strata, shifted by a shared jitter in [0,1).
inline double stratified_t(int i, int n, double t_start, double t_end, double jitter) {
    return t_start + ((i + jitter) / n) * (t_end - t_start);
}

} // namespace lensfield
