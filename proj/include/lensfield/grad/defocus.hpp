// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/grad/backward.hpp"
#include "lensfield/log.hpp"
#include "lensfield/optics/camera.hpp"
#include "lensfield/render/render.hpp"

#include <span>

namespace lensfield {

/// Loss gradients of one camera's defocus parameters.
struct DefocusGrads {
    double d_aperture = 0.0;
    double d_focus = 0.0;
};

/// d(dir)/d(z_f) for the thin-lens ray from aperture point `a` toward the
/// focus point P = o + d z_f:  (I - dir dir^T) d / |P - a|.
inline Vec3 focus_direction_derivative(const Camera &camera, const Ray &base, const Vec3 &aperture_point) {
    const Vec3 to_focus = base.origin + base.direction * camera.focus_distance - aperture_point;
    const double len = to_focus.norm();
    if (!(len >= 1e-12))
        throw NumericError(concat("focus_direction_derivative: aperture point ", to_string(aperture_point),
                                  " coincides with the focus point"));
    const Vec3 dir = to_focus / len;
    return (base.direction - dir * dir.dot(base.direction)) / len;
}

/// dL/dz_f of one pixel from the per-ray adjoints of backward_pixel. Ray
/// origins do not depend on z_f, so only the direction adjoints contribute.
inline double focus_gradient(const Camera &camera, const PixelTape &tape, std::span<const RayGrad> ray_grads) {
    double g = 0.0;
    for (int i = 0; i < tape.ray_count; ++i) {
        const Vec3 ddir = focus_direction_derivative(camera, tape.base, tape.rays[i].aperture.point);
        g += ray_grads[i].d_direction.dot(ddir);
    }
    return g;
}

/// Derivative of a disk average with respect to the disk radius, given the
/// boundary average: d/dR [ (1/(pi R^2)) int_disk C ] = (2/R) (C_ring(R) - C).
inline Rgb aperture_derivative(double aperture_radius, const Rgb &ring_color, const Rgb &disk_color) {
    return (2.0 / aperture_radius) * (ring_color - disk_color);
}

/// dL/da_R of one pixel from the ring average, rendered with the same pixel
/// seed as `disk` so both terms share their random numbers. The aperture
/// sample positions are never differentiated.
inline double aperture_gradient(const VoxelField &field, const Camera &camera, const Vec2 &px,
                                const RenderConfig &cfg, uint64_t pixel_seed, const PixelColor &disk,
                                const Rgb &adjoint) {
    if (!(camera.aperture_radius > 0.0)) {
        log_warning("aperture_gradient: aperture radius is zero, gradient defined only in the limit; returning 0");
        return 0.0;
    }
    const PixelColor ring = render_ring_pixel(field, camera, px, cfg, pixel_seed);
    return (adjoint * aperture_derivative(camera.aperture_radius, ring.color, disk.color)).sum();
}

/// Central difference (f(x+h) - f(x-h)) / 2h. `set` installs a parameter
/// value and may return the value actually stored (e.g. after float
/// rounding), which is then used for the denominator. The original value is
/// restored afterwards.
template <typename Eval, typename Set>
double fd_oracle(Eval &&eval, Set &&set, double x0, double h) {
    if (!(h > 0.0))
        throw DomainError(concat("fd_oracle: step must be > 0, got ", h));
    auto install = [&](double x) -> double {
        if constexpr (std::is_same_v<std::invoke_result_t<Set, double>, void>) {
            set(x);
            return x;
        } else {
            return static_cast<double>(set(x));
        }
    };
    const double xp = install(x0 + h);
    const double fp = eval();
    const double xm = install(x0 - h);
    const double fm = eval();
    install(x0);
    return (fp - fm) / (xp - xm);
}

} // namespace lensfield
