// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"

#include <cmath>

namespace lensfield {

/// Thin-lens camera. Camera frame follows the OpenCV convention (x right,
/// y down, z forward); `rotation` maps camera to world and `translation` is
/// the lens center in world coordinates. All lengths are meters.
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double aperture_radius = 0.0;
    double focal_length = 0.05;
    double focus_distance = 1.0;

    const Vec3 &center() const { return translation; }
    Vec3 right() const { return rotation.col(0); }
    Vec3 down() const { return rotation.col(1); }
    Vec3 axis() const { return rotation.col(2); }

    /// Lens-to-sensor distance of the focused thin lens, f z_f / (z_f - f).
    double image_distance() const {
        return focal_length * focus_distance / (focus_distance - focal_length);
    }

    bool is_pinhole() const { return aperture_radius == 0.0; }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw DomainError(concat("camera: image size must be positive, got ", width, "x", height));
        if (!(fx > 0.0) || !(fy > 0.0))
            throw DomainError(concat("camera: focal lengths in pixels must be positive, got fx=", fx, " fy=", fy));
        if (!std::isfinite(aperture_radius) || aperture_radius < 0.0)
            throw DomainError(concat("camera: aperture radius must be >= 0, got ", aperture_radius));
        if (!(focal_length > 0.0))
            throw DomainError(concat("camera: focal length must be > 0, got ", focal_length));
        if (!(focus_distance > focal_length))
            throw DomainError(concat("camera: focus distance ", focus_distance, " must exceed focal length ",
                                     focal_length));
        const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (!(ortho <= 1e-6))
            throw DomainError(concat("camera: rotation is not orthonormal (deviation ", ortho, ")"));
        if (!translation.allFinite())
            throw DomainError("camera: translation is not finite");
    }

    bool operator==(const Camera &) const = default;
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();

    Vec3 at(double t) const { return origin + t * direction; }
};

struct RayBounds {
    double t_near = 0.0;
    double t_far = 1.0;

    bool valid() const { return t_near >= 0.0 && t_near < t_far; }
};

/// A point drawn from the aperture for one of the `count` rays of a pixel.
/// `disk` holds the unit-disk coordinates along (right, down) so the same
/// draw can be re-scaled when the aperture radius changes.
struct ApertureSample {
    Vec3 point = Vec3::Zero();
    Vec2 disk = Vec2::Zero();
    int index = 0;
    int count = 1;
};

/// Camera looking from `eye` toward `target`; `up` is the world up hint.
inline Mat3 look_at_rotation(const Vec3 &eye, const Vec3 &target, const Vec3 &up = Vec3::UnitZ()) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 hint = up;
    if (std::abs(forward.dot(up.normalized())) > 0.999)
        hint = std::abs(forward.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 right = forward.cross(hint).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    return r;
}

/// Ray through continuous pixel position `px` and the lens center.
/// Pixel (i, j) has its center at (i + 0.5, j + 0.5).
inline Ray pinhole_ray(const Camera &camera, const Vec2 &px) {
    if (!(px.x() >= 0.0 && px.x() <= camera.width && px.y() >= 0.0 && px.y() <= camera.height))
        throw DomainError(concat("pinhole_ray: pixel (", px.x(), ", ", px.y(), ") outside ", camera.width, "x",
                                 camera.height, " image"));
    const Vec3 local((px.x() - camera.cx) / camera.fx, (px.y() - camera.cy) / camera.fy, 1.0);
    return Ray{camera.center(), (camera.rotation * local).normalized()};
}

inline Vec2 pixel_center(int col, int row) { return Vec2(col + 0.5, row + 0.5); }

/// Thin-lens ray from aperture point `sample.point` through the focus point
/// o + d z_f of `base`. A sample at the lens center returns `base` unchanged.
inline Ray lens_ray(const Camera &camera, const Ray &base, const ApertureSample &sample) {
    if (sample.point == base.origin)
        return base;
    const Vec3 focus_point = base.origin + base.direction * camera.focus_distance;
    const Vec3 to_focus = focus_point - sample.point;
    const double len = to_focus.norm();
    if (!(len >= 1e-12))
        throw NumericError(concat("lens_ray: aperture point ", to_string(sample.point),
                                  " coincides with focus point ", to_string(focus_point)));
    return Ray{sample.point, to_focus / len};
}

/// Blur-circle radius on the sensor (meters) of a point at depth `z`.
inline double circle_of_confusion(const Camera &camera, double z) {
    if (!(z > 0.0))
        throw DomainError(concat("circle_of_confusion: depth must be > 0, got ", z));
    if (!(camera.focus_distance > camera.focal_length))
        throw DomainError(concat("circle_of_confusion: focus distance ", camera.focus_distance,
                                 " must exceed focal length ", camera.focal_length));
    return camera.aperture_radius * std::abs(z - camera.focus_distance) / z * camera.focal_length /
           (camera.focus_distance - camera.focal_length);
}

/// Sensor-space length converted to pixels. The pixel pitch of a focused
/// thin lens with pinhole intrinsics fx is image_distance / fx.
inline double sensor_to_pixels(const Camera &camera, double sensor_length) {
    return sensor_length * camera.fx / camera.image_distance();
}

} // namespace lensfield
