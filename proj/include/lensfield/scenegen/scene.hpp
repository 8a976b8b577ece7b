// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/field/voxel_field.hpp"
#include "lensfield/parallel.hpp"

#include <limits>
#include <string>
#include <vector>

namespace lensfield {

/// Axis-aligned box or sphere of constant density and linear color.
struct Primitive {
    enum class Kind { Box, Sphere };
    Kind kind = Kind::Box;
    Vec3 lo = Vec3::Zero(); // box
    Vec3 hi = Vec3::Zero(); // box
    Vec3 center = Vec3::Zero(); // sphere
    double radius = 0.0;        // sphere
    double density = 0.0;
    Rgb color = Rgb::Zero();

    static Primitive box(const Vec3 &lo, const Vec3 &hi, double density, const Rgb &color) {
        Primitive p;
        p.kind = Kind::Box;
        p.lo = lo;
        p.hi = hi;
        p.density = density;
        p.color = color;
        return p;
    }
    static Primitive sphere(const Vec3 &center, double radius, double density, const Rgb &color) {
        Primitive p;
        p.kind = Kind::Sphere;
        p.center = center;
        p.radius = radius;
        p.density = density;
        p.color = color;
        return p;
    }

    bool contains(const Vec3 &x) const {
        if (kind == Kind::Box)
            return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
        return (x - center).squaredNorm() <= radius * radius;
    }

    /// Euclidean distance from x to the primitive (0 inside).
    double distance(const Vec3 &x) const {
        if (kind == Kind::Box)
            return (lo - x).cwiseMax(x - hi).cwiseMax(0.0).norm();
        return std::max(0.0, (x - center).norm() - radius);
    }

    Aabb bounds() const {
        if (kind == Kind::Box)
            return Aabb{lo, hi};
        return Aabb{center - Vec3::Constant(radius), center + Vec3::Constant(radius)};
    }
};

/// Analytic scene; later primitives overwrite earlier ones where they overlap.
struct SceneSpec {
    std::string name;
    Aabb bbox;
    std::vector<Primitive> primitives;

    void validate() const {
        if (!((bbox.hi.array() > bbox.lo.array()).all()))
            throw ConfigError(concat("scene '", name, "': bounding box must have positive extent"));
        for (size_t i = 0; i < primitives.size(); ++i) {
            const Primitive &p = primitives[i];
            const Aabb b = p.bounds();
            if (p.kind == Primitive::Kind::Box && !((p.hi.array() >= p.lo.array()).all()))
                throw ConfigError(concat("scene '", name, "': box ", i, " has hi < lo"));
            if (p.kind == Primitive::Kind::Sphere && !(p.radius > 0.0))
                throw ConfigError(concat("scene '", name, "': sphere ", i, " needs radius > 0"));
            if (!((b.lo.array() >= bbox.lo.array()).all() && (b.hi.array() <= bbox.hi.array()).all()))
                throw ConfigError(concat("scene '", name, "': primitive ", i, " [", to_string(b.lo), ", ",
                                         to_string(b.hi), "] leaves the bounding box"));
            if (!(p.density >= 0.0))
                throw ConfigError(concat("scene '", name, "': primitive ", i, " has negative density"));
            if (!((p.color >= 0.0).all() && (p.color <= 1.0).all()))
                throw ConfigError(concat("scene '", name, "': primitive ", i, " color outside [0, 1]"));
        }
    }

    /// Index of the primitive that owns x, or -1.
    int owner(const Vec3 &x) const {
        for (int i = static_cast<int>(primitives.size()) - 1; i >= 0; --i)
            if (primitives[i].contains(x))
                return i;
        return -1;
    }
};

/// Density given to uncovered space.
inline constexpr double kBakeEmptyDensity = 1e-6;

/// Rasterizes the scene at voxel corners. Each corner averages density and
/// color over 8 sub-samples at +-1/4 cell; uncovered corners take the color
/// of the nearest primitive so that interpolation does not bleed dark edges.
/// Stored parameters are the activation inverses of the averages.
inline VoxelField bake_scene(const SceneSpec &spec, Resolution res, bool serial = true) {
    spec.validate();
    VoxelField field(res, spec.bbox);
    const Vec3 quarter = 0.25 * field.cell_size();
    const int nx = res.x + 1, ny = res.y + 1, nz = res.z + 1;
    const std::span<float> params = field.mutable_params();
    parallel_for(size_t(nz), worker_count(serial), [&](size_t k0, size_t k1, int) {
        for (int k = int(k0); k < int(k1); ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const Vec3 p = field.corner_position(i, j, k);
                    double density = 0.0;
                    Rgb color = Rgb::Zero();
                    int covered = 0;
                    for (int s = 0; s < 8; ++s) {
                        const Vec3 offset((s & 1) ? quarter.x() : -quarter.x(), (s & 2) ? quarter.y() : -quarter.y(),
                                          (s & 4) ? quarter.z() : -quarter.z());
                        const int o = spec.owner(p + offset);
                        if (o < 0)
                            continue;
                        density += spec.primitives[o].density;
                        color += spec.primitives[o].color;
                        ++covered;
                    }
                    density /= 8.0;
                    if (covered > 0) {
                        color /= covered;
                    } else {
                        double best = std::numeric_limits<double>::infinity();
                        color = Rgb::Constant(0.5);
                        for (const Primitive &prim : spec.primitives) {
                            const double d = prim.distance(p);
                            if (d < best) {
                                best = d;
                                color = prim.color;
                            }
                        }
                    }
                    float *out = &params[field.corner_index(i, j, k) * VoxelField::kChannels];
                    out[0] = static_cast<float>(inverse_softplus(std::max(density, kBakeEmptyDensity)));
                    for (int ch = 0; ch < 3; ++ch)
                        out[1 + ch] = static_cast<float>(inverse_sigmoid(std::clamp(color[ch], 1e-3, 1.0 - 1e-3)));
                }
    });
    return field;
}

/// Floor of checker tiles, a banded pillar, a sphere and two small cubes in
/// [-1, 1]^3 (z up). The pillar is a foreground occluder for most views.
inline SceneSpec occluder_scene(double density = 60.0) {
    SceneSpec s;
    s.name = "occluder";
    s.bbox = Aabb{};
    const Rgb light(0.8, 0.78, 0.7), dark(0.12, 0.18, 0.55);
    const int tiles = 6;
    const double lo = -0.9, size = 1.8 / tiles;
    for (int ty = 0; ty < tiles; ++ty)
        for (int tx = 0; tx < tiles; ++tx) {
            const Vec3 a(lo + tx * size, lo + ty * size, -0.9);
            const Vec3 b(lo + (tx + 1) * size, lo + (ty + 1) * size, -0.75);
            s.primitives.push_back(Primitive::box(a, b, density, ((tx + ty) % 2) ? dark : light));
        }
    const Rgb band_a(0.85, 0.25, 0.1), band_b(0.95, 0.85, 0.3);
    const int bands = 5;
    const double z0 = -0.75, z1 = 0.55;
    for (int b = 0; b < bands; ++b) {
        const double za = z0 + (z1 - z0) * b / bands, zb = z0 + (z1 - z0) * (b + 1) / bands;
        s.primitives.push_back(Primitive::box(Vec3(0.22, -0.48, za), Vec3(0.5, -0.2, zb), density, (b % 2) ? band_b : band_a));
    }
    s.primitives.push_back(Primitive::sphere(Vec3(-0.35, 0.3, -0.37), 0.38, density, Rgb(0.15, 0.65, 0.3)));
    s.primitives.push_back(Primitive::box(Vec3(0.35, 0.35, -0.75), Vec3(0.55, 0.55, -0.55), density, Rgb(0.9, 0.9, 0.9)));
    s.primitives.push_back(Primitive::box(Vec3(-0.6, -0.6, -0.75), Vec3(-0.45, -0.45, -0.45), density, Rgb(0.6, 0.1, 0.6)));
    return s;
}

/// Two-tone box in [-1, 1]^3, small enough for unit-test training runs.
inline SceneSpec box_scene(double density = 30.0) {
    SceneSpec s;
    s.name = "box";
    s.bbox = Aabb{};
    s.primitives.push_back(Primitive::box(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.0), density, Rgb(0.8, 0.3, 0.1)));
    s.primitives.push_back(Primitive::box(Vec3(-0.5, -0.5, 0.0), Vec3(0.5, 0.5, 0.5), density, Rgb(0.1, 0.4, 0.8)));
    return s;
}

inline SceneSpec scene_by_name(const std::string &name) {
    if (name == "occluder")
        return occluder_scene();
    if (name == "box")
        return box_scene();
    if (name == "empty") {
        SceneSpec s;
        s.name = "empty";
        return s;
    }
    throw ConfigError(concat("unknown scene '", name, "' (expected occluder, box or empty)"));
}

} // namespace lensfield
