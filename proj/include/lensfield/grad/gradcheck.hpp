// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/grad/backward.hpp"
#include "lensfield/grad/defocus.hpp"
#include "lensfield/render/render.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace lensfield {

/// Probe counts and tolerances of the analytic-vs-finite-difference suite.
struct GradcheckConfig {
    uint64_t seed = 1;
    int field_probes = 30;
    int focus_probes = 10;
    int aperture_probes = 10;
    double field_tolerance = 1e-3;
    double focus_tolerance = 1e-2;
    double aperture_tolerance = 5e-2;
    /// Rays per pixel for the aperture probes; the finite difference of a
    /// disk average needs many rays to resolve a 1e-3 change of radius.
    int aperture_rays = 16384;
    /// Defocus probes whose finite difference is smaller than this are
    /// redrawn; below it the estimators' absolute noise (about 1e-4 at 16384
    /// rays) dominates the relative error.
    double min_defocus_fd = 1e-2;

    void validate() const {
        if (field_probes < 0 || focus_probes < 0 || aperture_probes < 0)
            throw ConfigError("gradcheck: probe counts must be >= 0");
        if (aperture_rays < 16)
            throw ConfigError(concat("gradcheck: aperture_rays must be >= 16, got ", aperture_rays));
    }
};

struct GradProbe {
    int index = 0;
    std::string kind; // field | focus | aperture
    double analytic = 0.0;
    double fd = 0.0;
    double rel_err = 0.0;
    double tolerance = 0.0;
    bool passed() const { return rel_err < tolerance; }
};

inline double relative_error(double analytic, double fd) { return std::abs(analytic - fd) / (std::abs(fd) + 1e-8); }

namespace detail {

inline Camera probe_camera(int size, double fx, double aperture_radius, double focus_distance) {
    Camera cam;
    cam.width = cam.height = size;
    cam.fx = cam.fy = fx;
    cam.cx = cam.cy = 0.5 * size;
    cam.aperture_radius = aperture_radius;
    cam.focus_distance = focus_distance;
    return cam;
}

// Random field in [-1, 1]^3 with moderate density.
inline VoxelField random_field(uint64_t seed) {
    VoxelField f(Resolution{5, 5, 5}, Aabb{});
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    const std::span<float> p = f.mutable_params();
    for (size_t c = 0; c < f.corner_count(); ++c) {
        p[c * 4] = 0.5f + n(rng);
        for (int ch = 1; ch < 4; ++ch)
            p[c * 4 + ch] = 1.5f * n(rng);
    }
    return f;
}

// Semi-transparent slab at depths [z0, z0 + 0.5] whose color flips across
// x = 0. Density peaks mid-slab and vanishes on the faces.
inline VoxelField soft_edge(double z0) {
    const int res = 16;
    VoxelField f(Resolution{res, res, 2}, Aabb{Vec3(-1, -1, z0), Vec3(1, 1, z0 + 0.5)});
    const std::span<float> p = f.mutable_params();
    for (int k = 0; k <= 2; ++k)
        for (int j = 0; j <= res; ++j)
            for (int i = 0; i <= res; ++i) {
                float *c = &p[f.corner_index(i, j, k) * 4];
                const float v = (i <= res / 2) ? 4.0f : -4.0f;
                c[0] = (k == 1) ? 3.0f : -40.0f;
                c[1] = v;
                c[2] = 0.5f * v;
                c[3] = -v;
            }
    return f;
}

inline Rgb random_adjoint(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.25, 1.0);
    std::bernoulli_distribution sign(0.5);
    Rgb a;
    for (int ch = 0; ch < 3; ++ch)
        a[ch] = sign(rng) ? u(rng) : -u(rng);
    return a;
}

inline double weighted_color(const VoxelField &f, const Camera &cam, const Vec2 &px, const RenderConfig &cfg,
                             uint64_t seed, const Rgb &adjoint) {
    return (adjoint * render_pixel(f, cam, px, cfg, seed).color).sum();
}

} // namespace detail

/// Field-parameter probes on random fields seen through a thin lens. Each
/// probe perturbs one parameter with a non-negligible gradient.
inline std::vector<GradProbe> field_gradient_probes(const GradcheckConfig &gc) {
    std::vector<GradProbe> out;
    std::mt19937_64 rng(hash_values(gc.seed, 1u));
    std::uniform_int_distribution<int> pix(4, 11);
    RenderConfig cfg;
    cfg.rays_per_pixel = 4;
    cfg.step_size = 5e-3;
    for (int i = 0; i < gc.field_probes; ++i) {
        VoxelField f = detail::random_field(rng());
        Camera cam = detail::probe_camera(16, 12.0, 0.25, 3.0);
        cam.translation = Vec3(0, 0, -3);
        const Vec2 px = pixel_center(pix(rng), pix(rng));
        const uint64_t seed = rng();
        const Rgb adjoint = detail::random_adjoint(rng);
        PixelTape tape;
        render_pixel(f, cam, px, cfg, seed, &tape);
        std::vector<double> g(f.param_count(), 0.0);
        backward_pixel(f, tape, adjoint, g);
        double largest = 0.0;
        for (double v : g)
            largest = std::max(largest, std::abs(v));
        std::vector<size_t> candidates;
        for (size_t k = 0; k < g.size(); ++k)
            if (std::abs(g[k]) > 0.05 * largest)
                candidates.push_back(k);
        if (candidates.empty())
            throw NumericError(concat("gradcheck: field probe ", i, " has an all-zero gradient"));
        const size_t idx = candidates[rng() % candidates.size()];
        const double fd = fd_oracle([&] { return detail::weighted_color(f, cam, px, cfg, seed, adjoint); },
                                    [&](double v) {
                                        f.mutable_params()[idx] = static_cast<float>(v);
                                        return f.params()[idx];
                                    },
                                    f.params()[idx], 1e-2);
        out.push_back(GradProbe{i, "field", g[idx], fd, relative_error(g[idx], fd), gc.field_tolerance});
    }
    return out;
}

/// Focus-distance and aperture-radius probes at pixels near a color edge in
/// front of the focus plane. Pixels whose finite difference is too small to
/// measure are redrawn.
inline std::vector<GradProbe> defocus_gradient_probes(const GradcheckConfig &gc) {
    std::vector<GradProbe> out;
    std::mt19937_64 rng(hash_values(gc.seed, 2u));
    std::uniform_int_distribution<int> col(13, 22), row(4, 27);
    std::uniform_real_distribution<double> depth(2.8, 3.4);
    for (int kind = 0; kind < 2; ++kind) {
        const bool focus = kind == 0;
        const int wanted = focus ? gc.focus_probes : gc.aperture_probes;
        RenderConfig cfg;
        cfg.rays_per_pixel = focus ? 64 : gc.aperture_rays;
        cfg.step_size = focus ? 2e-3 : 5e-3;
        int made = 0;
        for (int attempt = 0; made < wanted; ++attempt) {
            if (attempt > 20 * wanted + 20)
                throw NumericError(concat("gradcheck: could not place ", wanted, " measurable ",
                                          focus ? "focus" : "aperture", " probes"));
            const VoxelField f = detail::soft_edge(depth(rng));
            Camera cam = detail::probe_camera(32, 100.0, 0.1, 2.0);
            const Vec2 px = pixel_center(col(rng), row(rng));
            const uint64_t seed = rng();
            const Rgb adjoint = detail::random_adjoint(rng);
            double analytic = 0.0, fd = 0.0;
            auto eval = [&] { return detail::weighted_color(f, cam, px, cfg, seed, adjoint); };
            if (focus) {
                PixelTape tape;
                render_pixel(f, cam, px, cfg, seed, &tape);
                analytic = focus_gradient(cam, tape, backward_pixel(f, tape, adjoint, {}));
                const double z0 = cam.focus_distance;
                fd = fd_oracle(eval, [&](double v) { cam.focus_distance = v; }, z0, 1e-4 * z0);
            } else {
                const PixelColor disk = render_pixel(f, cam, px, cfg, seed);
                analytic = aperture_gradient(f, cam, px, cfg, seed, disk, adjoint);
                const double a0 = cam.aperture_radius;
                fd = fd_oracle(eval, [&](double v) { cam.aperture_radius = v; }, a0, 1e-3 * a0);
            }
            if (std::abs(fd) < gc.min_defocus_fd)
                continue;
            out.push_back(GradProbe{made, focus ? "focus" : "aperture", analytic, fd, relative_error(analytic, fd),
                                    focus ? gc.focus_tolerance : gc.aperture_tolerance});
            ++made;
        }
    }
    return out;
}

/// Full suite: field probes followed by focus and aperture probes.
inline std::vector<GradProbe> run_gradcheck(const GradcheckConfig &gc) {
    gc.validate();
    std::vector<GradProbe> all = field_gradient_probes(gc);
    const std::vector<GradProbe> d = defocus_gradient_probes(gc);
    all.insert(all.end(), d.begin(), d.end());
    for (size_t i = 0; i < all.size(); ++i)
        all[i].index = static_cast<int>(i);
    return all;
}

} // namespace lensfield
