// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#include "scenes.hpp"

#include <lensfield/grad/backward.hpp>
#include <lensfield/grad/defocus.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lensfield;
using namespace lensfield::testing;

namespace {

double rel_err(double analytic, double fd) { return std::abs(analytic - fd) / (std::abs(fd) + 1e-8); }

// Semi-transparent slab between depths z0 and z0 + 0.5 with a bright/dark
// edge across x = 0. Density peaks mid-slab and vanishes on both faces, so
// small ray perturbations never move quadrature samples across a density jump.
VoxelField soft_edge(double z0) {
    VoxelField f = edge_slab(z0, z0 + 0.5, 1.0, 16);
    for (int k = 0; k <= 2; ++k)
        for (int j = 0; j <= 16; ++j)
            for (int i = 0; i <= 16; ++i)
                f.raw(f.corner_index(i, j, k), 0) = (k == 1) ? 3.0f : kVacuum;
    return f;
}

struct Probe {
    Camera camera;
    Vec2 px;
    uint64_t seed;
};

double pixel_loss(const VoxelField &f, const Probe &p, const RenderConfig &cfg, const Rgb &adjoint) {
    return (adjoint * render_pixel(f, p.camera, p.px, cfg, p.seed).color).sum();
}

} // namespace

TEST(BackwardRay, ZeroAdjointGivesZero) {
    const VoxelField f = smooth_field(1);
    RenderConfig cfg;
    RayTape tape;
    render_ray(f, Ray{Vec3(0, 0, -3), Vec3::UnitZ()}, cfg, Stratum{}, &tape);
    std::vector<double> g(f.param_count(), 0.0);
    const RayGrad rg = backward_ray(f, tape, Rgb::Zero(), g);
    EXPECT_EQ(rg.d_origin, Vec3::Zero());
    EXPECT_EQ(rg.d_direction, Vec3::Zero());
    for (double v : g)
        EXPECT_EQ(v, 0.0);
}

TEST(BackwardRay, StaleTapeIsDetected) {
    VoxelField f = smooth_field(2);
    RayTape tape;
    render_ray(f, Ray{Vec3(0, 0, -3), Vec3::UnitZ()}, RenderConfig{}, Stratum{}, &tape);
    f.mutable_params()[0] += 0.5f;
    EXPECT_THROW(backward_ray(f, tape, Rgb::Ones(), {}), StaleTapeError);
}

TEST(BackwardRay, WrongBufferSizeRejected) {
    const VoxelField f = smooth_field(3);
    RayTape tape;
    render_ray(f, Ray{Vec3(0, 0, -3), Vec3::UnitZ()}, RenderConfig{}, Stratum{}, &tape);
    std::vector<double> g(5);
    EXPECT_THROW(backward_ray(f, tape, Rgb::Ones(), g), DomainError);
}

TEST(BackwardRay, NearlyEmptyFieldPushesDensityTowardBackground) {
    // Background white, field dark: adding density darkens the pixel, so a
    // loss that wants more light has positive density gradient.
    VoxelField f(Resolution{4, 4, 4}, Aabb{}, -6.0f, -3.0f);
    RenderConfig cfg;
    cfg.background = Rgb::Ones();
    RayTape tape;
    render_ray(f, Ray{Vec3(0.1, 0.2, -3), Vec3::UnitZ()}, cfg, Stratum{}, &tape);
    std::vector<double> g(f.param_count(), 0.0);
    backward_ray(f, tape, Rgb::Constant(-1.0), g); // dL/dC for L = -sum(C)
    int touched = 0;
    for (size_t c = 0; c < f.corner_count(); ++c) {
        if (g[c * 4] != 0.0) {
            EXPECT_GT(g[c * 4], 0.0);
            ++touched;
        }
    }
    EXPECT_GT(touched, 0);
}

TEST(BackwardRay, RayInputGradientsMatchFiniteDifferences) {
    const VoxelField f = [] {
        VoxelField v = smooth_field(4, Aabb{}, Resolution{4, 4, 4}, 1.0f);
        for (int k = 0; k <= 4; ++k)
            for (int j = 0; j <= 4; ++j)
                for (int i = 0; i <= 4; ++i)
                    if (i % 4 == 0 || j % 4 == 0 || k % 4 == 0)
                        v.raw(v.corner_index(i, j, k), 0) = kVacuum;
        return v;
    }();
    RenderConfig cfg;
    cfg.step_size = 2e-3;
    const Rgb adjoint(0.3, -0.7, 1.1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int probe = 0; probe < 10; ++probe) {
        Ray ray{Vec3(u(rng), u(rng), -3), Vec3(u(rng) * 0.2, u(rng) * 0.2, 1).normalized()};
        const Stratum stratum{0, 1, 0.5};
        RayTape tape;
        render_ray(f, ray, cfg, stratum, &tape);
        const RayGrad rg = backward_ray(f, tape, adjoint, {});
        for (int a = 0; a < 3; ++a) {
            Ray r = ray;
            const double fd_o = fd_oracle([&] { return (adjoint * render_ray(f, r, cfg, stratum).color).sum(); },
                                          [&](double v) { r.origin[a] = v; }, ray.origin[a], 1e-6);
            EXPECT_LT(rel_err(rg.d_origin[a], fd_o), 1e-3) << "origin probe " << probe << " axis " << a;
            r = ray;
            const double fd_d = fd_oracle([&] { return (adjoint * render_ray(f, r, cfg, stratum).color).sum(); },
                                          [&](double v) { r.direction[a] = v; }, ray.direction[a], 1e-7);
            EXPECT_LT(rel_err(rg.d_direction[a], fd_d), 1e-3) << "direction probe " << probe << " axis " << a;
        }
    }
}

TEST(GradientOracle, FieldParametersMatchFiniteDifferences) {
    std::mt19937_64 rng(6);
    int probes = 0;
    for (int scene = 0; scene < 6; ++scene) {
        VoxelField f = smooth_field(200 + scene, Aabb{}, Resolution{5, 5, 5}, 0.5f);
        Probe p{forward_camera(16, 12.0, 0.25, 3.0), Vec2::Zero(), 0};
        p.camera.translation = Vec3(0, 0, -3);
        RenderConfig cfg;
        cfg.rays_per_pixel = 4;
        cfg.step_size = 5e-3;
        std::uniform_int_distribution<int> pix(4, 11);
        for (int k = 0; k < 5; ++k, ++probes) {
            p.px = pixel_center(pix(rng), pix(rng));
            p.seed = rng();
            const Rgb adjoint(1.0, -0.5, 0.25);
            PixelTape tape;
            render_pixel(f, p.camera, p.px, cfg, p.seed, &tape);
            std::vector<double> g(f.param_count(), 0.0);
            backward_pixel(f, tape, adjoint, g);
            // Pick a parameter with a non-negligible gradient.
            double largest = 0.0;
            for (double v : g)
                largest = std::max(largest, std::abs(v));
            ASSERT_GT(largest, 0.0);
            std::vector<size_t> candidates;
            for (size_t i = 0; i < g.size(); ++i)
                if (std::abs(g[i]) > 0.05 * largest)
                    candidates.push_back(i);
            const size_t idx = candidates[rng() % candidates.size()];
            const double fd = fd_oracle([&] { return pixel_loss(f, p, cfg, adjoint); },
                                        [&](double v) {
                                            f.mutable_params()[idx] = static_cast<float>(v);
                                            return f.params()[idx];
                                        },
                                        f.params()[idx], 1e-2);
            EXPECT_LT(rel_err(g[idx], fd), 1e-3) << "scene " << scene << " param " << idx << " analytic " << g[idx]
                                                 << " fd " << fd;
        }
    }
    EXPECT_EQ(probes, 30);
}

TEST(GradientOracle, FocusDistanceMatchesFiniteDifferences) {
    const VoxelField f = soft_edge(3.0);
    RenderConfig cfg;
    cfg.rays_per_pixel = 64;
    cfg.step_size = 2e-3;
    const Rgb adjoint(1.0, 0.5, -0.3);
    int checked = 0;
    for (int col = 13; col <= 22; ++col) {
        Probe p{forward_camera(32, 100.0, 0.1, 2.0), pixel_center(col, 16), pixel_seed(3, col, 16)};
        PixelTape tape;
        render_pixel(f, p.camera, p.px, cfg, p.seed, &tape);
        const auto grads = backward_pixel(f, tape, adjoint, {});
        const double analytic = focus_gradient(p.camera, tape, grads);
        const double z0 = p.camera.focus_distance;
        const double fd = fd_oracle([&] { return pixel_loss(f, p, cfg, adjoint); },
                                    [&](double v) { p.camera.focus_distance = v; }, z0, 1e-4 * z0);
        if (std::abs(fd) < 1e-3)
            continue;
        ++checked;
        EXPECT_LT(rel_err(analytic, fd), 1e-2) << "column " << col << " analytic " << analytic << " fd " << fd;
    }
    EXPECT_GE(checked, 4);
}

TEST(GradientOracle, ApertureRadiusMatchesFiniteDifferences) {
    const VoxelField f = soft_edge(3.0);
    RenderConfig cfg;
    cfg.rays_per_pixel = 4096;
    cfg.step_size = 5e-3;
    const Rgb adjoint(1.0, 0.5, -0.3);
    int checked = 0;
    for (int col = 14; col <= 21; ++col) {
        Probe p{forward_camera(32, 100.0, 0.1, 2.0), pixel_center(col, 16), pixel_seed(4, col, 16)};
        const PixelColor disk = render_pixel(f, p.camera, p.px, cfg, p.seed);
        const double analytic = aperture_gradient(f, p.camera, p.px, cfg, p.seed, disk, adjoint);
        const double a0 = p.camera.aperture_radius;
        const double fd = fd_oracle([&] { return pixel_loss(f, p, cfg, adjoint); },
                                    [&](double v) { p.camera.aperture_radius = v; }, a0, 1e-3 * a0);
        if (std::abs(fd) < 1e-3)
            continue;
        ++checked;
        EXPECT_EQ(std::signbit(analytic), std::signbit(fd));
        EXPECT_LT(rel_err(analytic, fd), 5e-2) << "column " << col << " analytic " << analytic << " fd " << fd;
    }
    EXPECT_GE(checked, 3);
}

TEST(Defocus, ApertureDerivativeMatchesDiskAverageDerivative) {
    // Radially symmetric color g(r); the disk average is D(R) = 2/R^2 int_0^R g r dr.
    auto g = [](double r) { return std::cos(3.0 * r) + 0.5 * r * r; };
    auto disk_average = [&](double R) {
        using boost::math::quadrature::gauss_kronrod;
        return 2.0 / (R * R) * gauss_kronrod<double, 31>::integrate([&](double r) { return g(r) * r; }, 0.0, R, 10, 1e-15);
    };
    for (double R : {0.1, 0.5, 1.0, 2.0}) {
        const double h = 1e-4;
        const double d_num = (disk_average(R + h) - disk_average(R - h)) / (2 * h);
        const Rgb est = aperture_derivative(R, Rgb::Constant(g(R)), Rgb::Constant(disk_average(R)));
        EXPECT_NEAR(est[0], d_num, 1e-6) << "R = " << R;
    }
}

TEST(Defocus, FocusDerivativeIsOrthogonalToRay) {
    Camera cam = forward_camera(16, 10.0, 0.2, 2.0);
    const Ray base = pinhole_ray(cam, pixel_center(3, 12));
    const ApertureSample center{cam.center(), Vec2::Zero(), 0, 1};
    EXPECT_NEAR(focus_direction_derivative(cam, base, center.point).dot(base.direction), 0.0, 1e-15);
    const ApertureSample off = sample_aperture_disk(cam, 7, 2, 8);
    const Ray r = lens_ray(cam, base, off);
    EXPECT_NEAR(focus_direction_derivative(cam, base, off.point).dot(r.direction), 0.0, 1e-15);
}

TEST(Defocus, ConstantSceneHasZeroDefocusGradients) {
    const VoxelField f = uniform_field(Resolution{3, 3, 2}, Aabb{Vec3(-5, -5, 2), Vec3(5, 5, 3)}, kOpaque,
                                       Eigen::Array3f(0.3f, -1.0f, 2.0f));
    const Camera cam = forward_camera(16, 20.0, 0.3, 4.0);
    RenderConfig cfg;
    cfg.rays_per_pixel = 16;
    for (int p = 0; p < 8; ++p) {
        const Vec2 px = pixel_center(2 * p, 15 - p);
        PixelTape tape;
        const PixelColor c = render_pixel(f, cam, px, cfg, p, &tape);
        const auto grads = backward_pixel(f, tape, Rgb::Ones(), {});
        EXPECT_EQ(focus_gradient(cam, tape, grads), 0.0);
        EXPECT_EQ(aperture_gradient(f, cam, px, cfg, p, c, Rgb::Ones()), 0.0);
    }
}

TEST(Defocus, FocusPlaneSurfaceHasSmallApertureGradient) {
    const VoxelField f = textured_slab(11, Aabb{Vec3(-1, -1, 2.0), Vec3(1, 1, 2.5)}, Resolution{16, 16, 2});
    const Camera cam = forward_camera(32, 100.0, 0.05, 2.0);
    RenderConfig cfg;
    cfg.rays_per_pixel = 16;
    cfg.step_size = 1e-3;
    const Camera off = forward_camera(32, 100.0, 0.05, 3.0);
    double worst_in = 0.0, worst_off = 0.0;
    for (int p = 0; p < 16; ++p) {
        const Vec2 px = pixel_center(2 * p, p + 8);
        worst_in = std::max(worst_in, std::abs(aperture_gradient(f, cam, px, cfg, p, render_pixel(f, cam, px, cfg, p),
                                                                  Rgb::Ones())));
        worst_off = std::max(worst_off, std::abs(aperture_gradient(f, off, px, cfg, p, render_pixel(f, off, px, cfg, p),
                                                                    Rgb::Ones())));
    }
    EXPECT_LT(worst_in, 0.05 * worst_off);
}

TEST(Defocus, ZeroApertureReturnsZeroWithWarning) {
    std::vector<std::string> warnings;
    set_warning_sink([&](const std::string &m) { warnings.push_back(m); });
    const Camera cam = forward_camera(8, 8.0);
    const double g = aperture_gradient(smooth_field(1), cam, pixel_center(2, 2), RenderConfig{}, 0, PixelColor{},
                                       Rgb::Ones());
    set_warning_sink(nullptr);
    EXPECT_EQ(g, 0.0);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("aperture"), std::string::npos);
}

TEST(FdOracle, LinearIsExact) {
    double x = 0.0;
    const double d = fd_oracle([&] { return 3.0 * x; }, [&](double v) { x = v; }, 0.7, 1e-3);
    EXPECT_NEAR(d, 3.0, 1e-10);
    EXPECT_EQ(x, 0.7);
}

TEST(FdOracle, QuadraticIsExact) {
    // d(x^2)/dx = 2 at x = 1; the central difference is exact for quadratics.
    double x = 0.0;
    EXPECT_NEAR(fd_oracle([&] { return x * x; }, [&](double v) { x = v; }, 1.0, 1e-3), 2.0, 1e-6);
}

TEST(FdOracle, RejectsNonPositiveStep) {
    double x = 0.0;
    EXPECT_THROW(fd_oracle([&] { return x; }, [&](double v) { x = v; }, 0.0, 0.0), DomainError);
}
