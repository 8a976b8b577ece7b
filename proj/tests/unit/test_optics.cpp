// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#include <lensfield/optics/camera.hpp>
#include <lensfield/optics/camera_io.hpp>
#include <lensfield/optics/sampling.hpp>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace lensfield;

namespace {

Camera test_camera(double aperture = 0.01) {
    Camera c;
    c.width = 256;
    c.height = 128;
    c.fx = c.fy = 100.0;
    c.cx = c.cy = 64.0;
    c.aperture_radius = aperture;
    c.focal_length = 0.05;
    c.focus_distance = 2.0;
    return c;
}

Mat3 random_rotation(std::mt19937_64 &rng) {
    std::normal_distribution<double> n;
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized().toRotationMatrix();
}

// Bratley-Fox incremental construction: x_{i+1} = x_i ^ v_c, c = index of the
// lowest zero bit of i. Independent of the Gray-code formula under test.
std::vector<std::array<uint32_t, 2>> sobol_reference(int count) {
    uint32_t v1[32], v2[32];
    uint64_t m = 1;
    for (int k = 0; k < 32; ++k) {
        v1[k] = 1u << (31 - k);
        v2[k] = static_cast<uint32_t>(m << (31 - k));
        m ^= m << 1;
    }
    std::vector<std::array<uint32_t, 2>> out{{0u, 0u}};
    uint32_t x = 0, y = 0;
    for (int i = 0; i + 1 < count; ++i) {
        int c = 0;
        while ((i >> c) & 1)
            ++c;
        x ^= v1[c];
        y ^= v2[c];
        out.push_back({x, y});
    }
    return out;
}

} // namespace

TEST(PinholeRay, PrincipalPointMapsToOpticalAxis) {
    const Camera cam = test_camera();
    const Ray r = pinhole_ray(cam, Vec2(64, 64));
    EXPECT_EQ(r.direction, Vec3(0, 0, 1));
    EXPECT_EQ(r.origin, Vec3::Zero());
}

TEST(PinholeRay, OffAxisPixel) {
    const Ray r = pinhole_ray(test_camera(), Vec2(164, 64));
    const Vec3 expected = Vec3(1, 0, 1) / std::sqrt(2.0);
    EXPECT_NEAR((r.direction - expected).norm(), 0.0, 1e-15);
    EXPECT_NEAR(r.direction.norm(), 1.0, 1e-9);
}

TEST(PinholeRay, RotatedPoseIsEquivariant) {
    std::mt19937_64 rng(7);
    Camera cam = test_camera();
    const Ray ref = pinhole_ray(cam, Vec2(31.5, 100.25));
    cam.rotation = random_rotation(rng);
    cam.translation = Vec3(1, -2, 3);
    const Ray r = pinhole_ray(cam, Vec2(31.5, 100.25));
    EXPECT_NEAR((r.direction - cam.rotation * ref.direction).norm(), 0.0, 1e-14);
    EXPECT_EQ(r.origin, cam.translation);
}

TEST(PinholeRay, OutOfBoundsIsDomainError) {
    const Camera cam = test_camera();
    EXPECT_THROW(pinhole_ray(cam, Vec2(-0.1, 10)), DomainError);
    EXPECT_THROW(pinhole_ray(cam, Vec2(10, 128.5)), DomainError);
    EXPECT_NO_THROW(pinhole_ray(cam, Vec2(256, 128)));
}

TEST(LensRay, CenterSampleReturnsBase) {
    const Camera cam = test_camera();
    const Ray base = pinhole_ray(cam, Vec2(20.5, 90.5));
    ApertureSample s;
    s.point = cam.center();
    const Ray r = lens_ray(cam, base, s);
    EXPECT_EQ(r.origin, base.origin);
    EXPECT_EQ(r.direction, base.direction);
}

TEST(LensRay, WorkedExample) {
    Camera cam = test_camera();
    ApertureSample s;
    s.point = Vec3(0.1, 0, 0);
    const Ray r = lens_ray(cam, Ray{Vec3::Zero(), Vec3::UnitZ()}, s);
    EXPECT_EQ(r.origin, Vec3(0.1, 0, 0));
    EXPECT_NEAR(r.direction.x(), -0.04993761694389223, 1e-15);
    EXPECT_NEAR(r.direction.y(), 0.0, 1e-15);
    EXPECT_NEAR(r.direction.z(), 0.9987523388778446, 1e-15);
}

TEST(LensRay, AllRaysMeetAtFocusPoint) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Camera cam = test_camera(0.05 + 0.3 * u(rng));
        cam.rotation = random_rotation(rng);
        cam.translation = Vec3(u(rng), u(rng), u(rng)) * 4.0;
        cam.focus_distance = 0.5 + 5.0 * u(rng);
        const Ray base = pinhole_ray(cam, Vec2(256 * u(rng), 128 * u(rng)));
        const Vec3 focus = base.at(cam.focus_distance);
        const ApertureSample s = sample_aperture_disk(cam, trial, trial % 16, 16);
        const Ray r = lens_ray(cam, base, s);
        EXPECT_NEAR(r.direction.norm(), 1.0, 1e-12);
        const double t = (focus - r.origin).norm();
        EXPECT_LT((r.at(t) - focus).norm(), 1e-9);
    }
}

TEST(LensRay, DegenerateFocusPointIsNumericError) {
    Camera cam = test_camera();
    ApertureSample s;
    s.point = Vec3(0, 0, 2.0);
    EXPECT_THROW(lens_ray(cam, Ray{Vec3::Zero(), Vec3::UnitZ()}, s), NumericError);
}

TEST(CircleOfConfusion, Examples) {
    Camera cam = test_camera(0.01);
    cam.focus_distance = 3.5;
    EXPECT_EQ(circle_of_confusion(cam, 3.5), 0.0);
    EXPECT_NEAR(circle_of_confusion(cam, 4.0), 1.8115942028985507e-05, 1e-18);
    cam.aperture_radius = 0.0;
    for (double z : {0.1, 1.0, 3.0, 50.0})
        EXPECT_EQ(circle_of_confusion(cam, z), 0.0);
}

TEST(CircleOfConfusion, DomainErrors) {
    Camera cam = test_camera();
    EXPECT_THROW(circle_of_confusion(cam, 0.0), DomainError);
    EXPECT_THROW(circle_of_confusion(cam, -1.0), DomainError);
    cam.focus_distance = cam.focal_length;
    EXPECT_THROW(circle_of_confusion(cam, 1.0), DomainError);
}

TEST(CircleOfConfusion, MonotoneInInverseDepthGapAndLinearInAperture) {
    Camera cam = test_camera(0.02);
    cam.focus_distance = 3.5;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> zdist(0.2, 40.0);
    for (int trial = 0; trial < 500; ++trial) {
        const double z1 = zdist(rng), z2 = zdist(rng);
        const double g1 = std::abs(1 / z1 - 1 / cam.focus_distance), g2 = std::abs(1 / z2 - 1 / cam.focus_distance);
        const double c1 = circle_of_confusion(cam, z1), c2 = circle_of_confusion(cam, z2);
        if (g1 < g2) {
            EXPECT_LE(c1, c2 * (1 + 1e-12));
        }
        Camera wide = cam;
        wide.aperture_radius *= 3.0;
        EXPECT_NEAR(circle_of_confusion(wide, z1), 3.0 * c1, 1e-15);
    }
}

TEST(Sobol, FirstPointsMatchDirectionNumberConstruction) {
    EXPECT_EQ(sobol_2d(0), Vec2(0.0, 0.0));
    EXPECT_EQ(sobol_2d(1), Vec2(0.5, 0.5));
    EXPECT_EQ(sobol_2d(2), Vec2(0.75, 0.25));
    EXPECT_EQ(sobol_2d(3), Vec2(0.25, 0.75));
    EXPECT_EQ(sobol_2d(10), Vec2(0.9375, 0.0625));
    const auto ref = sobol_reference(4096);
    for (uint32_t i = 0; i < ref.size(); ++i) {
        const auto bits = sobol_2d_bits(i);
        ASSERT_EQ(bits[0], ref[i][0]) << "index " << i;
        ASSERT_EQ(bits[1], ref[i][1]) << "index " << i;
    }
}

TEST(Sobol, ScrambledPointsKeepNetStructure) {
    // A (0,m,2)-net of 2^8 points: every elementary 16x16 cell holds one point.
    for (uint64_t seed : {1ull, 99ull, 123456789ull}) {
        std::set<std::pair<int, int>> cells;
        for (uint32_t i = 0; i < 256; ++i) {
            const Vec2 p = sobol_2d_scrambled(i, seed);
            cells.insert({static_cast<int>(p.x() * 16), static_cast<int>(p.y() * 16)});
        }
        EXPECT_EQ(cells.size(), 256u);
    }
}

TEST(ApertureDisk, SquareCenterMapsToDiskCenter) {
    EXPECT_EQ(concentric_square_to_disk(Vec2(0.5, 0.5)), Vec2::Zero());
}

TEST(ApertureDisk, ZeroApertureCollapsesToCenter) {
    Camera cam = test_camera(0.0);
    cam.translation = Vec3(1, 2, 3);
    for (int i = 0; i < 32; ++i)
        EXPECT_EQ(sample_aperture_disk(cam, 5, i, 32).point, cam.center());
}

TEST(ApertureDisk, SamplesLieInTheApertureAndAreDistinct) {
    std::mt19937_64 rng(5);
    Camera cam = test_camera(0.3);
    cam.rotation = random_rotation(rng);
    cam.translation = Vec3(0.5, -1, 2);
    std::set<std::pair<double, double>> seen;
    for (int i = 0; i < 512; ++i) {
        const ApertureSample s = sample_aperture_disk(cam, 42, i, 512);
        const Vec3 rel = s.point - cam.center();
        EXPECT_LE(rel.norm(), cam.aperture_radius * (1 + 1e-12));
        EXPECT_NEAR(rel.dot(cam.axis()), 0.0, 1e-12);
        seen.insert({s.disk.x(), s.disk.y()});
    }
    EXPECT_EQ(seen.size(), 512u);
}

TEST(ApertureDisk, EmpiricalMeanNearCenter) {
    Camera cam = test_camera(0.25);
    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < 4096; ++i)
        mean += sample_aperture_disk(cam, 77, i, 4096).point;
    mean /= 4096.0;
    EXPECT_LT((mean - cam.center()).norm(), 0.02 * cam.aperture_radius);
}

TEST(ApertureDisk, ChiSquaredUniformity) {
    // 8 equal-area annuli x 8 sectors = 64 cells.
    Camera cam = test_camera(1.0);
    constexpr int kSamples = 1 << 14;
    std::array<int, 64> counts{};
    for (int i = 0; i < kSamples; ++i) {
        const Vec2 d = sample_aperture_disk(cam, 2024, i, kSamples).disk;
        const int ring = std::min(7, static_cast<int>(d.squaredNorm() * 8));
        double phi = std::atan2(d.y(), d.x());
        if (phi < 0)
            phi += 2 * kPi;
        const int sector = std::min(7, static_cast<int>(phi / (2 * kPi) * 8));
        ++counts[ring * 8 + sector];
    }
    const double expected = kSamples / 64.0;
    double chi2 = 0.0;
    for (int c : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    const boost::math::chi_squared dist(63);
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001) << "chi2 = " << chi2;
}

TEST(ApertureDisk, Deterministic) {
    Camera cam = test_camera(0.1);
    for (int i = 0; i < 16; ++i)
        EXPECT_EQ(sample_aperture_disk(cam, 9, i, 16).point, sample_aperture_disk(cam, 9, i, 16).point);
    EXPECT_NE(sample_aperture_disk(cam, 9, 3, 16).point, sample_aperture_disk(cam, 10, 3, 16).point);
}

TEST(ApertureRing, SamplesOnBoundary) {
    std::mt19937_64 rng(8);
    Camera cam = test_camera(0.37);
    cam.rotation = random_rotation(rng);
    cam.translation = Vec3(3, 1, -2);
    for (int i = 0; i < 64; ++i) {
        const ApertureSample s = sample_aperture_ring(cam, 31, i, 64);
        EXPECT_NEAR((s.point - cam.center()).norm(), cam.aperture_radius, 1e-12);
    }
}

TEST(ApertureRing, FourSamplesCoverEachQuadrant) {
    Camera cam = test_camera(1.0);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        std::set<int> quadrants;
        for (int i = 0; i < 4; ++i) {
            const Vec2 d = sample_aperture_ring(cam, seed, i, 4).disk;
            quadrants.insert((d.x() >= 0 ? 0 : 1) + (d.y() >= 0 ? 0 : 2));
        }
        EXPECT_EQ(quadrants.size(), 4u);
    }
}

TEST(ApertureRing, MeanNearCenter) {
    Camera cam = test_camera(0.2);
    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < 256; ++i)
        mean += sample_aperture_ring(cam, 4, i, 256).point;
    mean /= 256.0;
    EXPECT_LT((mean - cam.center()).norm(), 0.02 * cam.aperture_radius);
}

TEST(ApertureRing, ZeroApertureIsDomainError) {
    EXPECT_THROW(sample_aperture_ring(test_camera(0.0), 1, 0, 4), DomainError);
}

TEST(StratifiedT, SingleStratumIsJitteredInterval) {
    EXPECT_EQ(stratified_t(0, 1, 2.0, 3.0, 0.0), 2.0);
    EXPECT_DOUBLE_EQ(stratified_t(0, 1, 2.0, 3.0, 0.25), 2.25);
}

TEST(StratifiedT, StrataArePartitioned) {
    for (int i = 0; i < 4; ++i) {
        const double t = stratified_t(i, 4, 0.0, 1.0, 0.0);
        EXPECT_DOUBLE_EQ(t, i * 0.25);
    }
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + trial % 9;
        const int i = static_cast<int>(u(rng) * n);
        const double t = stratified_t(i, n, 1.0, 3.0, u(rng));
        EXPECT_GE(t, 1.0 + 2.0 * i / n);
        EXPECT_LT(t, 1.0 + 2.0 * (i + 1) / n);
    }
}

TEST(CameraIo, RoundTripIsBitExact) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<Camera> cams;
    for (int i = 0; i < 5; ++i) {
        Camera c = test_camera(std::abs(u(rng)) * 0.1);
        c.rotation = random_rotation(rng);
        c.translation = Vec3(u(rng), u(rng), u(rng));
        c.fx = 100 + u(rng);
        c.focus_distance = 3.5 + u(rng) * 0.1;
        cams.push_back(c);
    }
    std::stringstream ss;
    write_cameras(ss, cams);
    const auto back = read_cameras(ss);
    ASSERT_EQ(back.size(), cams.size());
    for (size_t i = 0; i < cams.size(); ++i)
        EXPECT_TRUE(back[i] == cams[i]);
}

TEST(CameraIo, WritesAtLeastNineSignificantDigits) {
    EXPECT_EQ(format_real(0.5), "0.5");
    EXPECT_GE(format_real(1.0 / 3.0).size(), 11u);
    EXPECT_EQ(parse_real(format_real(0.1 + 0.2), "x"), 0.1 + 0.2);
}

TEST(CameraIo, RejectsMalformedEntries) {
    std::stringstream missing("camera\nwidth 4\nend\n");
    EXPECT_THROW(read_cameras(missing), ConfigError);
    std::stringstream unknown("camera\nbogus 1\nend\n");
    EXPECT_THROW(read_cameras(unknown), ConfigError);
}

TEST(Camera, ValidateChecksInvariants) {
    Camera cam = test_camera();
    EXPECT_NO_THROW(cam.validate());
    cam.aperture_radius = -1e-3;
    EXPECT_THROW(cam.validate(), DomainError);
    cam = test_camera();
    cam.focus_distance = 0.01;
    EXPECT_THROW(cam.validate(), DomainError);
    cam = test_camera();
    cam.rotation(0, 0) = 1.001;
    EXPECT_THROW(cam.validate(), DomainError);
}
