// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#include "scenes.hpp"

#include <lensfield/recon/trainer.hpp>
#include <lensfield/scenegen/dataset.hpp>
#include <lensfield/scenegen/scene.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lensfield;
using namespace lensfield::testing;

namespace {

// Eight cameras around the two-tone box: six train, two val.
DatasetSpec box_spec() {
    DatasetSpec s;
    s.camera_count = 8;
    s.val_every = 4;
    s.val_offset = 1;
    s.radius = 2.5;
    s.image_size = 24;
    s.fx = 30.0;
    s.aperture_radius = 0.6;
    s.focus_distance = 2.5;
    s.min_height = 0.2;
    s.gt_rays_per_pixel = 16;
    s.gt_step = 0.02;
    return s;
}

const Dataset &box_data() {
    static const Dataset d = fabricate_dataset(bake_scene(box_scene(), Resolution{32, 32, 32}), box_spec());
    return d;
}

ReconConfig small_config() {
    ReconConfig c;
    c.grid = Resolution{16, 16, 16};
    c.steps = 100;
    c.lr = 0.05;
    c.density_lr_scale = 20.0;
    c.rays_per_pixel = 4;
    c.fixed_batch_pixels = 128;
    c.render.step_size = 0.04;
    c.render.bounds = RayBounds{0.0, 8.0};
    c.render.max_samples_per_ray = 200;
    c.optimize_aperture = false;
    c.optimize_focus = false;
    c.seed = 5;
    return c;
}

std::string read_file(const std::filesystem::path &p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

TEST(Loss, SmoothL1Values) {
    EXPECT_EQ(smooth_l1(0.0), 0.0);
    EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.25);
    EXPECT_DOUBLE_EQ(smooth_l1(2.0), 2.0);
    EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 2.0);
    EXPECT_DOUBLE_EQ(smooth_l1(1.0), 1.0);
    EXPECT_DOUBLE_EQ(smooth_l1(Rgb(0.5, -2.0, 0.0)), 2.25);
}

TEST(Loss, SmoothL1GradientMatchesDifferences) {
    for (double x : {-3.0, -0.7, -0.1, 0.2, 0.9, 1.5}) {
        const double h = 1e-6;
        EXPECT_NEAR(smooth_l1_grad(x), (smooth_l1(x + h) - smooth_l1(x - h)) / (2 * h), 1e-6) << x;
    }
}

TEST(Loss, NonNegativeAndZeroOnlyAtFit) {
    for (int i = -200; i <= 200; ++i) {
        const double x = i * 0.013;
        EXPECT_GE(smooth_l1(x), 0.0);
        if (i != 0) {
            EXPECT_GT(smooth_l1(x), 0.0);
        }
    }
}

TEST(Schedule, TwoStepDecay) {
    const LrSchedule s{1e-2, 1000};
    EXPECT_DOUBLE_EQ(lr_at(0, s), 1e-2);
    EXPECT_DOUBLE_EQ(lr_at(599, s), 1e-2);
    EXPECT_DOUBLE_EQ(lr_at(600, s), 1e-2 * 0.33);
    EXPECT_NEAR(lr_at(999, s), 0.1089e-2, 1e-15);
}

TEST(Schedule, NonIncreasing) {
    const LrSchedule s{0.3, 257};
    for (int i = 1; i < 257; ++i)
        EXPECT_LE(lr_at(i, s), lr_at(i - 1, s));
}

TEST(Schedule, RejectsOutOfRange) {
    const LrSchedule s{1.0, 10};
    EXPECT_THROW(lr_at(-1, s), DomainError);
    EXPECT_THROW(lr_at(10, s), DomainError);
    EXPECT_THROW((LrSchedule{1.0, 0}.validate()), ConfigError);
}

TEST(Batch, PixelCountFromSampleTarget) {
    EXPECT_EQ(batch_pixel_count(262144, 256.0, 1, 16384), 1024);
    EXPECT_EQ(batch_pixel_count(262144, 256.0, 16, 16384), 64);
    EXPECT_GT(batch_pixel_count(262144, 40.0, 1, 16384), batch_pixel_count(262144, 256.0, 1, 16384));
    EXPECT_EQ(batch_pixel_count(262144, 1.0, 1, 2048), 2048);
    EXPECT_EQ(batch_pixel_count(10, 256.0, 16, 2048), 1);
}

TEST(Batch, EmptySpaceGetsLargerBatches) {
    const Dataset &data = box_data();
    ReconConfig c = small_config();
    c.fixed_batch_pixels = 0;
    c.sample_point_target = 65536;
    c.occupancy_threshold = 0.05;
    c.init_density = -8.0f;
    Trainer empty(data, c);
    c.init_density = 3.0f;
    Trainer dense(data, c);
    for (int i = 0; i < 3; ++i) {
        empty.train_step();
        dense.train_step();
    }
    EXPECT_LT(empty.samples_per_ray(), dense.samples_per_ray());
    EXPECT_GT(empty.current_batch_pixels(), dense.current_batch_pixels());
}

TEST(Batch, SeededStreamsMatch) {
    const Dataset &data = box_data();
    std::mt19937_64 a(9), b(9);
    for (int round = 0; round < 3; ++round) {
        const auto x = make_batch(data, a, 50), y = make_batch(data, b, 50);
        for (size_t i = 0; i < x.size(); ++i) {
            EXPECT_EQ(x[i].view, y[i].view);
            EXPECT_EQ(x[i].col, y[i].col);
            EXPECT_EQ(x[i].row, y[i].row);
            EXPECT_EQ(x[i].target.matrix(), data.train[x[i].view].image.at(x[i].col, x[i].row).matrix());
        }
    }
}

TEST(Batch, CoversAllViews) {
    const Dataset &data = box_data();
    std::mt19937_64 rng(2);
    std::vector<int> hits(data.train.size(), 0);
    for (const BatchItem &item : make_batch(data, rng, 3000))
        ++hits[item.view];
    for (int h : hits)
        EXPECT_GT(h, 3000 / int(data.train.size()) / 2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Adam adam(3);
    std::vector<double> p{1.0, 2.0, 3.0};
    const std::vector<double> g{0.5, -4.0, 0.0};
    adam.step(std::span<double>(p), std::span<const double>(g), [](size_t) { return 0.1; });
    EXPECT_NEAR(p[0], 0.9, 1e-12);
    EXPECT_NEAR(p[1], 2.1, 1e-12);
    EXPECT_EQ(p[2], 3.0);
    EXPECT_EQ(adam.steps_taken(), 1);
    EXPECT_THROW(adam.step(std::span<double>(p).first(2), std::span<const double>(g), [](size_t) { return 0.1; }),
                 DomainError);
}

TEST(Trainer, ZeroLearningRateLeavesStateUnchanged) {
    const Dataset &data = box_data();
    ReconConfig c = small_config();
    c.lr = 0.0;
    c.defocus_lr = 0.0;
    c.optimize_aperture = c.optimize_focus = true;
    Trainer t(data, c);
    const std::vector<float> before(t.field().params().begin(), t.field().params().end());
    const Adam field_adam = t.field_optimizer(), defocus_adam = t.defocus_optimizer();
    const DefocusParams d = t.defocus();
    for (int i = 0; i < 3; ++i)
        t.train_step();
    EXPECT_TRUE(std::equal(before.begin(), before.end(), t.field().params().begin()));
    EXPECT_EQ(t.field_optimizer(), field_adam);
    EXPECT_EQ(t.defocus_optimizer(), defocus_adam);
    EXPECT_EQ(t.defocus(), d);
    EXPECT_EQ(t.step(), 3);
}

TEST(Trainer, MomentsMatchParameterShape) {
    Trainer t(box_data(), small_config());
    t.train_step();
    EXPECT_EQ(t.field_optimizer().first_moment().size(), t.field().param_count());
    EXPECT_EQ(t.field_optimizer().second_moment().size(), t.field().param_count());
    EXPECT_EQ(t.defocus_optimizer().size(), 2u);
}

TEST(Trainer, DefocusStaysInValidRange) {
    const Dataset &data = box_data();
    ReconConfig c = small_config();
    c.steps = 30;
    c.optimize_aperture = c.optimize_focus = true;
    c.defocus_lr = 2.0;
    c.aperture_init_scale = 0.05;
    c.focus_init_scale = 0.03;
    Trainer t(data, c);
    const double f = data.train[0].camera.focal_length;
    for (int i = 0; i < c.steps; ++i) {
        t.train_step();
        EXPECT_GE(t.defocus().aperture_radius, 0.0);
        EXPECT_GT(t.defocus().focus_distance, f);
    }
}

TEST(Trainer, RejectsFocusInsideFocalLength) {
    ReconConfig c = small_config();
    c.focus_init_scale = 0.001;
    EXPECT_THROW(Trainer(box_data(), c), ConfigError);
}

TEST(Trainer, PerfectFieldIsStationary) {
    // Varying density, uniform color equal to the background: every ray of
    // every quadrature returns that color, so the field fits the data exactly.
    VoxelField field = smooth_field(21, Aabb{}, Resolution{6, 6, 6}, 0.5f);
    const Rgb gray = Rgb::Constant(sigmoid(0.4f));
    for (size_t c = 0; c < field.corner_count(); ++c)
        for (int ch = 1; ch < 4; ++ch)
            field.raw(c, ch) = 0.4f;
    DatasetSpec spec = box_spec();
    spec.aperture_radius = 0.0;
    ReconConfig c = small_config();
    c.grid = field.resolution();
    c.render.background = gray;
    Dataset data;
    for (const Camera &cam : make_hemisphere_cameras(spec)) {
        Image img(cam.width, cam.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                img.set(x, y, gray);
        data.train.push_back(View{cam, img});
    }
    Trainer t(data, c, field);
    EXPECT_LT(t.train_step(), 1e-6);
    double largest = 0.0;
    for (double g : t.last_gradient())
        largest = std::max(largest, std::abs(g));
    EXPECT_LT(largest, 1e-6);
}

TEST(Trainer, LossDropsOnBoxScene) {
    ReconConfig c = small_config();
    c.steps = 500;
    Trainer t(box_data(), c);
    auto window = [&](int count) {
        double sum = 0.0;
        for (int i = 0; i < count; ++i)
            sum += t.train_step();
        return sum / count;
    };
    window(40);
    const double early = window(20); // steps 40..59
    for (int s = t.step(); s < 480; ++s)
        t.train_step();
    const double late = window(20); // steps 480..499
    EXPECT_LT(late, 0.5 * early);
}

TEST(Trainer, NonFiniteLossNamesThePixel) {
    Dataset data = box_data();
    data.train[0].image.set(3, 4, Rgb::Constant(std::numeric_limits<double>::quiet_NaN()));
    data.train.resize(1);
    ReconConfig c = small_config();
    c.fixed_batch_pixels = 24 * 24 * 10;
    Trainer t(data, c);
    try {
        t.train_step();
        FAIL() << "expected NumericError";
    } catch (const NumericError &e) {
        EXPECT_NE(std::string(e.what()).find("(3, 4)"), std::string::npos) << e.what();
    }
}

TEST(Trainer, RaysPerPixelDoubling) {
    ReconConfig c = small_config();
    c.rpp_doubling = true;
    c.rays_per_pixel = 8;
    c.fixed_batch_pixels = 24 * 24 * 3;
    Trainer t(box_data(), c);
    // Six training views: an epoch is two steps of half the pixels each.
    const std::vector<int> expected{1, 1, 2, 2, 4, 4, 8, 8, 8};
    for (int want : expected) {
        EXPECT_EQ(t.current_rays_per_pixel(), want);
        t.train_step();
    }
}

TEST(Reconstruction, SerialRunsAreReproducible) {
    const auto root = std::filesystem::temp_directory_path() / "lensfield_recon_repro";
    std::filesystem::remove_all(root);
    ReconConfig c = small_config();
    c.steps = 20;
    c.eval_every = 5;
    c.optimize_aperture = c.optimize_focus = true;
    c.defocus_lr = 1e-2;
    const ReconResult a = run_reconstruction(box_data(), c, root / "a");
    const ReconResult b = run_reconstruction(box_data(), c, root / "b");
    EXPECT_EQ(a.metrics.size(), 4u);
    EXPECT_EQ(read_file(root / "a" / "metrics.csv"), read_file(root / "b" / "metrics.csv"));
    EXPECT_EQ(read_file(root / "a" / "field.lfvf"), read_file(root / "b" / "field.lfvf"));
    EXPECT_EQ(a.defocus, b.defocus);
    EXPECT_EQ(read_file(root / "a" / "metrics.csv").rfind("step,loss,lr,a_R,z_f,val_psnr,val_ssim\n", 0), 0u);
}

TEST(Reconstruction, PinholeModelIgnoresAperture) {
    ReconConfig c = small_config();
    c.pinhole_model = true;
    c.optimize_aperture = c.optimize_focus = true;
    Trainer t(box_data(), c);
    EXPECT_EQ(t.train_camera(0).aperture_radius, 0.0);
    t.train_step();
    EXPECT_EQ(t.defocus().aperture_radius, 0.0);
    EXPECT_EQ(t.defocus().focus_distance, box_spec().focus_distance);
}
