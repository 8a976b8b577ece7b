// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/field/checkpoint.hpp"
#include "lensfield/field/voxel_field.hpp"
#include "lensfield/grad/backward.hpp"
#include "lensfield/grad/defocus.hpp"
#include "lensfield/log.hpp"
#include "lensfield/metrics.hpp"
#include "lensfield/parallel.hpp"
#include "lensfield/recon/adam.hpp"
#include "lensfield/recon/batch.hpp"
#include "lensfield/recon/dataset.hpp"
#include "lensfield/recon/loss.hpp"
#include "lensfield/recon/schedule.hpp"
#include "lensfield/render/render.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace lensfield {

struct ReconConfig {
    double lr = 1e-2;
    int steps = 2000;
    double decay_factor = 0.33;
    double decay_first = 0.6;
    double decay_second = 0.8;
    /// Learning-rate multiplier for the density channel.
    double density_lr_scale = 1.0;

    long sample_point_target = 262144;
    int rays_per_pixel = 16;
    /// Start at one ray per pixel and double after every pass over the
    /// training pixels, up to rays_per_pixel.
    bool rpp_doubling = false;
    /// Pixels per batch; 0 derives it from sample_point_target.
    int fixed_batch_pixels = 0;
    int max_batch_pixels = 16384;

    /// Train with a pinhole camera model (a_R = 0) regardless of the data.
    bool pinhole_model = false;
    bool optimize_aperture = true;
    bool optimize_focus = true;
    /// Initial aperture radius and focus distance as multiples of the values
    /// recorded with the training cameras.
    double aperture_init_scale = 1.0;
    double focus_init_scale = 1.0;
    /// Adam rate for aperture radius and focus distance, in units of their
    /// initial values.
    double defocus_lr = 1e-3;
    /// Fraction of steps before the defocus parameters start to move.
    double defocus_warmup = 0.0;

    RenderConfig render;
    Resolution grid{64, 64, 64};
    Aabb bbox;
    float init_density = VoxelField::kDefaultDensityParam;
    float init_color = VoxelField::kDefaultColorParam;

    /// Density below which cells are skipped; 0 disables the occupancy grid.
    double occupancy_threshold = 0.0;
    int occupancy_interval = 16;

    /// Validation every this many steps (0: only after the last step).
    int eval_every = 0;
    uint64_t seed = 0;
    bool serial = true;

    LrSchedule schedule() const { return LrSchedule{lr, steps, decay_factor, decay_first, decay_second}; }
    LrSchedule defocus_schedule() const { return LrSchedule{defocus_lr, steps, decay_factor, decay_first, decay_second}; }

    void validate() const {
        schedule().validate();
        defocus_schedule().validate();
        render.validate();
        if (rays_per_pixel < 1)
            throw ConfigError(concat("ReconConfig: rays_per_pixel must be >= 1, got ", rays_per_pixel));
        if (sample_point_target < render.max_samples_per_ray)
            throw ConfigError(concat("ReconConfig: sample_point_target (", sample_point_target,
                                     ") must be >= max_samples_per_ray (", render.max_samples_per_ray, ")"));
        if (fixed_batch_pixels < 0 || max_batch_pixels < 1)
            throw ConfigError("ReconConfig: batch pixel limits must be positive");
        if (!(density_lr_scale >= 0.0))
            throw ConfigError(concat("ReconConfig: density_lr_scale must be >= 0, got ", density_lr_scale));
        if (!(aperture_init_scale >= 0.0) || !(focus_init_scale > 0.0))
            throw ConfigError("ReconConfig: aperture_init_scale must be >= 0 and focus_init_scale > 0");
        if (!(defocus_warmup >= 0.0 && defocus_warmup <= 1.0))
            throw ConfigError(concat("ReconConfig: defocus_warmup must be in [0, 1], got ", defocus_warmup));
        if (!(occupancy_threshold >= 0.0) || occupancy_interval < 1)
            throw ConfigError("ReconConfig: occupancy threshold must be >= 0 and interval >= 1");
        if (eval_every < 0)
            throw ConfigError(concat("ReconConfig: eval_every must be >= 0, got ", eval_every));
    }
};

struct DefocusParams {
    double aperture_radius = 0.0;
    double focus_distance = 1.0;
    bool operator==(const DefocusParams &) const = default;
};

struct MetricsRow {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double aperture_radius = 0.0;
    double focus_distance = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
};

struct ViewScores {
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

/// All-in-focus render of a view: the view's pose and intrinsics with a_R = 0.
inline Image render_sharp(const VoxelField &field, const Camera &camera, const RenderConfig &cfg, bool serial) {
    Camera pinhole = camera;
    pinhole.aperture_radius = 0.0;
    RenderConfig c = cfg;
    c.rays_per_pixel = 1;
    return render_image(field, pinhole, c, 0, serial);
}

/// PSNR and SSIM of all-in-focus renders against the views' images.
inline ViewScores score_views(const VoxelField &field, const std::vector<View> &views, const RenderConfig &cfg,
                              bool serial) {
    ViewScores s;
    for (const View &v : views) {
        const Image8 render = encode_srgb8(render_sharp(field, v.camera, cfg, serial));
        const Image8 truth = encode_srgb8(v.image);
        s.psnr.push_back(psnr(render, truth));
        s.ssim.push_back(ssim(render, truth));
        s.mean_psnr += s.psnr.back() / double(views.size());
        s.mean_ssim += s.ssim.back() / double(views.size());
    }
    return s;
}

/// Joint optimizer of the voxel field and the shared lens parameters.
class Trainer {
  public:
    Trainer(const Dataset &data, const ReconConfig &cfg, std::optional<VoxelField> init = std::nullopt)
        : data_(data), cfg_(cfg), rng_(cfg.seed) {
        cfg_.validate();
        if (data.train.empty())
            throw ConfigError("Trainer: dataset has no training views");
        field_ = init ? std::move(*init) : VoxelField(cfg.grid, cfg.bbox, cfg.init_density, cfg.init_color);
        field_adam_ = Adam(field_.param_count());
        const Camera &first = data.train[0].camera;
        initial_ = DefocusParams{cfg_.pinhole_model ? 0.0 : first.aperture_radius * cfg_.aperture_init_scale,
                                 first.focus_distance * cfg_.focus_init_scale};
        focal_length_ = first.focal_length;
        if (!(initial_.focus_distance > focal_length_))
            throw ConfigError(concat("Trainer: initial focus distance ", initial_.focus_distance,
                                     " must exceed the focal length ", focal_length_));
        relative_ = {1.0, 1.0};
        if (cfg_.pinhole_model) {
            cfg_.optimize_aperture = false;
            cfg_.optimize_focus = false;
        }
        if (cfg_.optimize_aperture && initial_.aperture_radius == 0.0) {
            log_warning("Trainer: aperture optimization requested for a pinhole dataset; aperture stays at 0");
            cfg_.optimize_aperture = false;
        }
        const double diagonal = field_.bbox().extent().norm();
        estimator_ = SampleEstimator(std::min<double>(cfg_.render.max_samples_per_ray, diagonal / cfg_.render.step_size));
        if (cfg_.occupancy_threshold > 0.0)
            attach_occupancy(field_, cfg_.occupancy_threshold);
    }

    const ReconConfig &config() const { return cfg_; }
    const VoxelField &field() const { return field_; }
    VoxelField &mutable_field() { return field_; }
    const Adam &field_optimizer() const { return field_adam_; }
    const Adam &defocus_optimizer() const { return defocus_adam_; }
    int step() const { return step_; }
    double samples_per_ray() const { return estimator_.samples_per_ray(); }
    long pixels_seen() const { return pixels_seen_; }

    /// Field-parameter gradient of the last step's loss.
    std::span<const double> last_gradient() const {
        return worker_grads_.empty() ? std::span<const double>() : std::span<const double>(worker_grads_[0]);
    }
    /// d loss / d (a_R, z_f) of the last step.
    const std::array<double, 2> &last_defocus_gradient() const { return last_defocus_grad_; }

    DefocusParams defocus() const {
        return DefocusParams{relative_[0] * initial_.aperture_radius, relative_[1] * initial_.focus_distance};
    }

    /// Rays per pixel used by the next step.
    int current_rays_per_pixel() const {
        if (!cfg_.rpp_doubling)
            return cfg_.rays_per_pixel;
        const long epoch = pixels_seen_ / std::max<long>(1, long(data_.train_pixel_count()));
        return epoch >= 30 ? cfg_.rays_per_pixel : std::min<long>(cfg_.rays_per_pixel, 1L << epoch);
    }

    int current_batch_pixels() const {
        if (cfg_.fixed_batch_pixels > 0)
            return cfg_.fixed_batch_pixels;
        return batch_pixel_count(cfg_.sample_point_target, estimator_.samples_per_ray(), current_rays_per_pixel(),
                                 cfg_.max_batch_pixels);
    }

    /// Training camera `view` carrying the current lens parameters.
    Camera train_camera(int view) const {
        Camera c = data_.train[view].camera;
        const DefocusParams d = defocus();
        c.aperture_radius = d.aperture_radius;
        c.focus_distance = d.focus_distance;
        return c;
    }

    /// One optimizer step; returns the batch loss.
    double train_step() {
        if (step_ >= cfg_.steps)
            throw DomainError(concat("Trainer::train_step: all ", cfg_.steps, " steps already taken"));
        const int n = current_rays_per_pixel();
        const std::vector<BatchItem> batch = make_batch(data_, rng_, current_batch_pixels());
        RenderConfig rcfg = cfg_.render;
        rcfg.rays_per_pixel = n;
        rcfg.use_occupancy = cfg_.render.use_occupancy || cfg_.occupancy_threshold > 0.0;

        const bool defocus_active = step_ >= static_cast<int>(std::floor(cfg_.defocus_warmup * cfg_.steps));
        const bool want_aperture = cfg_.optimize_aperture && defocus_active;
        const bool want_focus = cfg_.optimize_focus && defocus_active;

        const int workers = worker_count(cfg_.serial);
        const int used = std::max(1, std::min<int>(workers, int(batch.size())));
        worker_grads_.resize(used);
        std::vector<WorkerSums> sums(used);
        for (auto &g : worker_grads_)
            g.assign(field_.param_count(), 0.0);
        std::vector<Camera> cameras(data_.train.size());
        for (size_t v = 0; v < cameras.size(); ++v)
            cameras[v] = train_camera(static_cast<int>(v));
        const double inv_batch = 1.0 / double(batch.size());

        parallel_for(batch.size(), used, [&](size_t begin, size_t end, int w) {
            PixelTape tape, lens_tape;
            WorkerSums &s = sums[w];
            for (size_t k = begin; k < end; ++k) {
                const BatchItem &item = batch[k];
                const Camera &cam = cameras[item.view];
                const Vec2 px = pixel_center(item.col, item.row);
                const uint64_t seed = hash_values(cfg_.seed, uint64_t(step_), uint64_t(k));
                const PixelColor c = render_pixel(field_, cam, px, rcfg, seed, &tape);
                const Rgb residual = c.color - item.target;
                const double l = smooth_l1(residual);
                if (!std::isfinite(l))
                    throw NumericError(concat("train_step: non-finite loss at step ", step_, ", view ", item.view,
                                              ", pixel (", item.col, ", ", item.row, ")"));
                s.loss += l;
                s.samples += c.evaluated_samples;
                const Rgb adjoint = smooth_l1_grad(residual) * inv_batch;
                backward_pixel(field_, tape, adjoint, worker_grads_[w]);
                if (want_focus || want_aperture) {
                    // Defocus derivatives come from a second render with its
                    // own seed, so that their noise is independent of the
                    // noise in the adjoint.
                    const uint64_t lens_seed = hash_values(seed, uint64_t(0x61704752));
                    const PixelColor disk = render_pixel(field_, cam, px, rcfg, lens_seed, &lens_tape);
                    if (want_focus)
                        s.d_focus += focus_gradient(cam, lens_tape, backward_pixel(field_, lens_tape, adjoint, {}));
                    if (want_aperture)
                        s.d_aperture += aperture_gradient(field_, cam, px, rcfg, lens_seed, disk, adjoint);
                }
            }
        });

        WorkerSums total;
        for (int w = 0; w < used; ++w) {
            total.loss += sums[w].loss;
            total.samples += sums[w].samples;
            total.d_focus += sums[w].d_focus;
            total.d_aperture += sums[w].d_aperture;
            if (w > 0)
                for (size_t i = 0; i < worker_grads_[0].size(); ++i)
                    worker_grads_[0][i] += worker_grads_[w][i];
        }
        const double loss = total.loss * inv_batch;
        last_defocus_grad_ = {total.d_aperture, total.d_focus};
        estimator_.observe(total.samples, long(batch.size()) * n);
        pixels_seen_ += long(batch.size());

        const double lr = lr_at(step_, cfg_.schedule());
        if (lr > 0.0) {
            const double density_lr = lr * cfg_.density_lr_scale;
            field_adam_.step(field_.mutable_params(), std::span<const double>(worker_grads_[0]),
                             [&](size_t i) { return (i % VoxelField::kChannels == 0) ? density_lr : lr; });
        }
        const double dlr = lr_at(step_, cfg_.defocus_schedule());
        if ((want_aperture || want_focus) && dlr > 0.0) {
            const std::array<double, 2> g{want_aperture ? total.d_aperture * initial_.aperture_radius : 0.0,
                                          want_focus ? total.d_focus * initial_.focus_distance : 0.0};
            defocus_adam_.step(std::span<double>(relative_), std::span<const double>(g),
                               [&](size_t i) { return (i == 0 ? want_aperture : want_focus) ? dlr : 0.0; });
            clamp_defocus();
        }
        ++step_;
        if (cfg_.occupancy_threshold > 0.0 && step_ % cfg_.occupancy_interval == 0)
            attach_occupancy(field_, cfg_.occupancy_threshold);
        return loss;
    }

    ViewScores validate_views() const { return score_views(field_, data_.val, cfg_.render, cfg_.serial); }

  private:
    struct WorkerSums {
        double loss = 0.0;
        long samples = 0;
        double d_focus = 0.0;
        double d_aperture = 0.0;
    };

    void clamp_defocus() {
        relative_[0] = std::max(0.0, relative_[0]);
        const double min_focus = focal_length_ * (1.0 + 1e-6);
        if (relative_[1] * initial_.focus_distance <= min_focus)
            relative_[1] = min_focus / initial_.focus_distance;
    }

    const Dataset &data_;
    ReconConfig cfg_;
    VoxelField field_;
    Adam field_adam_;
    Adam defocus_adam_{2};
    DefocusParams initial_;
    double focal_length_ = 0.05;
    std::array<double, 2> relative_{1.0, 1.0};
    SampleEstimator estimator_;
    std::mt19937_64 rng_;
    int step_ = 0;
    long pixels_seen_ = 0;
    std::vector<std::vector<double>> worker_grads_;
    std::array<double, 2> last_defocus_grad_{0.0, 0.0};
};

struct ReconResult {
    VoxelField field;
    DefocusParams defocus;
    std::vector<MetricsRow> metrics;
    ViewScores val;
    double seconds = 0.0;
};

inline void write_metrics_csv(const std::filesystem::path &path, const std::vector<MetricsRow> &rows) {
    std::ofstream os(path);
    if (!os)
        throw IoError(concat("cannot write metrics CSV ", path.string()));
    os << "step,loss,lr,a_R,z_f,val_psnr,val_ssim\n";
    os.precision(10);
    for (const MetricsRow &r : rows)
        os << r.step << ',' << r.loss << ',' << r.lr << ',' << r.aperture_radius << ',' << r.focus_distance << ','
           << r.val_psnr << ',' << r.val_ssim << '\n';
    if (!os)
        throw IoError(concat("failed writing metrics CSV ", path.string()));
}

/// Runs all steps, validating every cfg.eval_every steps and after the last.
/// With `out_dir`, writes metrics.csv and field.lfvf there.
inline ReconResult run_reconstruction(const Dataset &data, const ReconConfig &cfg,
                                      const std::optional<std::filesystem::path> &out_dir = std::nullopt,
                                      const std::function<void(const MetricsRow &)> &on_row = {}) {
    const auto start = std::chrono::steady_clock::now();
    Trainer trainer(data, cfg);
    ReconResult result;
    double loss_sum = 0.0;
    int loss_count = 0;
    for (int s = 0; s < cfg.steps; ++s) {
        const double lr = lr_at(s, cfg.schedule());
        loss_sum += trainer.train_step();
        ++loss_count;
        const bool last = trainer.step() == cfg.steps;
        if (last || (cfg.eval_every > 0 && trainer.step() % cfg.eval_every == 0)) {
            const ViewScores scores = trainer.validate_views();
            const DefocusParams d = trainer.defocus();
            MetricsRow row{trainer.step(), loss_sum / loss_count, lr, d.aperture_radius, d.focus_distance,
                           scores.mean_psnr, scores.mean_ssim};
            result.metrics.push_back(row);
            if (on_row)
                on_row(row);
            loss_sum = 0.0;
            loss_count = 0;
            if (last)
                result.val = scores;
        }
    }
    result.defocus = trainer.defocus();
    result.field = trainer.field();
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_metrics_csv(*out_dir / "metrics.csv", result.metrics);
        save_checkpoint(*out_dir / "field.lfvf", result.field);
    }
    return result;
}

} // namespace lensfield
