// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/cli/config.hpp"
#include "lensfield/cli/plot.hpp"
#include "lensfield/field/checkpoint.hpp"
#include "lensfield/grad/gradcheck.hpp"
#include "lensfield/metrics.hpp"
#include "lensfield/recon/trainer.hpp"
#include "lensfield/scenegen/dataset.hpp"
#include "lensfield/scenegen/scene.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace lensfield::cli {

namespace fs = std::filesystem;

/// Per-image scores of an evaluation.
struct MetricReport {
    std::vector<std::string> files;
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double seconds = 0.0;
};

// Fixed-point text for log lines.
inline std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::ofstream open_out(const fs::path &path) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os)
        throw IoError(concat("cannot write ", path.string()));
    os.precision(10);
    return os;
}

inline void write_png_in(const fs::path &path, const Image8 &img) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    write_png(path, img);
}

inline void null_log(const std::string &) {}

using Log = std::function<void(const std::string &)>;

// Camera indices of the views of a loaded dataset, split by split.
struct ViewIndices {
    std::vector<int> train, val, train_sharp;
};

inline ViewIndices view_indices(const fs::path &manifest_path) {
    ViewIndices ix;
    for (const ManifestEntry &e : read_manifest(manifest_path).images)
        if (e.encoding == "linear")
            (e.split == "train" ? ix.train : e.split == "val" ? ix.val : ix.train_sharp).push_back(e.camera);
    return ix;
}

inline fs::path manifest_in(const fs::path &data_dir) {
    const fs::path m = fs::is_directory(data_dir) ? data_dir / "manifest.txt" : data_dir;
    if (!fs::exists(m))
        throw ConfigError(concat("no dataset manifest at ", m.string()));
    return m;
}

inline std::string format_row(const MetricsRow &r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "step %6d  loss %.5f  lr %.3g  a_R %.4f  z_f %.4f  val PSNR %.2f  SSIM %.4f",
                  r.step, r.loss, r.lr, r.aperture_radius, r.focus_distance, r.val_psnr, r.val_ssim);
    return buf;
}

} // namespace detail

/// Ground-truth voxel field of the configured scene, with occupancy skipping.
inline VoxelField ground_truth_field(const Settings &s) {
    const int n = s.scene_resolution;
    VoxelField f = bake_scene(scene_by_name(s.scene), Resolution{n, n, n}, s.recon.serial);
    if (s.gt_occupancy > 0.0)
        attach_occupancy(f, s.gt_occupancy);
    return f;
}

/// Reconstruction settings with the dataset's background applied.
inline ReconConfig recon_config(const Settings &s) {
    ReconConfig c = s.recon;
    c.render.background = s.dataset.background;
    return c;
}

/// Renders the scene's capture into `out`.
inline Dataset fabricate(const Settings &s, const fs::path &out, const detail::Log &log = detail::null_log) {
    validate(s);
    write_resolved_config(out, s);
    const auto t0 = std::chrono::steady_clock::now();
    const VoxelField gt = ground_truth_field(s);
    log(concat("baked '", s.scene, "' at ", s.scene_resolution, "^3 in ", fixed(detail::seconds_since(t0)), " s"));
    Dataset d = fabricate_dataset(gt, s.dataset, out, s.recon.serial);
    log(concat("rendered ", d.train.size(), " training and ", d.val.size(), " validation views in ",
               fixed(detail::seconds_since(t0)), " s"));
    return d;
}

inline void write_summary(const fs::path &path, const std::vector<std::pair<std::string, std::string>> &lines) {
    std::ofstream os = detail::open_out(path);
    for (const auto &[k, v] : lines)
        os << k << ": " << v << '\n';
}

/// Writes all-in-focus renders and their scores for the validation views.
inline ViewScores write_val_renders(const VoxelField &field, const Dataset &data, const detail::ViewIndices &ix,
                                    const ReconConfig &cfg, const fs::path &out) {
    ViewScores scores;
    std::ofstream csv = detail::open_out(out / "view_metrics.csv");
    csv << "split,camera,psnr,ssim\n";
    for (size_t i = 0; i < data.val.size(); ++i) {
        const View &v = data.val[i];
        const Image8 render = encode_srgb8(render_sharp(field, v.camera, cfg.render, cfg.serial));
        const Image8 truth = encode_srgb8(v.image);
        const int cam = i < ix.val.size() ? ix.val[i] : int(i);
        detail::write_png_in(out / "renders" / view_file("val", cam, "png"), render);
        scores.psnr.push_back(psnr(render, truth));
        scores.ssim.push_back(ssim(render, truth));
        scores.mean_psnr += scores.psnr.back() / double(data.val.size());
        scores.mean_ssim += scores.ssim.back() / double(data.val.size());
        csv << "val," << cam << ',' << scores.psnr.back() << ',' << scores.ssim.back() << '\n';
    }
    return scores;
}

/// Trains on the dataset in `data_dir` and writes metrics.csv, field.lfvf,
/// validation renders, view_metrics.csv, summary.txt and training.png.
inline ReconResult reconstruct(const Settings &s, const fs::path &data_dir, const fs::path &out,
                               const detail::Log &log = detail::null_log) {
    validate(s);
    write_resolved_config(out, s);
    const fs::path manifest = detail::manifest_in(data_dir);
    const Dataset data = load_dataset(manifest);
    const ReconConfig cfg = recon_config(s);
    ReconResult r = run_reconstruction(data, cfg, out, [&](const MetricsRow &row) { log(detail::format_row(row)); });
    const ViewScores scores = write_val_renders(r.field, data, detail::view_indices(manifest), cfg, out);
    plot_csv(out / "metrics.csv", out / "training.png");
    const Camera &truth = data.train.front().camera;
    write_summary(out / "summary.txt",
                  {{"validation views", concat(data.val.size())},
                   {"mean PSNR (dB)", fixed(scores.mean_psnr, 3)},
                   {"mean SSIM", fixed(scores.mean_ssim, 4)},
                   {"aperture radius estimate", fixed(r.defocus.aperture_radius, 5)},
                   {"aperture radius of the data", fixed(truth.aperture_radius, 5)},
                   {"focus distance estimate", fixed(r.defocus.focus_distance, 5)},
                   {"focus distance of the data", fixed(truth.focus_distance, 5)},
                   {"runtime (s)", fixed(r.seconds, 1)},
                   {"metric domain", "sRGB 8-bit; PSNR capped at 99 dB; SSIM 11x11 Gaussian, K1 0.01, K2 0.03"}});
    return r;
}

/// Renders a checkpoint at the dataset's cameras: defocused training views
/// under train/, all-in-focus views under train_sharp/ and val/. File names
/// match the dataset's PNGs so that `evaluate` can compare the two trees.
inline void render_checkpoint(const Settings &s, const fs::path &checkpoint, const fs::path &data_dir,
                              const fs::path &out, const detail::Log &log = detail::null_log) {
    validate(s);
    write_resolved_config(out, s);
    VoxelField field = load_checkpoint(checkpoint);
    ReconConfig cfg = recon_config(s);
    if (cfg.occupancy_threshold > 0.0)
        attach_occupancy(field, cfg.occupancy_threshold);
    RenderConfig lens = cfg.render;
    lens.rays_per_pixel = cfg.rays_per_pixel;
    lens.use_occupancy = field.occupancy() != nullptr;
    const fs::path manifest = detail::manifest_in(data_dir);
    const Manifest m = read_manifest(manifest);
    const std::vector<Camera> cams = load_cameras(manifest.parent_path() / m.cameras);
    int count = 0;
    for (const ManifestEntry &e : m.images) {
        if (e.encoding != "srgb")
            continue;
        if (e.camera < 0 || e.camera >= int(cams.size()))
            throw ConfigError(concat(manifest.string(), ": camera index ", e.camera, " out of range"));
        const Camera &cam = cams[e.camera];
        const Image img = e.split == "train"
                              ? render_image(field, cam, lens, hash_values(cfg.seed, uint64_t(e.camera)), cfg.serial)
                              : render_sharp(field, cam, lens, cfg.serial);
        detail::write_png_in(out / e.path, encode_srgb8(img));
        ++count;
    }
    log(concat("rendered ", count, " views into ", out.string()));
}

/// Scores every PNG under `render_dir` against the PNG with the same relative
/// path under `gt_dir`.
inline MetricReport evaluate(const fs::path &render_dir, const fs::path &gt_dir,
                             const std::optional<fs::path> &out = std::nullopt) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::is_directory(render_dir))
        throw ConfigError(concat("render directory ", render_dir.string(), " does not exist"));
    if (!fs::is_directory(gt_dir))
        throw ConfigError(concat("ground-truth directory ", gt_dir.string(), " does not exist"));
    std::vector<fs::path> rel;
    for (const auto &entry : fs::recursive_directory_iterator(render_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            rel.push_back(fs::relative(entry.path(), render_dir));
    std::sort(rel.begin(), rel.end());
    MetricReport report;
    for (const fs::path &r : rel) {
        const fs::path a = render_dir / r, b = gt_dir / r;
        if (!fs::exists(b))
            continue;
        const Image8 x = read_png(a), y = read_png(b);
        if (x.width != y.width || x.height != y.height)
            throw ConfigError(concat("image size mismatch: ", a.string(), " is ", x.width, "x", x.height, " but ",
                                     b.string(), " is ", y.width, "x", y.height));
        report.files.push_back(r.generic_string());
        report.psnr.push_back(psnr(x, y));
        report.ssim.push_back(ssim(x, y));
    }
    if (report.files.empty())
        throw ConfigError(concat("no PNG under ", render_dir.string(), " has a counterpart under ", gt_dir.string()));
    for (size_t i = 0; i < report.files.size(); ++i) {
        report.mean_psnr += report.psnr[i] / double(report.files.size());
        report.mean_ssim += report.ssim[i] / double(report.files.size());
    }
    report.seconds = detail::seconds_since(t0);
    if (out) {
        std::ofstream csv = detail::open_out(*out / "evaluation.csv");
        csv << "file,psnr,ssim\n";
        for (size_t i = 0; i < report.files.size(); ++i)
            csv << report.files[i] << ',' << report.psnr[i] << ',' << report.ssim[i] << '\n';
        write_summary(*out / "summary.txt",
                      {{"images", concat(report.files.size())},
                       {"mean PSNR (dB)", fixed(report.mean_psnr, 3)},
                       {"mean SSIM", fixed(report.mean_ssim, 4)},
                       {"runtime (s)", fixed(report.seconds, 2)},
                       {"metric domain", "sRGB 8-bit; PSNR capped at 99 dB; SSIM 11x11 Gaussian, K1 0.01, K2 0.03"}});
    }
    return report;
}

inline void write_gradcheck_csv(const fs::path &path, const std::vector<GradProbe> &probes) {
    std::ofstream csv = detail::open_out(path);
    csv.precision(12);
    csv << "probe,kind,analytic,fd,rel_err\n";
    for (const GradProbe &p : probes)
        csv << p.index << ',' << p.kind << ',' << p.analytic << ',' << p.fd << ',' << p.rel_err << '\n';
}

/// Runs the gradient probes and writes gradcheck.csv and gradcheck.png.
/// Throws NumericError after writing if any probe exceeds its tolerance.
inline std::vector<GradProbe> gradcheck(const Settings &s, const fs::path &out,
                                        const detail::Log &log = detail::null_log) {
    validate(s);
    write_resolved_config(out, s);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<GradProbe> probes = run_gradcheck(s.gradcheck);
    write_gradcheck_csv(out / "gradcheck.csv", probes);
    plot_csv(out / "gradcheck.csv", out / "gradcheck.png");
    std::map<std::string, std::pair<int, double>> by_kind;
    int failed = 0;
    for (const GradProbe &p : probes) {
        auto &[n, worst] = by_kind[p.kind];
        ++n;
        worst = std::max(worst, p.rel_err);
        failed += p.passed() ? 0 : 1;
    }
    std::vector<std::pair<std::string, std::string>> lines;
    for (const auto &[kind, v] : by_kind)
        lines.emplace_back(kind + " probes", concat(v.first, ", worst relative error ", fixed(v.second, 6)));
    lines.emplace_back("failed probes", concat(failed));
    lines.emplace_back("runtime (s)", fixed(detail::seconds_since(t0), 1));
    write_summary(out / "summary.txt", lines);
    for (const auto &[k, v] : lines)
        log(k + ": " + v);
    if (failed > 0)
        throw NumericError(concat("gradcheck: ", failed, " of ", probes.size(), " probes exceed their tolerance"));
    return probes;
}

struct RppRow {
    int rpp = 0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double seconds = 0.0;
};

/// One reconstruction per rays-per-pixel value at a fixed number of pixels
/// per batch. Writes ablate_rpp.csv and ablate_rpp.png.
inline std::vector<RppRow> ablate_rpp(const Settings &s, const fs::path &data_dir, const fs::path &out,
                                      const detail::Log &log = detail::null_log) {
    validate(s);
    write_resolved_config(out, s);
    const Dataset data = load_dataset(detail::manifest_in(data_dir));
    std::vector<RppRow> rows;
    for (int rpp : s.ablate_rpp) {
        ReconConfig cfg = recon_config(s);
        cfg.rays_per_pixel = rpp;
        cfg.fixed_batch_pixels = s.ablate_pixels;
        if (s.ablate_steps > 0)
            cfg.steps = s.ablate_steps;
        cfg.eval_every = 0;
        const ReconResult r = run_reconstruction(data, cfg, out / concat("rpp_", rpp));
        rows.push_back(RppRow{rpp, r.val.mean_psnr, r.val.mean_ssim, r.seconds});
        log(concat("rpp ", rpp, ": val PSNR ", fixed(r.val.mean_psnr), " dB, SSIM ", fixed(r.val.mean_ssim, 4),
                   ", ", fixed(r.seconds, 1), " s"));
    }
    {
        std::ofstream csv = detail::open_out(out / "ablate_rpp.csv");
        csv << "rpp,val_psnr,val_ssim,seconds\n";
        for (const RppRow &r : rows)
            csv << r.rpp << ',' << r.val_psnr << ',' << r.val_ssim << ',' << r.seconds << '\n';
    }
    plot_csv(out / "ablate_rpp.csv", out / "ablate_rpp.png");
    return rows;
}

struct InitCell {
    double aperture_scale = 1.0;
    double focus_scale = 1.0;
    ViewScores scene_only;
    ViewScores joint;
    DefocusParams joint_estimate;
    double scene_seconds = 0.0;
    double joint_seconds = 0.0;
};

/// Rows of the initialization study: each aperture scale at true focus, then
/// each focus scale at true aperture.
inline std::vector<std::pair<double, double>> init_grid(const std::vector<double> &scales) {
    std::vector<std::pair<double, double>> g;
    for (double a : scales)
        g.emplace_back(a, 1.0);
    for (double f : scales)
        g.emplace_back(1.0, f);
    return g;
}

inline std::string percent(double scale) { return concat(std::lround(scale * 100.0)); }

/// Table of "PSNR | SSIM" cells, one row per initialization.
inline std::string format_init_table(const std::vector<InitCell> &cells) {
    std::ostringstream os;
    os << std::fixed;
    os << "| aperture init. | focus init. | scene only    | + opt. defocus params |\n";
    os << "|---------------:|------------:|:-------------:|:---------------------:|\n";
    for (const InitCell &c : cells) {
        os << "| " << std::setw(13) << percent(c.aperture_scale) + "%" << " | " << std::setw(10)
           << percent(c.focus_scale) + "%" << " | " << std::setprecision(2) << c.scene_only.mean_psnr << " | "
           << std::setprecision(3) << c.scene_only.mean_ssim << " | " << std::setprecision(2) << c.joint.mean_psnr
           << " | " << std::setprecision(3) << c.joint.mean_ssim << "         |\n";
    }
    return os.str();
}

/// Scene-only and joint reconstructions from perturbed aperture and focus
/// initializations. Writes ablate_defocus_init.csv and a markdown table.
/// Cells with equal initializations are trained once.
inline std::vector<InitCell> ablate_defocus_init(const Settings &s, const fs::path &data_dir, const fs::path &out,
                                                 const detail::Log &log = detail::null_log) {
    validate(s);
    write_resolved_config(out, s);
    const Dataset data = load_dataset(detail::manifest_in(data_dir));
    std::map<std::pair<double, double>, InitCell> done;
    std::vector<InitCell> cells;
    for (const auto &[a, f] : init_grid(s.ablate_scales)) {
        if (auto it = done.find({a, f}); it != done.end()) {
            cells.push_back(it->second);
            continue;
        }
        InitCell cell;
        cell.aperture_scale = a;
        cell.focus_scale = f;
        const std::string tag = concat("a", percent(a), "_f", percent(f));
        for (bool joint : {false, true}) {
            ReconConfig cfg = recon_config(s);
            cfg.aperture_init_scale = a;
            cfg.focus_init_scale = f;
            cfg.optimize_aperture = cfg.optimize_focus = joint;
            cfg.eval_every = 0;
            const ReconResult r = run_reconstruction(data, cfg, out / (tag + (joint ? "_joint" : "_scene")));
            (joint ? cell.joint : cell.scene_only) = r.val;
            (joint ? cell.joint_seconds : cell.scene_seconds) = r.seconds;
            if (joint)
                cell.joint_estimate = r.defocus;
            log(concat("aperture ", percent(a), "%, focus ", percent(f), "%, ", joint ? "joint" : "scene only",
                       ": val PSNR ", fixed(r.val.mean_psnr), " dB, a_R ", fixed(r.defocus.aperture_radius, 4),
                       ", z_f ", fixed(r.defocus.focus_distance, 4), ", ", fixed(r.seconds, 1), " s"));
        }
        done.emplace(std::make_pair(a, f), cell);
        cells.push_back(cell);
    }
    std::ofstream csv = detail::open_out(out / "ablate_defocus_init.csv");
    csv << "aperture_init,focus_init,scene_psnr,scene_ssim,joint_psnr,joint_ssim,joint_a_R,joint_z_f,"
           "scene_seconds,joint_seconds\n";
    for (const InitCell &c : cells)
        csv << c.aperture_scale << ',' << c.focus_scale << ',' << c.scene_only.mean_psnr << ','
            << c.scene_only.mean_ssim << ',' << c.joint.mean_psnr << ',' << c.joint.mean_ssim << ','
            << c.joint_estimate.aperture_radius << ',' << c.joint_estimate.focus_distance << ',' << c.scene_seconds
            << ',' << c.joint_seconds << '\n';
    std::ofstream table = detail::open_out(out / "ablate_defocus_init.md");
    table << "Validation PSNR | SSIM from perturbed aperture radius and focus distance initializations\n\n"
          << format_init_table(cells);
    return cells;
}

} // namespace lensfield::cli
