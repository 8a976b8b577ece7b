// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/optics/camera.hpp"
#include "lensfield/optics/camera_io.hpp"
#include "lensfield/recon/dataset.hpp"
#include "lensfield/render/image.hpp"
#include "lensfield/render/render.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace lensfield {

/// Capture setup: cameras on the upper hemisphere looking at the origin.
struct DatasetSpec {
    int camera_count = 48;
    double radius = 4.0;
    int image_size = 128;
    double fx = 180.0;
    /// Aperture radius in meters; ignored when f_number > 0.
    double aperture_radius = 0.3;
    double f_number = 0.0;
    double focal_length = 0.05;
    double focus_distance = 3.5;
    /// Lowest camera height as a fraction of the radius.
    double min_height = 0.15;
    /// Camera i is held out for validation when i % val_every == val_offset.
    int val_every = 6;
    int val_offset = 3;
    uint64_t seed = 1;
    int gt_rays_per_pixel = 128;
    double gt_step = 0.01;
    Rgb background = Rgb::Zero();

    double resolved_aperture() const { return f_number > 0.0 ? focal_length / (2.0 * f_number) : aperture_radius; }
    bool is_val(int i) const { return val_every > 0 && i % val_every == val_offset; }

    void validate() const {
        if (camera_count < 1 || image_size < 1)
            throw ConfigError("DatasetSpec: camera_count and image_size must be > 0");
        if (!(radius > 0.0) || !(fx > 0.0))
            throw ConfigError("DatasetSpec: radius and fx must be > 0");
        if (!(resolved_aperture() >= 0.0))
            throw ConfigError("DatasetSpec: aperture radius must be >= 0");
        if (!(focus_distance > focal_length))
            throw ConfigError("DatasetSpec: focus distance must exceed focal length");
        if (!(min_height >= 0.0 && min_height < 1.0))
            throw ConfigError("DatasetSpec: min_height must be in [0, 1)");
        if (val_every > 0 && (val_offset < 0 || val_offset >= val_every))
            throw ConfigError("DatasetSpec: val_offset must be in [0, val_every)");
        if (gt_rays_per_pixel < 1 || !(gt_step > 0.0))
            throw ConfigError("DatasetSpec: gt_rays_per_pixel and gt_step must be positive");
        int train = 0;
        for (int i = 0; i < camera_count; ++i)
            train += is_val(i) ? 0 : 1;
        if (train == 0)
            throw ConfigError("DatasetSpec: split leaves no training cameras");
    }
};

/// Fibonacci spiral over the band min_height <= z/r < 1 of the upper
/// hemisphere; every camera looks at the origin.
inline std::vector<Camera> make_hemisphere_cameras(const DatasetSpec &spec) {
    spec.validate();
    const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
    std::vector<Camera> cams;
    for (int i = 0; i < spec.camera_count; ++i) {
        const double z = 1.0 - (i + 0.5) / spec.camera_count * (1.0 - spec.min_height);
        const double ring = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = i * golden_angle;
        const Vec3 eye = spec.radius * Vec3(ring * std::cos(phi), ring * std::sin(phi), z);
        Camera c;
        c.width = c.height = spec.image_size;
        c.fx = c.fy = spec.fx;
        c.cx = c.cy = 0.5 * spec.image_size;
        c.rotation = look_at_rotation(eye, Vec3::Zero(), Vec3::UnitZ());
        c.translation = eye;
        c.aperture_radius = spec.resolved_aperture();
        c.focal_length = spec.focal_length;
        c.focus_distance = spec.focus_distance;
        cams.push_back(c);
    }
    return cams;
}

/// One image file listed in a manifest.
struct ManifestEntry {
    int camera = 0;
    std::string split;    // train | val | train_sharp
    std::string encoding; // linear (PFM) | srgb (PNG)
    std::string path;     // relative to the manifest

    bool operator==(const ManifestEntry &) const = default;
};

struct Manifest {
    std::string cameras = "cameras.txt";
    std::vector<ManifestEntry> images;

    bool operator==(const Manifest &) const = default;
};

inline void write_manifest(const std::filesystem::path &path, const Manifest &m) {
    std::ofstream os(path);
    if (!os)
        throw IoError(concat("cannot write manifest ", path.string()));
    os << "# lensfield dataset manifest\n";
    os << "cameras " << m.cameras << "\n";
    for (const ManifestEntry &e : m.images)
        os << "image " << e.camera << ' ' << e.split << ' ' << e.encoding << ' ' << e.path << '\n';
    if (!os)
        throw IoError(concat("failed writing manifest ", path.string()));
}

inline Manifest read_manifest(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is)
        throw IoError(concat("cannot open manifest ", path.string()));
    Manifest m;
    m.cameras.clear();
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "cameras") {
            ls >> m.cameras;
        } else if (key == "image") {
            ManifestEntry e;
            if (!(ls >> e.camera >> e.split >> e.encoding >> e.path))
                throw ConfigError(concat(path.string(), ":", line_no, ": malformed image line"));
            if (e.split != "train" && e.split != "val" && e.split != "train_sharp")
                throw ConfigError(concat(path.string(), ":", line_no, ": unknown split '", e.split, "'"));
            if (e.encoding != "linear" && e.encoding != "srgb")
                throw ConfigError(concat(path.string(), ":", line_no, ": unknown encoding '", e.encoding, "'"));
            m.images.push_back(e);
        } else {
            throw ConfigError(concat(path.string(), ":", line_no, ": unknown key '", key, "'"));
        }
    }
    if (m.cameras.empty())
        throw ConfigError(concat(path.string(), ": missing 'cameras' line"));
    return m;
}

/// Loads the linear images of a manifest into a Dataset.
inline Dataset load_dataset(const std::filesystem::path &manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    const auto root = manifest_path.parent_path();
    const std::vector<Camera> cams = load_cameras(root / m.cameras);
    Dataset d;
    for (const ManifestEntry &e : m.images) {
        if (e.encoding != "linear")
            continue;
        if (e.camera < 0 || e.camera >= int(cams.size()))
            throw ConfigError(concat(manifest_path.string(), ": camera index ", e.camera, " out of range"));
        View v{cams[e.camera], read_pfm(root / e.path)};
        if (v.image.width != v.camera.width || v.image.height != v.camera.height)
            throw ConfigError(concat("image ", (root / e.path).string(), " does not match its camera size"));
        (e.split == "train" ? d.train : e.split == "val" ? d.val : d.train_sharp).push_back(std::move(v));
    }
    return d;
}

inline std::string view_file(const std::string &split, int camera, const char *ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s/%03d.%s", split.c_str(), camera, ext);
    return buf;
}

/// Renders the capture: defocused training images with gt_rays_per_pixel
/// rays, all-in-focus validation images at held-out poses and all-in-focus
/// images at the training poses. With `out_dir`, writes cameras, PFM + PNG
/// images and a manifest.
inline Dataset fabricate_dataset(const VoxelField &scene, const DatasetSpec &spec,
                                 const std::optional<std::filesystem::path> &out_dir = std::nullopt,
                                 bool serial = true) {
    spec.validate();
    const std::vector<Camera> cams = make_hemisphere_cameras(spec);
    RenderConfig cfg;
    cfg.step_size = spec.gt_step;
    cfg.background = spec.background;
    cfg.rays_per_pixel = spec.gt_rays_per_pixel;
    cfg.bounds = RayBounds{0.0, 2.0 * spec.radius + scene.bbox().extent().norm()};
    cfg.max_samples_per_ray = static_cast<int>(std::ceil(cfg.bounds.t_far / cfg.step_size)) + 1;
    cfg.use_occupancy = scene.occupancy() != nullptr;
    RenderConfig sharp_cfg = cfg;
    sharp_cfg.rays_per_pixel = 1;

    Dataset d;
    Manifest manifest;
    if (out_dir) {
        for (const char *sub : {"train", "val", "train_sharp"})
            std::filesystem::create_directories(*out_dir / sub);
        save_cameras(*out_dir / manifest.cameras, cams);
    }
    auto emit = [&](int i, const std::string &split, const Camera &cam, const Image &img) {
        if (!out_dir)
            return;
        const std::string pfm = view_file(split, i, "pfm"), png = view_file(split, i, "png");
        write_pfm(*out_dir / pfm, img);
        write_png(*out_dir / png, encode_srgb8(img));
        manifest.images.push_back({i, split, "linear", pfm});
        manifest.images.push_back({i, split, "srgb", png});
        (void)cam;
    };
    for (int i = 0; i < int(cams.size()); ++i) {
        Camera pinhole = cams[i];
        pinhole.aperture_radius = 0.0;
        const Image sharp = render_image(scene, pinhole, sharp_cfg, hash_values(spec.seed, uint64_t(i), 1u), serial);
        if (spec.is_val(i)) {
            d.val.push_back(View{cams[i], sharp});
            emit(i, "val", cams[i], sharp);
        } else {
            const Image blurred = render_image(scene, cams[i], cfg, hash_values(spec.seed, uint64_t(i)), serial);
            d.train.push_back(View{cams[i], blurred});
            d.train_sharp.push_back(View{cams[i], sharp});
            emit(i, "train", cams[i], blurred);
            emit(i, "train_sharp", cams[i], sharp);
        }
    }
    if (out_dir)
        write_manifest(*out_dir / "manifest.txt", manifest);
    return d;
}

} // namespace lensfield
