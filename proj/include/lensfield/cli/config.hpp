// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lensfield/common.hpp"
#include "lensfield/grad/gradcheck.hpp"
#include "lensfield/optics/camera_io.hpp"
#include "lensfield/recon/trainer.hpp"
#include "lensfield/scenegen/dataset.hpp"
#include "lensfield/scenegen/scene.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lensfield::cli {

/// Reconstruction settings sized for a single workstation: 64^3 grid, 400
/// steps, occupancy skipping.
inline ReconConfig desk_recon_config() {
    ReconConfig c;
    c.lr = 0.05;
    c.density_lr_scale = 60.0;
    c.steps = 800;
    c.rays_per_pixel = 16;
    c.grid = Resolution{64, 64, 64};
    c.render.step_size = 0.02;
    c.render.bounds = RayBounds{0.0, 12.0};
    c.render.max_samples_per_ray = 600;
    c.occupancy_threshold = 0.05;
    c.defocus_lr = 2e-2;
    c.defocus_warmup = 0.02;
    c.eval_every = 100;
    c.seed = 1;
    return c;
}

/// Everything a command can be configured with.
struct Settings {
    std::string scene = "occluder";
    int scene_resolution = 128;
    /// Occupancy threshold for ground-truth renders.
    double gt_occupancy = 1e-4;
    DatasetSpec dataset;
    ReconConfig recon = desk_recon_config();
    GradcheckConfig gradcheck;
    std::vector<int> ablate_rpp{1, 2, 4, 8, 16, 32};
    int ablate_pixels = 1024;
    /// Steps of each ablate-rpp run; 0 uses `steps`.
    int ablate_steps = 0;
    std::vector<double> ablate_scales{0.8, 1.0, 1.2};
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T> T parse_integer(std::string_view text, std::string_view key) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError(concat("'", key, "' expects an integer, got '", text, "'"));
    return v;
}

inline double parse_double(std::string_view text, std::string_view key) {
    try {
        return parse_real(text, key);
    } catch (const std::exception &) {
        throw ConfigError(concat("'", key, "' expects a number, got '", text, "'"));
    }
}

inline bool parse_bool(std::string_view text, std::string_view key) {
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "no" || text == "off")
        return false;
    throw ConfigError(concat("'", key, "' expects true or false, got '", text, "'"));
}

inline std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is{std::string(text)};
    while (std::getline(is, item, ','))
        for (std::istringstream words(item); words >> item;)
            out.push_back(item);
    return out;
}

template <typename T> std::vector<T> parse_list(std::string_view text, std::string_view key, size_t count = 0) {
    std::vector<T> out;
    for (const std::string &s : split_list(text)) {
        if constexpr (std::is_integral_v<T>)
            out.push_back(parse_integer<T>(s, key));
        else
            out.push_back(parse_double(s, key));
    }
    if (out.empty() || (count > 0 && out.size() != count))
        throw ConfigError(concat("'", key, "' expects ", count > 0 ? concat(count) : std::string("a list of"),
                                 " comma-separated values, got '", text, "'"));
    return out;
}

inline std::string format_number(double v) { return format_real(v); }

template <typename T> std::string join(const std::vector<T> &v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i)
            out += ", ";
        if constexpr (std::is_integral_v<T>)
            out += std::to_string(v[i]);
        else
            out += format_number(v[i]);
    }
    return out;
}

inline std::string format_vec3(const Vec3 &v) { return join(std::vector<double>{v.x(), v.y(), v.z()}); }
inline Vec3 parse_vec3(std::string_view text, std::string_view key) {
    const auto v = parse_list<double>(text, key, 3);
    return Vec3(v[0], v[1], v[2]);
}

} // namespace detail

/// One configuration key with its accessors.
struct Key {
    std::string name;
    std::string help;
    std::function<std::string(const Settings &)> get;
    std::function<void(Settings &, std::string_view)> set;
};

namespace detail {

template <typename Get> Key real(std::string name, std::string help, Get field) {
    return Key{name, std::move(help), [field](const Settings &s) { return format_number(field(const_cast<Settings &>(s))); },
               [field, name](Settings &s, std::string_view v) { field(s) = parse_double(v, name); }};
}
template <typename T, typename Get> Key integer(std::string name, std::string help, Get field) {
    return Key{name, std::move(help), [field](const Settings &s) { return std::to_string(field(const_cast<Settings &>(s))); },
               [field, name](Settings &s, std::string_view v) { field(s) = parse_integer<T>(v, name); }};
}
template <typename Get> Key flag(std::string name, std::string help, Get field) {
    return Key{name, std::move(help),
               [field](const Settings &s) { return std::string(field(const_cast<Settings &>(s)) ? "true" : "false"); },
               [field, name](Settings &s, std::string_view v) { field(s) = parse_bool(v, name); }};
}
template <typename Get> Key vec3(std::string name, std::string help, Get field) {
    return Key{name, std::move(help), [field](const Settings &s) { return format_vec3(field(const_cast<Settings &>(s))); },
               [field, name](Settings &s, std::string_view v) { field(s) = parse_vec3(v, name); }};
}
template <typename Get> Key rgb(std::string name, std::string help, Get field) {
    return Key{name, std::move(help),
               [field](const Settings &s) {
                   const Rgb &c = field(const_cast<Settings &>(s));
                   return format_vec3(Vec3(c[0], c[1], c[2]));
               },
               [field, name](Settings &s, std::string_view v) {
                   const Vec3 c = parse_vec3(v, name);
                   field(s) = Rgb(c.x(), c.y(), c.z());
               }};
}

} // namespace detail

/// All recognised keys, in the order they are written to resolved configs.
inline const std::vector<Key> &config_keys() {
    using namespace detail;
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        k.push_back(Key{"scene", "occluder | box | empty", [](const Settings &s) { return s.scene; },
                        [](Settings &s, std::string_view v) {
                            scene_by_name(std::string(v));
                            s.scene = std::string(v);
                        }});
        k.push_back(integer<int>("scene_resolution", "ground-truth voxel grid per axis",
                                 [](Settings &s) -> int & { return s.scene_resolution; }));
        k.push_back(real("gt_occupancy", "density threshold for skipping empty ground-truth cells",
                         [](Settings &s) -> double & { return s.gt_occupancy; }));

        k.push_back(integer<int>("camera_count", "cameras on the hemisphere",
                                 [](Settings &s) -> int & { return s.dataset.camera_count; }));
        k.push_back(real("camera_radius", "distance of every camera from the origin (m)",
                         [](Settings &s) -> double & { return s.dataset.radius; }));
        k.push_back(integer<int>("image_size", "image width and height (px)",
                                 [](Settings &s) -> int & { return s.dataset.image_size; }));
        k.push_back(real("fx", "focal length in pixels", [](Settings &s) -> double & { return s.dataset.fx; }));
        k.push_back(real("aperture_radius", "aperture radius (m); ignored when f_number > 0",
                         [](Settings &s) -> double & { return s.dataset.aperture_radius; }));
        k.push_back(real("f_number", "f-number; 0 uses aperture_radius",
                         [](Settings &s) -> double & { return s.dataset.f_number; }));
        k.push_back(real("focal_length", "lens focal length (m)",
                         [](Settings &s) -> double & { return s.dataset.focal_length; }));
        k.push_back(real("focus_distance", "focus distance (m)",
                         [](Settings &s) -> double & { return s.dataset.focus_distance; }));
        k.push_back(real("min_height", "lowest camera height as a fraction of the radius",
                         [](Settings &s) -> double & { return s.dataset.min_height; }));
        k.push_back(integer<int>("val_every", "every n-th camera is held out",
                                 [](Settings &s) -> int & { return s.dataset.val_every; }));
        k.push_back(integer<int>("val_offset", "index of the first held-out camera",
                                 [](Settings &s) -> int & { return s.dataset.val_offset; }));
        k.push_back(integer<uint64_t>("dataset_seed", "seed for ground-truth renders",
                                      [](Settings &s) -> uint64_t & { return s.dataset.seed; }));
        k.push_back(integer<int>("gt_rays_per_pixel", "aperture rays per ground-truth pixel",
                                 [](Settings &s) -> int & { return s.dataset.gt_rays_per_pixel; }));
        k.push_back(real("gt_step", "ground-truth quadrature step (m)",
                         [](Settings &s) -> double & { return s.dataset.gt_step; }));
        k.push_back(rgb("background", "linear background color of renders and data", [](Settings &s) -> Rgb & {
            return s.dataset.background;
        }));

        k.push_back(real("lr", "base learning rate", [](Settings &s) -> double & { return s.recon.lr; }));
        k.push_back(integer<int>("steps", "optimizer steps", [](Settings &s) -> int & { return s.recon.steps; }));
        k.push_back(real("decay_factor", "learning-rate factor at each schedule boundary",
                         [](Settings &s) -> double & { return s.recon.decay_factor; }));
        k.push_back(real("decay_first", "first boundary as a fraction of steps",
                         [](Settings &s) -> double & { return s.recon.decay_first; }));
        k.push_back(real("decay_second", "second boundary as a fraction of steps",
                         [](Settings &s) -> double & { return s.recon.decay_second; }));
        k.push_back(real("density_lr_scale", "learning-rate multiplier for density",
                         [](Settings &s) -> double & { return s.recon.density_lr_scale; }));
        k.push_back(integer<long>("sample_point_target", "quadrature points per batch",
                                  [](Settings &s) -> long & { return s.recon.sample_point_target; }));
        k.push_back(integer<int>("rays_per_pixel", "aperture rays per training pixel",
                                 [](Settings &s) -> int & { return s.recon.rays_per_pixel; }));
        k.push_back(flag("rpp_doubling", "start at 1 ray per pixel and double every epoch",
                         [](Settings &s) -> bool & { return s.recon.rpp_doubling; }));
        k.push_back(integer<int>("fixed_batch_pixels", "pixels per batch; 0 follows sample_point_target",
                                 [](Settings &s) -> int & { return s.recon.fixed_batch_pixels; }));
        k.push_back(integer<int>("max_batch_pixels", "upper bound on pixels per batch",
                                 [](Settings &s) -> int & { return s.recon.max_batch_pixels; }));
        k.push_back(flag("pinhole_model", "reconstruct with a pinhole camera",
                         [](Settings &s) -> bool & { return s.recon.pinhole_model; }));
        k.push_back(flag("optimize_aperture", "optimize the aperture radius",
                         [](Settings &s) -> bool & { return s.recon.optimize_aperture; }));
        k.push_back(flag("optimize_focus", "optimize the focus distance",
                         [](Settings &s) -> bool & { return s.recon.optimize_focus; }));
        k.push_back(real("aperture_init_scale", "initial aperture radius relative to the data",
                         [](Settings &s) -> double & { return s.recon.aperture_init_scale; }));
        k.push_back(real("focus_init_scale", "initial focus distance relative to the data",
                         [](Settings &s) -> double & { return s.recon.focus_init_scale; }));
        k.push_back(real("defocus_lr", "learning rate of aperture and focus (relative units)",
                         [](Settings &s) -> double & { return s.recon.defocus_lr; }));
        k.push_back(real("defocus_warmup", "fraction of steps before aperture and focus move",
                         [](Settings &s) -> double & { return s.recon.defocus_warmup; }));
        k.push_back(real("step_size", "training quadrature step (m)",
                         [](Settings &s) -> double & { return s.recon.render.step_size; }));
        k.push_back(real("t_near", "ray start (m)", [](Settings &s) -> double & { return s.recon.render.bounds.t_near; }));
        k.push_back(real("t_far", "ray end (m)", [](Settings &s) -> double & { return s.recon.render.bounds.t_far; }));
        k.push_back(integer<int>("max_samples_per_ray", "quadrature samples per ray at most",
                                 [](Settings &s) -> int & { return s.recon.render.max_samples_per_ray; }));
        k.push_back(real("min_transmittance", "ray marching stops below this transmittance",
                         [](Settings &s) -> double & { return s.recon.render.min_transmittance; }));
        k.push_back(Key{"grid", "reconstruction grid per axis (one value or three)",
                        [](const Settings &s) {
                            const Resolution &r = s.recon.grid;
                            return join(std::vector<int>{r.x, r.y, r.z});
                        },
                        [](Settings &s, std::string_view v) {
                            const auto n = parse_list<int>(v, "grid");
                            if (n.size() != 1 && n.size() != 3)
                                throw ConfigError(concat("'grid' expects 1 or 3 values, got '", v, "'"));
                            s.recon.grid = n.size() == 1 ? Resolution{n[0], n[0], n[0]} : Resolution{n[0], n[1], n[2]};
                        }});
        k.push_back(vec3("bbox_min", "reconstruction box lower corner", [](Settings &s) -> Vec3 & { return s.recon.bbox.lo; }));
        k.push_back(vec3("bbox_max", "reconstruction box upper corner", [](Settings &s) -> Vec3 & { return s.recon.bbox.hi; }));
        k.push_back(Key{"init_density", "initial raw density parameter",
                        [](const Settings &s) { return format_number(s.recon.init_density); },
                        [](Settings &s, std::string_view v) {
                            s.recon.init_density = static_cast<float>(parse_double(v, "init_density"));
                        }});
        k.push_back(Key{"init_color", "initial raw color parameter",
                        [](const Settings &s) { return format_number(s.recon.init_color); },
                        [](Settings &s, std::string_view v) {
                            s.recon.init_color = static_cast<float>(parse_double(v, "init_color"));
                        }});
        k.push_back(real("occupancy_threshold", "density below which cells are skipped; 0 disables",
                         [](Settings &s) -> double & { return s.recon.occupancy_threshold; }));
        k.push_back(integer<int>("occupancy_interval", "steps between occupancy updates",
                                 [](Settings &s) -> int & { return s.recon.occupancy_interval; }));
        k.push_back(integer<int>("eval_every", "steps between validation passes; 0 only at the end",
                                 [](Settings &s) -> int & { return s.recon.eval_every; }));
        k.push_back(integer<uint64_t>("seed", "reconstruction seed", [](Settings &s) -> uint64_t & { return s.recon.seed; }));
        k.push_back(flag("serial", "single-threaded, bitwise reproducible runs",
                         [](Settings &s) -> bool & { return s.recon.serial; }));

        k.push_back(integer<uint64_t>("gradcheck_seed", "seed of the gradient probes",
                                      [](Settings &s) -> uint64_t & { return s.gradcheck.seed; }));
        k.push_back(integer<int>("gradcheck_field_probes", "field-parameter probes",
                                 [](Settings &s) -> int & { return s.gradcheck.field_probes; }));
        k.push_back(integer<int>("gradcheck_focus_probes", "focus-distance probes",
                                 [](Settings &s) -> int & { return s.gradcheck.focus_probes; }));
        k.push_back(integer<int>("gradcheck_aperture_probes", "aperture-radius probes",
                                 [](Settings &s) -> int & { return s.gradcheck.aperture_probes; }));
        k.push_back(integer<int>("gradcheck_aperture_rays", "rays per pixel of aperture probes",
                                 [](Settings &s) -> int & { return s.gradcheck.aperture_rays; }));

        k.push_back(Key{"ablate_rpp", "rays-per-pixel values of ablate-rpp",
                        [](const Settings &s) { return join(s.ablate_rpp); },
                        [](Settings &s, std::string_view v) { s.ablate_rpp = parse_list<int>(v, "ablate_rpp"); }});
        k.push_back(integer<int>("ablate_pixels", "pixels per batch in ablate-rpp",
                                 [](Settings &s) -> int & { return s.ablate_pixels; }));
        k.push_back(integer<int>("ablate_steps", "steps of each ablate-rpp run; 0 uses steps",
                                 [](Settings &s) -> int & { return s.ablate_steps; }));
        k.push_back(Key{"ablate_scales", "initialization scales of ablate-defocus-init",
                        [](const Settings &s) { return join(s.ablate_scales); },
                        [](Settings &s, std::string_view v) {
                            s.ablate_scales = parse_list<double>(v, "ablate_scales");
                        }});
        return k;
    }();
    return keys;
}

inline const Key &find_key(std::string_view name) {
    for (const Key &k : config_keys())
        if (k.name == name)
            return k;
    throw ConfigError(concat("unknown configuration key '", name, "'"));
}

/// Applies one `key = value` assignment.
inline void apply_setting(Settings &s, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw ConfigError(concat("expected key = value, got '", assignment, "'"));
    const std::string key = detail::trim(assignment.substr(0, eq));
    const std::string value = detail::trim(assignment.substr(eq + 1));
    if (key.empty())
        throw ConfigError(concat("missing key in '", assignment, "'"));
    find_key(key).set(s, value);
}

/// Parses `key = value` lines; `#` starts a comment.
inline void apply_config_text(Settings &s, std::string_view text, const std::string &source = "<config>") {
    std::istringstream is{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        if (detail::trim(line).empty())
            continue;
        try {
            apply_setting(s, line);
        } catch (const ConfigError &e) {
            throw ConfigError(concat(source, ":", line_no, ": ", e.what()));
        }
    }
}

inline void apply_config_file(Settings &s, const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is)
        throw ConfigError(concat("cannot open config file ", path.string()));
    std::stringstream ss;
    ss << is.rdbuf();
    apply_config_text(s, ss.str(), path.string());
}

/// Every key with its current value; reading it back reproduces `s`.
inline std::string format_config(const Settings &s) {
    std::ostringstream os;
    os << "# lensfield resolved configuration\n";
    for (const Key &k : config_keys())
        os << k.name << " = " << k.get(s) << "  # " << k.help << '\n';
    return os.str();
}

inline void write_resolved_config(const std::filesystem::path &dir, const Settings &s) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "resolved_config.txt");
    if (!os)
        throw IoError(concat("cannot write ", (dir / "resolved_config.txt").string()));
    os << format_config(s);
}

/// Checks the settings that every command depends on.
inline void validate(const Settings &s) {
    s.dataset.validate();
    s.recon.validate();
    s.gradcheck.validate();
    if (s.scene_resolution < 1)
        throw ConfigError(concat("scene_resolution must be >= 1, got ", s.scene_resolution));
    if (!(s.gt_occupancy >= 0.0))
        throw ConfigError("gt_occupancy must be >= 0");
    if (s.ablate_pixels < 1)
        throw ConfigError("ablate_pixels must be >= 1");
    if (s.ablate_steps < 0)
        throw ConfigError("ablate_steps must be >= 0");
    for (int r : s.ablate_rpp)
        if (r < 1)
            throw ConfigError(concat("ablate_rpp values must be >= 1, got ", r));
    for (double v : s.ablate_scales)
        if (!(v > 0.0))
            throw ConfigError(concat("ablate_scales values must be > 0, got ", v));
}

} // namespace lensfield::cli
