// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

// lensfield: fabricate defocused captures, reconstruct voxel fields through a
// thin-lens camera, and run the gradient check and ablation studies.

#include "lensfield/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using namespace lensfield;
using namespace lensfield::cli;

struct Options {
    std::string config;
    std::string out = "lensfield_out";
    std::optional<uint64_t> seed;
    bool serial = false;
    std::optional<int> rpp;
    bool no_opt_aperture = false;
    bool no_opt_focus = false;
    std::vector<std::string> sets;
    std::string data;
    std::string checkpoint;
    std::string render_dir;
    std::string gt_dir;
    std::string csv;
    std::string png;
};

void add_common(CLI::App *cmd, Options &o) {
    cmd->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", o.seed, "seed for data, reconstruction and probes");
    cmd->add_flag("--serial", o.serial, "single-threaded, bitwise reproducible run");
    cmd->add_option("--rpp", o.rpp, "aperture rays per training pixel")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-opt-aperture", o.no_opt_aperture, "keep the aperture radius fixed");
    cmd->add_flag("--no-opt-focus", o.no_opt_focus, "keep the focus distance fixed");
    cmd->add_option("--set", o.sets, "override one key, e.g. --set steps=200")->take_all();
}

Settings resolve(const Options &o) {
    Settings s;
    if (!o.config.empty())
        apply_config_file(s, o.config);
    for (const std::string &kv : o.sets) {
        try {
            apply_setting(s, kv);
        } catch (const ConfigError &e) {
            throw ConfigError(concat("--set ", kv, ": ", e.what()));
        }
    }
    if (o.seed) {
        s.recon.seed = *o.seed;
        s.dataset.seed = *o.seed;
        s.gradcheck.seed = *o.seed;
    }
    if (o.serial)
        s.recon.serial = true;
    if (o.rpp)
        s.recon.rays_per_pixel = *o.rpp;
    if (o.no_opt_aperture)
        s.recon.optimize_aperture = false;
    if (o.no_opt_focus)
        s.recon.optimize_focus = false;
    validate(s);
    return s;
}

void print(const std::string &line) { std::cout << line << std::endl; }

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"lensfield: thin-lens voxel radiance field reconstruction"};
    app.require_subcommand(1);
    Options o;

    auto *fab = app.add_subcommand("fabricate", "render a defocused capture of a synthetic scene");
    add_common(fab, o);

    auto *rec = app.add_subcommand("reconstruct", "reconstruct a voxel field from a capture");
    add_common(rec, o);
    rec->add_option("--data", o.data, "dataset directory or manifest")->required();

    auto *ren = app.add_subcommand("render", "render a checkpoint at the cameras of a dataset");
    add_common(ren, o);
    ren->add_option("--checkpoint", o.checkpoint, "field checkpoint (.lfvf)")->required()->check(CLI::ExistingFile);
    ren->add_option("--data", o.data, "dataset directory or manifest")->required();

    auto *eva = app.add_subcommand("evaluate", "PSNR and SSIM of rendered PNGs against ground truth");
    add_common(eva, o);
    eva->add_option("--render", o.render_dir, "directory of rendered PNGs")->required();
    eva->add_option("--gt", o.gt_dir, "directory of ground-truth PNGs with the same relative paths")->required();

    auto *grad = app.add_subcommand("gradcheck", "analytic against finite-difference gradients");
    add_common(grad, o);

    auto *rpp = app.add_subcommand("ablate-rpp", "reconstruction quality and runtime against rays per pixel");
    add_common(rpp, o);
    rpp->add_option("--data", o.data, "dataset directory or manifest")->required();

    auto *init = app.add_subcommand("ablate-defocus-init", "reconstructions from perturbed aperture and focus");
    add_common(init, o);
    init->add_option("--data", o.data, "dataset directory or manifest")->required();

    auto *plot = app.add_subcommand("plot", "redraw the chart of a CSV written by another command");
    plot->add_option("csv", o.csv, "CSV file")->required()->check(CLI::ExistingFile);
    plot->add_option("--png", o.png, "output PNG (default: next to the CSV)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (plot->parsed()) {
            const std::filesystem::path png =
                o.png.empty() ? std::filesystem::path(o.csv).replace_extension(".png") : std::filesystem::path(o.png);
            plot_csv(o.csv, png);
            print("wrote " + png.string());
            return 0;
        }
        const Settings s = resolve(o);
        const std::filesystem::path out = o.out;
        if (fab->parsed()) {
            fabricate(s, out, print);
        } else if (rec->parsed()) {
            const ReconResult r = reconstruct(s, o.data, out, print);
            print(concat("validation PSNR ", fixed(r.val.mean_psnr), " dB, SSIM ", fixed(r.val.mean_ssim, 4),
                         "; a_R ", fixed(r.defocus.aperture_radius, 4), ", z_f ",
                         fixed(r.defocus.focus_distance, 4)));
        } else if (ren->parsed()) {
            render_checkpoint(s, o.checkpoint, o.data, out, print);
        } else if (eva->parsed()) {
            write_resolved_config(out, s);
            const MetricReport m = evaluate(o.render_dir, o.gt_dir, out);
            print(concat(m.files.size(), " images: mean PSNR ", fixed(m.mean_psnr), " dB, mean SSIM ",
                         fixed(m.mean_ssim, 4)));
        } else if (grad->parsed()) {
            gradcheck(s, out, print);
        } else if (rpp->parsed()) {
            ablate_rpp(s, o.data, out, print);
        } else if (init->parsed()) {
            const auto cells = ablate_defocus_init(s, o.data, out, print);
            std::cout << format_init_table(cells);
        }
        return 0;
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError &e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
