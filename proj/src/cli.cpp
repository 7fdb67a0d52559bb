#include "crreg/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "crreg/eval.hpp"
#include "crreg/pipeline.hpp"

namespace crreg {

namespace {

void emit(const std::string &name, double value) {
    std::printf("%s %.10g\n", name.c_str(), value);
}

Vec3 vec_from(const std::vector<double> &v, const std::string &flag) {
    if (v.size() == 1) {
        return {v[0], v[0], v[0]};
    }
    if (v.size() == 3) {
        return {v[0], v[1], v[2]};
    }
    throw std::invalid_argument(flag + " expects 1 or 3 values");
}

PointUnit unit_from(const std::string &s) {
    if (s == "voxel") {
        return PointUnit::Voxel;
    }
    if (s == "mm") {
        return PointUnit::Millimeter;
    }
    throw std::invalid_argument("--unit must be voxel or mm, got '" + s + "'");
}

} // namespace

int run(int argc, char **argv) {
    CLI::App app{"Non-rigid 3-D registration with the spatially region-weighted correlation ratio"};
    app.require_subcommand(1);

    // register
    auto *reg = app.add_subcommand("register", "Register a moving volume onto a fixed one");
    std::string fixed_path, moving_path, config_path, out_field, out_warped;
    std::optional<int> threads;
    std::optional<std::string> deterministic;
    bool quiet = false;
    reg->add_option("--fixed", fixed_path, "Fixed volume header")->required()->check(CLI::ExistingFile);
    reg->add_option("--moving", moving_path, "Moving volume header")->required()->check(CLI::ExistingFile);
    reg->add_option("--config", config_path, "Configuration file (key = value)")->check(CLI::ExistingFile);
    reg->add_option("--out-field", out_field, "Output displacement field header")->required();
    reg->add_option("--out-warped", out_warped, "Output warped moving volume header");
    reg->add_option("--threads", threads, "Worker threads (overrides the config)");
    reg->add_option("--deterministic", deterministic, "on|off (overrides the config)")
        ->check(CLI::IsMember({"on", "off"}));
    reg->add_flag("--quiet", quiet, "Suppress per-iteration progress");

    // synth
    auto *synth = app.add_subcommand("synth", "Generate a synthetic grid-pattern pair with a known warp");
    std::vector<int> synth_dims{128};
    double amplitude = 15.0;
    double warp_spacing = 32.0;
    int period = 0;
    int thick = 0;
    std::uint64_t seed = 1;
    std::string out_prefix;
    synth->add_option("--dims", synth_dims, "Extent, one or three values")->expected(1, 3);
    synth->add_option("--amplitude", amplitude, "Maximum node displacement, voxels");
    synth->add_option("--warp-spacing", warp_spacing, "Node spacing of the warp, voxels");
    synth->add_option("--period", period, "Plane spacing of the pattern (0: 3/4 of the warp spacing)");
    synth->add_option("--thick", thick, "Plane thickness (0: warp spacing / 8)");
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--out-prefix", out_prefix, "Writes <prefix>_original, _warped and _gt headers")->required();

    // warp
    auto *warp = app.add_subcommand("warp", "Backward-warp a volume with a displacement field");
    std::string warp_in, warp_field, warp_out;
    warp->add_option("--in", warp_in, "Input volume header")->required()->check(CLI::ExistingFile);
    warp->add_option("--field", warp_field, "Displacement field header")->required()->check(CLI::ExistingFile);
    warp->add_option("--out", warp_out, "Output volume header")->required();

    // invert
    auto *inv = app.add_subcommand("invert", "Approximate the inverse of a displacement field");
    std::string inv_field, inv_out;
    double sigma = 1.0;
    int inv_threads = 1;
    inv->add_option("--field", inv_field, "Displacement field header")->required()->check(CLI::ExistingFile);
    inv->add_option("--out", inv_out, "Output field header")->required();
    inv->add_option("--sigma", sigma, "Splatting kernel width, voxels");
    inv->add_option("--threads", inv_threads, "Worker threads");

    // eval-rmse
    auto *ermse = app.add_subcommand("eval-rmse", "RMSE between a field and the ground truth");
    std::string rmse_field, rmse_gt;
    ermse->add_option("--field", rmse_field, "Estimated field header (zero field when omitted)")
        ->check(CLI::ExistingFile);
    ermse->add_option("--gt", rmse_gt, "Ground-truth field header")->required()->check(CLI::ExistingFile);

    // eval-tre
    auto *etre = app.add_subcommand("eval-tre", "Mean target registration error of landmark pairs");
    std::string tre_fixed, tre_moving, tre_field, tre_unit = "voxel";
    std::vector<double> tre_spacing{1.0};
    etre->add_option("--fixed-pts", tre_fixed, "Fixed-image landmarks")->required()->check(CLI::ExistingFile);
    etre->add_option("--moving-pts", tre_moving, "Moving-image landmarks")->required()->check(CLI::ExistingFile);
    etre->add_option("--field", tre_field, "Displacement field header")->required()->check(CLI::ExistingFile);
    etre->add_option("--spacing", tre_spacing, "Voxel spacing in mm, one or three values")->expected(1, 3);
    etre->add_option("--unit", tre_unit, "Unit of the point files: voxel or mm");

    // eval-surface
    auto *esurf = app.add_subcommand("eval-surface", "Hausdorff and mean surface distance of two point sets");
    std::string pts_a, pts_b, surf_field, surf_unit = "voxel";
    int surf_threads = 1;
    esurf->add_option("--pts-a", pts_a, "First point set")->required()->check(CLI::ExistingFile);
    esurf->add_option("--pts-b", pts_b, "Second point set")->required()->check(CLI::ExistingFile);
    esurf->add_option("--field", surf_field, "Field applied to the first set (voxel units)")->check(CLI::ExistingFile);
    esurf->add_option("--unit", surf_unit, "Unit of the point files: voxel or mm");
    esurf->add_option("--threads", surf_threads, "Worker threads");

    // gradcheck
    auto *gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference cost gradients");
    GradcheckConfig gcfg;
    std::string gc_similarity = "srwcr";
    gc->add_option("--seed", gcfg.seed, "Random seed");
    gc->add_option("--dims", gcfg.dims, "Cube edge in voxels");
    gc->add_option("--grid-spacing", gcfg.grid_spacing, "Control grid spacing, voxels");
    gc->add_option("--step", gcfg.step, "Finite-difference step, voxels");
    gc->add_option("--similarity", gc_similarity, "srwcr or raptor")->check(CLI::IsMember({"srwcr", "raptor"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }

    try {
        if (reg->parsed()) {
            RegistrationConfig cfg = config_path.empty() ? RegistrationConfig{} : load_config(config_path);
            if (threads) {
                cfg.threads = *threads;
            }
            if (deterministic) {
                cfg.deterministic = *deterministic == "on";
            }
            const Volume fixed = load_volume(fixed_path);
            const Volume moving = load_volume(moving_path);
            LogSink log;
            if (!quiet) {
                log = [](const std::string &line) { std::cerr << line << '\n'; };
            }
            const RegistrationResult res = register_images(fixed, moving, cfg, log);
            save_field(out_field, res.field);
            if (!out_warped.empty()) {
                save_volume(out_warped, res.warped, read_header(moving_path).element_type);
            }
            emit("levels", static_cast<double>(res.levels.size()));
            for (const LevelTrace &t : res.levels) {
                const std::string p = "level" + std::to_string(t.level) + "_";
                emit(p + "iterations", t.iterations);
                emit(p + "final_cost", t.cost.back());
                emit(p + "seconds", t.seconds);
            }
        } else if (synth->parsed()) {
            SyntheticConfig sc;
            const Vec3 d = vec_from(std::vector<double>(synth_dims.begin(), synth_dims.end()), "--dims");
            sc.dims = {static_cast<int>(d.x), static_cast<int>(d.y), static_cast<int>(d.z)};
            sc.amplitude = amplitude;
            sc.warp_spacing = warp_spacing;
            sc.period = period;
            sc.thick = thick;
            sc.seed = seed;
            const SyntheticPair pair = generate_synthetic(sc);
            save_volume(out_prefix + "_original.hdr", pair.original, ElementType::UInt8);
            save_volume(out_prefix + "_warped.hdr", pair.warped, ElementType::Float32);
            save_field(out_prefix + "_gt.hdr", pair.u_gt);
            emit("initial_rmse", rmse_displacement(DisplacementField(sc.dims), pair.u_gt));
        } else if (warp->parsed()) {
            const VolumeHeader h = read_header(warp_in);
            const Volume v = load_volume(warp_in);
            const DisplacementField f = load_field(warp_field);
            save_volume(warp_out, warp_with_field(v, f), h.element_type);
        } else if (inv->parsed()) {
            save_field(inv_out, invert_field(load_field(inv_field), sigma, inv_threads));
        } else if (ermse->parsed()) {
            const DisplacementField gt = load_field(rmse_gt);
            const DisplacementField f = rmse_field.empty() ? DisplacementField(gt.dims(), gt.spacing()) : load_field(rmse_field);
            emit("rmse", rmse_displacement(f, gt));
        } else if (etre->parsed()) {
            const PointUnit unit = unit_from(tre_unit);
            const Vec3 spacing = vec_from(tre_spacing, "--spacing");
            emit("mtre", mean_tre(load_points(tre_fixed, unit), load_points(tre_moving, unit), load_field(tre_field),
                                  spacing));
        } else if (esurf->parsed()) {
            const PointUnit unit = unit_from(surf_unit);
            PointSet a = load_points(pts_a, unit);
            const PointSet b = load_points(pts_b, unit);
            if (!surf_field.empty()) {
                if (unit != PointUnit::Voxel) {
                    throw std::invalid_argument("--field requires voxel-unit point sets");
                }
                a.points = transform_landmarks(a.points, load_field(surf_field));
            }
            emit("hausdorff", hausdorff(a, b, surf_threads));
            emit("mhd", mhd(a, b, surf_threads));
        } else if (gc->parsed()) {
            gcfg.similarity = gc_similarity == "raptor" ? SimilarityKind::Raptor : SimilarityKind::Srwcr;
            const GradcheckReport rep = gradient_check(gcfg);
            for (const GradcheckCase &c : rep.cases) {
                const std::string p = to_string(c.role) + "_" + to_string(c.kind) + "_";
                emit(p + "max_rel_error", c.max_rel_error);
                emit(p + "max_abs_error", c.max_abs_error);
            }
            emit("max_rel_error", rep.max_rel_error);
            emit("max_abs_error", rep.max_abs_error);
            if (!rep.pass) {
                std::cerr << "gradcheck: analytic gradient disagrees with finite differences\n";
                return 1;
            }
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace crreg
