#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crreg/engine.hpp"
#include "crreg/optimizer.hpp"
#include "crreg/volume.hpp"

namespace crreg {

struct RegistrationConfig {
    int levels = 3;
    Vec3 grid_spacing{5.0, 5.0, 5.0}; ///< voxels of each level's own resolution
    BinConfig bins;
    double penalty_weight = kPenaltyWeightMonoModal;
    MovingRole orientation = MovingRole::Model;
    SpatialWeightKind weight_kind = SpatialWeightKind::CubicBSpline;
    SimilarityKind similarity = SimilarityKind::Srwcr;
    int threads = 1;
    bool deterministic = true;
    /// Iteration caps, coarsest level first. Runs with fewer levels use the
    /// trailing (finer) entries.
    std::vector<int> max_iter{200, 200, 120};
    LbfgsConfig lbfgs;
    std::optional<IntensityWindow> intensity_window;

    void validate() const;
    int max_iter_for(int level) const; ///< level 0 is the coarsest
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// malformed values throw std::runtime_error naming the line.
RegistrationConfig parse_config(const std::string &text);
RegistrationConfig load_config(const std::filesystem::path &path);

struct LevelTrace {
    int level = 0; ///< 0 is the coarsest
    Dims dims{};
    Dims nodes{};
    int iterations = 0;
    int evaluations = 0;
    Termination termination = Termination::MaxIterations;
    std::vector<double> cost;
    double seconds = 0.0;
};

struct RegistrationResult {
    DisplacementField field; ///< fixed-grid to moving-grid offsets, finest voxels
    Volume warped;           ///< the input moving image warped by field
    std::vector<LevelTrace> levels;
};

/// Receives one human-readable progress line at a time.
using LogSink = std::function<void(const std::string &)>;

RegistrationResult register_images(const Volume &fixed, const Volume &moving, const RegistrationConfig &cfg,
                                   const LogSink &log = {});

/// out(x) = v(x + f(x)), trilinear.
Volume warp_with_field(const Volume &v, const DisplacementField &f, int workers = 1);

/// p + f(p) with f interpolated trilinearly.
std::vector<Vec3> transform_landmarks(const std::vector<Vec3> &points, const DisplacementField &f);

/// Field on `fine` dims from a field of the next coarser pyramid level:
/// u(x) = 2 * coarse(x / 2).
DisplacementField upsample_field(const DisplacementField &coarse, Dims fine, Vec3 fine_spacing);

} // namespace crreg
