#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "crreg/engine.hpp"
#include "crreg/volume.hpp"

namespace crreg {

struct SyntheticConfig {
    Dims dims{128, 128, 128};
    double amplitude = 15.0;    ///< bound of the uniform node displacements, voxels
    double warp_spacing = 32.0; ///< node spacing of the ground-truth warp, voxels
    int period = 0;             ///< plane spacing of the grid pattern; 0 derives 3/4 of warp_spacing
    int thick = 0;              ///< plane thickness; 0 derives warp_spacing / 8
    int max_bin = 31;           ///< intensity of the white planes
    std::uint64_t seed = 1;

    void validate() const;
    int effective_period() const;
    int effective_thick() const;
};

struct SyntheticPair {
    Volume original;
    Volume warped;
    DisplacementField u_gt; ///< warped(x) = original(x + u_gt(x))
    std::uint64_t seed = 0;
};

/// Binary grid of planes warped by a random cubic B-spline field. The warp
/// lattice is centred on the volume; nodes inside the image draw i.i.d.
/// uniform [-amplitude, amplitude] displacements, the ring of nodes outside
/// it stays at zero.
SyntheticPair generate_synthetic(const SyntheticConfig &cfg);

/// sqrt(mean ‖f - gt‖²) in voxels.
double rmse_displacement(const DisplacementField &f, const DisplacementField &gt);

enum class PointUnit { Voxel, Millimeter };

struct PointSet {
    std::vector<Vec3> points;
    PointUnit unit = PointUnit::Voxel;
};

/// One `x y z` triple per line; blank lines and '#' comments are skipped.
PointSet load_points(const std::filesystem::path &path, PointUnit unit);
void save_points(const std::filesystem::path &path, const PointSet &pts);

/// Points expressed in voxels of a lattice with the given spacing.
PointSet to_voxels(const PointSet &pts, const Vec3 &spacing);

/// Mean of ‖(p + f(p)) - q‖ over corresponding pairs, in millimetres.
double mean_tre(const PointSet &fixed_pts, const PointSet &moving_pts, const DisplacementField &f,
                const Vec3 &spacing);

/// max of the two directed max-of-min distances.
double hausdorff(const PointSet &xs, const PointSet &ys, int workers = 1);

/// max of the two directed mean-of-min distances.
double mhd(const PointSet &xs, const PointSet &ys, int workers = 1);

// ---------------------------------------------------------------------------
// Finite-difference check of the full cost gradient.

struct GradcheckConfig {
    int dims = 16;
    double grid_spacing = 4.0;
    double step = 0.01;      ///< voxels
    double rel_tol = 1e-3;
    double abs_tol = 1e-6;
    double magnitude_floor = 1e-6;
    double displacement = 1.0; ///< random grid displacements are drawn from [-displacement, displacement]
    std::uint64_t seed = 1;
    SimilarityKind similarity = SimilarityKind::Srwcr;
    double penalty_weight = kPenaltyWeightMonoModal;
};

struct GradcheckCase {
    MovingRole role = MovingRole::Model;
    SpatialWeightKind kind = SpatialWeightKind::CubicBSpline;
    std::size_t checked = 0;
    double max_rel_error = 0.0; ///< over components above the magnitude floor
    double max_abs_error = 0.0; ///< over the remaining components
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckCase> cases;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool pass = false;
};

/// Random smooth image pair and a random grid; compares the analytic gradient
/// with central differences of the total cost on every parameter, for both
/// moving roles and both spatial weight kinds.
GradcheckReport gradient_check(const GradcheckConfig &cfg);

/// Smooth random volume in [0, max_bin]: Gaussian-filtered uniform noise.
Volume random_smooth_volume(Dims dims, double sigma, int max_bin, std::uint64_t seed);

} // namespace crreg
