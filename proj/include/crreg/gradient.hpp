#pragma once

#include <span>
#include <vector>

#include "crreg/bspline.hpp"
#include "crreg/histogram.hpp"
#include "crreg/metric.hpp"
#include "crreg/volume.hpp"

namespace crreg {

/// Per-voxel factors of the chain rule: ∂D/∂M(y) and ∇M at y = T(x).
struct VoxelDerivTables {
    Dims dims{};
    std::vector<double> dD_dM;
    std::vector<Vec3> grad_M;
};

/// ∂C/∂φ_s per control node.
using ParamGradient = std::vector<Vec3>;

/// ∂D/∂M(y) for every voxel, written to `out`. With role Estimated M is B,
/// otherwise M is A. Regions that are not retained contribute nothing.
void srwcr_voxel_derivatives(MovingRole role, const RegionalStats &stats, std::span<const SoftBin> a_bins,
                             std::span<const SoftBin> b_bins, const FFDGrid &grid, SpatialWeightKind kind,
                             std::span<double> out, int workers = 1, bool deterministic = true);

/// Same for the patch baseline on lattice patches; a_bins are tent bins of A
/// and b holds raw B intensities.
void raptor_voxel_derivatives(MovingRole role, const PatchStats &stats, std::span<const SoftBin> a_bins,
                              std::span<const double> b, const FFDGrid &grid, std::span<double> out,
                              int workers = 1, bool deterministic = true);

/// Volume-level conveniences (B moving, resp. A moving).
Volume dD_dB(const RegionalStats &stats, const Volume &A, const Volume &B, const FFDGrid &grid,
             SpatialWeightKind kind, const BinConfig &cfg, int workers = 1);
Volume dD_dA(const RegionalStats &stats, const Volume &A, const Volume &B, const FFDGrid &grid,
             SpatialWeightKind kind, const BinConfig &cfg, int workers = 1);

/// ∂D/∂φ_s = Σ_x ∂D/∂M(y) ∇M(y) β_s(x), plus penalty_weight * penalty_grad
/// when penalty_grad is non-empty. The sum is contracted one axis at a time,
/// each output entry owned by one worker.
ParamGradient assemble_param_gradient(const VoxelDerivTables &tables, const FFDGrid &g,
                                      std::span<const Vec3> penalty_grad = {}, double penalty_weight = 0.0,
                                      int workers = 1);

} // namespace crreg
