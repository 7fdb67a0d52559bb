#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "crreg/bspline.hpp"
#include "crreg/histogram.hpp"
#include "crreg/volume.hpp"

namespace crreg {

/// Which image the warped (moving) input plays: the model image A, whose
/// intensity classes condition the measure, or the estimated image B.
enum class MovingRole { Model, Estimated };

struct CostBreakdown {
    double similarity = 0.0; ///< D
    double penalty = 0.0;    ///< C_p
    double weight = 0.0;     ///< w_p
    double total = 0.0;      ///< D + w_p * C_p
};

/// CR(A,B) = 1 - (1/σ²) Σ_a σ²(a) p(a) for a normalised joint table
/// (bins x bins, row a). Throws std::domain_error when σ² is below the floor.
double correlation_ratio(std::span<const double> joint, const BinConfig &cfg);

/// D = Σ_r p(r) (1 - CR_r) over retained regions, divided by the retained
/// mass. Throws std::domain_error when no region is retained.
double srwcr(const RegionalStats &stats);

/// Same quantity through the triple sum Σ_r Σ_a Σ_b (b² - μ_r(a)²)/σ_r² p(a,b,r),
/// read straight from the joint tables.
double srwcr_triple_sum(const RegionalPDF &pdf, const RegionalStats &stats);

/// Convenience: D for a pair of normalised images.
double srwcr(const Volume &A, const Volume &B, const FFDGrid &grid, SpatialWeightKind kind, const BinConfig &cfg);

// ---------------------------------------------------------------------------
// Patch-based baseline with tent-kernel conditional statistics and
// frequency-count variances.

/// Half-open voxel box [lo, hi).
struct Cuboid {
    std::array<int, 3> lo{};
    std::array<int, 3> hi{};

    std::size_t voxels() const {
        return static_cast<std::size_t>(hi[0] - lo[0]) * static_cast<std::size_t>(hi[1] - lo[1]) *
               static_cast<std::size_t>(hi[2] - lo[2]);
    }
};

/// The support boxes of the grid's control nodes, clipped to the image.
std::vector<Cuboid> lattice_patches(const FFDGrid &grid);

/// `count` boxes of edge `size` placed uniformly at random inside `dims`.
std::vector<Cuboid> random_patches(Dims dims, int size, std::size_t count, std::uint64_t seed);

/// Mean over non-degenerate patches of
///   (1/σ_r²) (Σ_x B²/N_r - Σ_a p_r(a) μ_r(a)²)
/// with p_r(a) = Σ_x h(a - A(x)) / N_r and μ_r(a) the tent-weighted mean
/// of B. Patches whose variance falls below the floor are skipped.
double raptor(const Volume &A, const Volume &B, std::span<const Cuboid> patches, const BinConfig &cfg);

/// Per-patch statistics for lattice patches (one per control node).
struct PatchStats {
    BinConfig cfg;
    std::size_t patches = 0;
    std::vector<double> count;      ///< N_r
    std::vector<double> mean;       ///< mean of B
    std::vector<double> variance;   ///< σ_r² from raw frequencies
    std::vector<double> value;      ///< per-patch term
    std::vector<double> cond_mean;  ///< patches x bins, μ_r(a)
    std::vector<std::uint8_t> retained;
    std::size_t used = 0;           ///< N_p

    double mu_a(std::size_t r, std::size_t a) const { return cond_mean[r * cfg.bins() + a]; }
};

/// a_bins must be tent-kernel bins of A; b holds raw B intensities.
PatchStats build_patch_stats(std::span<const SoftBin> a_bins, std::span<const double> b, const FFDGrid &grid,
                             const NodeSupport &boxcar_support, const BinConfig &cfg, int workers = 1,
                             bool deterministic = true);

/// Value of the baseline from lattice patch statistics.
double raptor_value(const PatchStats &stats);

// ---------------------------------------------------------------------------
// Regularisation

struct BendingEnergy {
    double value = 0.0;
    std::vector<Vec3> gradient; ///< ∂C_p/∂φ_s per node
};

/// Mean over the image voxels of Σ_components (T_xx² + T_yy² + T_zz²
/// + 2T_xy² + 2T_xz² + 2T_yz²), with positions and displacements both in
/// control-lattice coordinates u = x / spacing. Evaluated exactly
/// through per-axis Gram matrices of the B-spline basis.
BendingEnergy bending_energy(const FFDGrid &g);

/// C = D + w_p * C_p with C_p the bending energy of g.
CostBreakdown total_cost(double similarity, const FFDGrid &g, double penalty_weight);

inline constexpr double kPenaltyWeightMonoModal = 0.1;
inline constexpr double kPenaltyWeightMultiModal = 30.0;

} // namespace crreg
