#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crreg/bspline.hpp"
#include "crreg/volume.hpp"

namespace crreg {

/// Intensity binning: bins 0..max_bin (L_ε) inclusive.
struct BinConfig {
    int max_bin = 31;

    std::size_t bins() const { return static_cast<std::size_t>(max_bin) + 1; }
    void validate() const;
};

/// Regions lighter than this (in p(r)) or with a variance of the estimated
/// image below the variance floor are left out of the measure and its gradient.
inline constexpr double kMassFloor = 1e-12;
inline constexpr double kVarianceFloor = 1e-8;

/// Second-order piecewise-polynomial Parzen window; zero for |t| >= 1.
double parzen(double t);

/// dh/dt of the Parzen window, with the value 0 at t = 0 and |t| = 1.
double parzen_deriv(double t);

/// Linear (tent) window max(0, 1 - |t|) and its derivative (0 at the kinks).
double tent(double t);
double tent_deriv(double t);

enum class BinKernel { Parzen, Tent };

/// Soft assignment of one intensity v to the two bins `lower` and `lower+1`.
/// w = h(bin - v), d = h'(bin - v).
struct SoftBin {
    int lower = 0;
    double w0 = 0.0;
    double w1 = 0.0;
    double d0 = 0.0;
    double d1 = 0.0;
};

SoftBin soft_bin(double v, const BinConfig &cfg, BinKernel kernel = BinKernel::Parzen);

/// Soft bins for every voxel. Throws if a value lies outside [0, max_bin]
/// by more than a rounding tolerance.
std::vector<SoftBin> soft_bins(const Volume &v, const BinConfig &cfg, BinKernel kernel = BinKernel::Parzen,
                               int workers = 1);

/// Per-node lists of the voxels a node supports, one list per axis. Along an
/// axis the supported coordinates of node i form the contiguous run
/// [begin, begin + weights.size()).
struct AxisRuns {
    std::vector<int> begin;
    std::vector<std::vector<double>> weights;
};

struct NodeSupport {
    std::array<AxisRuns, 3> axes;

    static NodeSupport build(const FFDGrid &g, SpatialWeightKind kind);
};

/// Joint intensity tables per spatial bin (one bin per control node).
struct RegionalPDF {
    BinConfig cfg;
    std::size_t regions = 0;
    std::vector<double> joint;       ///< regions x bins x bins, p_r(a,b), row a
    std::vector<double> region_mass; ///< p(r)
    std::vector<double> raw_mass;    ///< unnormalised region mass
    double normalizer = 0.0;         ///< Z

    std::span<const double> table(std::size_t r) const {
        const std::size_t n = cfg.bins() * cfg.bins();
        return std::span<const double>(joint).subspan(r * n, n);
    }
    /// p(a,b,r) = p(r) * p_r(a,b)
    double joint_prob(std::size_t r, std::size_t a, std::size_t b) const {
        return region_mass[r] * joint[(r * cfg.bins() + a) * cfg.bins() + b];
    }
};

/// Per-region statistics of the estimated image B given the model image A.
struct RegionalStats {
    BinConfig cfg;
    std::size_t regions = 0;
    std::vector<double> mass;          ///< p(r)
    std::vector<std::uint8_t> retained;
    std::vector<double> variance;      ///< σ_r²
    std::vector<double> mean;          ///< μ_r
    std::vector<double> cr;            ///< CR(A,B|r)
    std::vector<double> cond_mean;     ///< regions x bins, μ_r(a)
    std::vector<double> cond_mass;     ///< regions x bins, p_r(a)
    double normalizer = 0.0;           ///< Z
    double retained_mass = 0.0;        ///< Σ over retained r of p(r)

    double mu_a(std::size_t r, std::size_t a) const { return cond_mean[r * cfg.bins() + a]; }
    double p_a(std::size_t r, std::size_t a) const { return cond_mass[r * cfg.bins() + a]; }
    std::size_t retained_count() const;
};

/// p(a,b,r) = (1/Z) Σ_x w(r,x) h(a - A(x)) h(b - B(x)).
RegionalPDF build_regional_pdf(const Volume &A, const Volume &B, const FFDGrid &grid, SpatialWeightKind kind,
                               const BinConfig &cfg, int workers = 1);

RegionalStats regional_stats(const RegionalPDF &pdf);

/// Builds the same statistics as regional_stats(build_regional_pdf(...))
/// without keeping the joint tables; one region is owned by one worker.
RegionalStats build_regional_stats(std::span<const SoftBin> a_bins, std::span<const SoftBin> b_bins,
                                   const FFDGrid &grid, const NodeSupport &support, const BinConfig &cfg,
                                   int workers = 1, bool deterministic = true);

/// Writes the unnormalised table of region r (bins x bins, row a) into
/// `table` and returns the region's raw mass.
double accumulate_region(std::size_t r, std::span<const SoftBin> a_bins, std::span<const SoftBin> b_bins,
                         const FFDGrid &grid, const NodeSupport &support, std::size_t bins, std::span<double> table);

} // namespace crreg
