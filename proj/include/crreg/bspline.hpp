#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "crreg/types.hpp"
#include "crreg/volume.hpp"

namespace crreg {

/// Cubic B-spline segment l (0..3) at local fraction t in [0,1).
/// Throws std::out_of_range outside that domain.
double basis_eval(int l, double t);

// Unchecked variants used by inner loops.
inline double basis_value(int l, double t) {
    switch (l) {
    case 0:
        return (1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0;
    case 1:
        return (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0;
    case 2:
        return (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0;
    default:
        return t * t * t / 6.0;
    }
}

/// d/dt of basis_value.
inline double basis_deriv1(int l, double t) {
    switch (l) {
    case 0:
        return -(1.0 - t) * (1.0 - t) / 2.0;
    case 1:
        return (9.0 * t * t - 12.0 * t) / 6.0;
    case 2:
        return (-9.0 * t * t + 6.0 * t + 3.0) / 6.0;
    default:
        return t * t / 2.0;
    }
}

/// d²/dt² of basis_value.
inline double basis_deriv2(int l, double t) {
    switch (l) {
    case 0:
        return 1.0 - t;
    case 1:
        return 3.0 * t - 2.0;
    case 2:
        return -3.0 * t + 1.0;
    default:
        return t;
    }
}

/// Support of one voxel coordinate along one axis: the first of the four
/// supporting nodes and the four basis weights.
struct AxisSupport {
    int first = 0;
    double t = 0.0;
    std::array<double, 4> w{};
};

/// Free-form deformation lattice. Node (i,j,k) sits at voxel coordinate
/// origin + (i*dx, j*dy, k*dz); displacements are in voxels.
class FFDGrid {
  public:
    FFDGrid() = default;

    /// Lattice for an image of extent `image_dims` with node spacing `spacing`
    /// voxels. Origin is -spacing, so the nodes floor(x/d) .. floor(x/d)+3
    /// exist for every in-domain x. Displacements start at zero.
    static FFDGrid covering(Dims image_dims, Vec3 spacing);

    const Dims &image_dims() const { return image_dims_; }
    const Dims &node_dims() const { return node_dims_; }
    const Vec3 &spacing() const { return spacing_; }
    const Vec3 &origin() const { return origin_; }
    std::size_t node_count() const { return node_dims_.count(); }

    std::size_t node_index(int i, int j, int k) const { return node_dims_.index(i, j, k); }
    std::array<int, 3> node_coords(std::size_t s) const;
    Vec3 node_position(int i, int j, int k) const;

    std::span<const Vec3> displacements() const { return phi_; }
    std::span<Vec3> displacements() { return phi_; }
    const Vec3 &phi(int i, int j, int k) const { return phi_[node_index(i, j, k)]; }
    Vec3 &phi(int i, int j, int k) { return phi_[node_index(i, j, k)]; }

    /// Flattened parameters, node-major, component-minor (3 per node).
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);
    std::size_t parameter_count() const { return 3 * node_count(); }

    /// Support along `axis` for continuous voxel coordinate c.
    AxisSupport axis_support(int axis, double c) const;

    /// Per-voxel supports along `axis` for integer coordinates 0..n-1.
    std::vector<AxisSupport> axis_table(int axis) const;

  private:
    Dims image_dims_{};
    Dims node_dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{};
    std::vector<Vec3> phi_;
};

enum class SpatialWeightKind { CubicBSpline, Boxcar };

/// T(x;Φ) = x + Σ_{64 supporting nodes} tensor-product weight * φ.
Vec3 transform_point(const FFDGrid &g, const Vec3 &x);

/// ∂T(x)/∂φ_s: the tensor-product weight of node s at x, 0 off its support.
double transform_jacobian(const FFDGrid &g, const Vec3 &x, std::size_t s);

/// Weight of voxel x in spatial bin r (one bin per control node).
/// CubicBSpline equals transform_jacobian. Boxcar is 1 on the half-open
/// cuboid [c - 2d, c + 2d) around node r, which is exactly the set of
/// voxels that node r supports.
double spatial_weight(SpatialWeightKind kind, const FFDGrid &g, std::size_t r, const Vec3 &x);

/// Dense field u(x) = T(x) - x on the grid's image lattice.
DisplacementField densify(const FFDGrid &g, int workers = 1);

/// result(x) = inner(x) + outer(x + inner(x)); inner applied first under
/// backward warping.
DisplacementField compose(const DisplacementField &outer, const DisplacementField &inner, int workers = 1);

/// Approximate inverse by Gaussian splatting of -f(x) to x + f(x).
/// Voxels that receive no weight copy the nearest (city-block BFS order)
/// weighted voxel. Non-injective input yields a weighted average.
DisplacementField invert_field(const DisplacementField &f, double sigma_splat = 1.0, int workers = 1);

} // namespace crreg
