#include "crreg/gradient.hpp"

#include <stdexcept>

#include "crreg/parallel.hpp"

namespace crreg {

namespace {

struct AxisTables {
    std::vector<AxisSupport> x, y, z;

    explicit AxisTables(const FFDGrid &g) : x(g.axis_table(0)), y(g.axis_table(1)), z(g.axis_table(2)) {}
};

void check_sizes(const FFDGrid &grid, std::size_t a, std::size_t b, std::size_t out) {
    const std::size_t n = grid.image_dims().count();
    if (a != n || b != n || out != n) {
        throw std::invalid_argument("voxel derivatives: arrays do not match the grid's image");
    }
}

// Visits the 64 regions supporting voxel (i,j,k) as body(r, weight).
template <class Body>
void for_each_region(const FFDGrid &grid, const AxisTables &t, int i, int j, int k, bool bspline, Body &&body) {
    const AxisSupport &sx = t.x[static_cast<std::size_t>(i)];
    const AxisSupport &sy = t.y[static_cast<std::size_t>(j)];
    const AxisSupport &sz = t.z[static_cast<std::size_t>(k)];
    for (int n = 0; n < 4; ++n) {
        for (int m = 0; m < 4; ++m) {
            const double wzy = sz.w[static_cast<std::size_t>(n)] * sy.w[static_cast<std::size_t>(m)];
            const std::size_t row = grid.node_index(sx.first, sy.first + m, sz.first + n);
            for (int l = 0; l < 4; ++l) {
                body(row + static_cast<std::size_t>(l), bspline ? wzy * sx.w[static_cast<std::size_t>(l)] : 1.0);
            }
        }
    }
}

} // namespace

void srwcr_voxel_derivatives(MovingRole role, const RegionalStats &stats, std::span<const SoftBin> a_bins,
                             std::span<const SoftBin> b_bins, const FFDGrid &grid, SpatialWeightKind kind,
                             std::span<double> out, int workers, bool deterministic) {
    check_sizes(grid, a_bins.size(), b_bins.size(), out.size());
    if (stats.regions != grid.node_count()) {
        throw std::invalid_argument("voxel derivatives: statistics do not match the grid");
    }
    const Dims d = grid.image_dims();
    if (!(stats.retained_mass > 0.0) || !(stats.normalizer > 0.0)) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double scale = 1.0 / (stats.normalizer * stats.retained_mass);
    const std::size_t nb = stats.cfg.bins();
    const AxisTables tables(grid);
    const bool bspline = kind == SpatialWeightKind::CubicBSpline;

    parallel_for(
        static_cast<std::size_t>(d.z) * static_cast<std::size_t>(d.y), workers,
        [&](std::size_t begin, std::size_t end, int) {
            for (std::size_t row = begin; row < end; ++row) {
                const int j = static_cast<int>(row % static_cast<std::size_t>(d.y));
                const int k = static_cast<int>(row / static_cast<std::size_t>(d.y));
                for (int i = 0; i < d.x; ++i) {
                    const std::size_t idx = d.index(i, j, k);
                    const SoftBin &sa = a_bins[idx];
                    const SoftBin &sb = b_bins[idx];
                    const int a_bin[2] = {sa.lower, sa.lower + 1};
                    const int b_bin[2] = {sb.lower, sb.lower + 1};
                    double acc = 0.0;
                    if (role == MovingRole::Estimated) {
                        const double ha[2] = {sa.w0, sa.w1};
                        const double dhb[2] = {sb.d0, sb.d1};
                        for_each_region(grid, tables, i, j, k, bspline, [&](std::size_t r, double w) {
                            if (!stats.retained[r] || w == 0.0) {
                                return;
                            }
                            const double one_m_cr = 1.0 - stats.cr[r];
                            const double mu = stats.mean[r];
                            double sum = 0.0;
                            for (int p = 0; p < 2; ++p) {
                                if (ha[p] == 0.0) {
                                    continue;
                                }
                                const double mua = stats.cond_mean[r * nb + static_cast<std::size_t>(a_bin[p])];
                                for (int q = 0; q < 2; ++q) {
                                    const double b = b_bin[q];
                                    sum += ha[p] * dhb[q] * (one_m_cr * (b * b - 2.0 * b * mu) + 2.0 * b * mua - b * b);
                                }
                            }
                            acc += w * sum / stats.variance[r];
                        });
                    } else {
                        const double dha[2] = {sa.d0, sa.d1};
                        const double hb[2] = {sb.w0, sb.w1};
                        for_each_region(grid, tables, i, j, k, bspline, [&](std::size_t r, double w) {
                            if (!stats.retained[r] || w == 0.0) {
                                return;
                            }
                            double sum = 0.0;
                            for (int p = 0; p < 2; ++p) {
                                if (dha[p] == 0.0) {
                                    continue;
                                }
                                const double mua = stats.cond_mean[r * nb + static_cast<std::size_t>(a_bin[p])];
                                for (int q = 0; q < 2; ++q) {
                                    sum += dha[p] * hb[q] * (2.0 * b_bin[q] - mua) * mua;
                                }
                            }
                            acc += w * sum / stats.variance[r];
                        });
                    }
                    out[idx] = acc * scale;
                }
            }
        },
        deterministic ? Schedule::Static : Schedule::Dynamic);
}

void raptor_voxel_derivatives(MovingRole role, const PatchStats &stats, std::span<const SoftBin> a_bins,
                              std::span<const double> b, const FFDGrid &grid, std::span<double> out, int workers,
                              bool deterministic) {
    check_sizes(grid, a_bins.size(), b.size(), out.size());
    if (stats.patches != grid.node_count()) {
        throw std::invalid_argument("voxel derivatives: patch statistics do not match the grid");
    }
    const Dims d = grid.image_dims();
    if (stats.used == 0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double scale = 1.0 / static_cast<double>(stats.used);
    const std::size_t nb = stats.cfg.bins();
    const AxisTables tables(grid);

    parallel_for(
        static_cast<std::size_t>(d.z) * static_cast<std::size_t>(d.y), workers,
        [&](std::size_t begin, std::size_t end, int) {
            for (std::size_t row = begin; row < end; ++row) {
                const int j = static_cast<int>(row % static_cast<std::size_t>(d.y));
                const int k = static_cast<int>(row / static_cast<std::size_t>(d.y));
                for (int i = 0; i < d.x; ++i) {
                    const std::size_t idx = d.index(i, j, k);
                    const SoftBin &sa = a_bins[idx];
                    const double bv = b[idx];
                    const auto lo = static_cast<std::size_t>(sa.lower);
                    double acc = 0.0;
                    for_each_region(grid, tables, i, j, k, false, [&](std::size_t r, double) {
                        if (!stats.retained[r]) {
                            return;
                        }
                        const double mu0 = stats.cond_mean[r * nb + lo];
                        const double mu1 = stats.cond_mean[r * nb + lo + 1];
                        const double n = stats.count[r];
                        const double var = stats.variance[r];
                        if (role == MovingRole::Model) {
                            acc += (sa.d0 * (2.0 * mu0 * bv - mu0 * mu0) + sa.d1 * (2.0 * mu1 * bv - mu1 * mu1)) /
                                   (var * n);
                        } else {
                            const double dq = 2.0 * (bv - (sa.w0 * mu0 + sa.w1 * mu1)) / n;
                            const double dvar = 2.0 * (bv - stats.mean[r]) / n;
                            acc += (dq - stats.value[r] * dvar) / var;
                        }
                    });
                    out[idx] = acc * scale;
                }
            }
        },
        deterministic ? Schedule::Static : Schedule::Dynamic);
}

namespace {

Volume voxel_derivative_volume(MovingRole role, const RegionalStats &stats, const Volume &A, const Volume &B,
                               const FFDGrid &grid, SpatialWeightKind kind, const BinConfig &cfg, int workers) {
    require_same_dims(A.dims(), B.dims(), "voxel derivatives");
    require_same_dims(A.dims(), grid.image_dims(), "voxel derivatives (grid)");
    const auto a_bins = soft_bins(A, cfg, BinKernel::Parzen, workers);
    const auto b_bins = soft_bins(B, cfg, BinKernel::Parzen, workers);
    Volume out(A.dims(), A.spacing());
    srwcr_voxel_derivatives(role, stats, a_bins, b_bins, grid, kind, out.data(), workers);
    return out;
}

} // namespace

Volume dD_dB(const RegionalStats &stats, const Volume &A, const Volume &B, const FFDGrid &grid,
             SpatialWeightKind kind, const BinConfig &cfg, int workers) {
    return voxel_derivative_volume(MovingRole::Estimated, stats, A, B, grid, kind, cfg, workers);
}

Volume dD_dA(const RegionalStats &stats, const Volume &A, const Volume &B, const FFDGrid &grid,
             SpatialWeightKind kind, const BinConfig &cfg, int workers) {
    return voxel_derivative_volume(MovingRole::Model, stats, A, B, grid, kind, cfg, workers);
}

ParamGradient assemble_param_gradient(const VoxelDerivTables &tables, const FFDGrid &g,
                                      std::span<const Vec3> penalty_grad, double penalty_weight, int workers) {
    const Dims d = g.image_dims();
    require_same_dims(tables.dims, d, "assemble_param_gradient");
    if (tables.dD_dM.size() != d.count() || tables.grad_M.size() != d.count()) {
        throw std::invalid_argument("assemble_param_gradient: table sizes do not match the image");
    }
    if (!penalty_grad.empty() && penalty_grad.size() != g.node_count()) {
        throw std::invalid_argument("assemble_param_gradient: penalty gradient does not match the grid");
    }
    const NodeSupport support = NodeSupport::build(g, SpatialWeightKind::CubicBSpline);
    const Dims gd = g.node_dims();
    const auto nx = static_cast<std::size_t>(d.x);
    const auto ny = static_cast<std::size_t>(d.y);
    const auto nz = static_cast<std::size_t>(d.z);
    const auto gx = static_cast<std::size_t>(gd.x);
    const auto gy = static_cast<std::size_t>(gd.y);
    const auto gz = static_cast<std::size_t>(gd.z);
    const AxisRuns &rx = support.axes[0];
    const AxisRuns &ry = support.axes[1];
    const AxisRuns &rz = support.axes[2];

    // Contract x: px[(z*ny + y)*gx + i]
    std::vector<Vec3> px(nz * ny * gx);
    parallel_for(nz * ny, workers, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t row = begin; row < end; ++row) {
            const std::size_t base = row * nx;
            for (std::size_t i = 0; i < gx; ++i) {
                const auto &w = rx.weights[i];
                const auto b0 = static_cast<std::size_t>(rx.begin[i]);
                Vec3 acc;
                for (std::size_t l = 0; l < w.size(); ++l) {
                    const std::size_t idx = base + b0 + l;
                    acc += tables.grad_M[idx] * (tables.dD_dM[idx] * w[l]);
                }
                px[row * gx + i] = acc;
            }
        }
    });

    // Contract y: py[(z*gy + j)*gx + i]
    std::vector<Vec3> py(nz * gy * gx);
    parallel_for(nz, workers, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t z = begin; z < end; ++z) {
            for (std::size_t j = 0; j < gy; ++j) {
                const auto &w = ry.weights[j];
                const auto b0 = static_cast<std::size_t>(ry.begin[j]);
                for (std::size_t i = 0; i < gx; ++i) {
                    Vec3 acc;
                    for (std::size_t m = 0; m < w.size(); ++m) {
                        acc += px[(z * ny + b0 + m) * gx + i] * w[m];
                    }
                    py[(z * gy + j) * gx + i] = acc;
                }
            }
        }
    });

    // Contract z into the node array.
    ParamGradient grad(g.node_count());
    parallel_for(gz, workers, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto &w = rz.weights[k];
            const auto b0 = static_cast<std::size_t>(rz.begin[k]);
            for (std::size_t j = 0; j < gy; ++j) {
                for (std::size_t i = 0; i < gx; ++i) {
                    Vec3 acc;
                    for (std::size_t n = 0; n < w.size(); ++n) {
                        acc += py[((b0 + n) * gy + j) * gx + i] * w[n];
                    }
                    const std::size_t s = (k * gy + j) * gx + i;
                    grad[s] = penalty_grad.empty() ? acc : acc + penalty_grad[s] * penalty_weight;
                }
            }
        }
    });
    return grad;
}

} // namespace crreg
