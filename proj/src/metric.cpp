#include "crreg/metric.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "crreg/parallel.hpp"

namespace crreg {

double correlation_ratio(std::span<const double> joint, const BinConfig &cfg) {
    const std::size_t nb = cfg.bins();
    if (joint.size() != nb * nb) {
        throw std::invalid_argument("correlation_ratio: joint table must have bins x bins entries");
    }
    std::vector<double> p_b(nb, 0.0);
    double within = 0.0;
    for (std::size_t a = 0; a < nb; ++a) {
        double pa = 0.0;
        double s1 = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const double p = joint[a * nb + b];
            pa += p;
            s1 += static_cast<double>(b) * p;
            p_b[b] += p;
        }
        const double mu_a = pa >= kMassFloor ? s1 / pa : 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const double dev = static_cast<double>(b) - mu_a;
            within += dev * dev * joint[a * nb + b];
        }
    }
    double mu = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        mu += static_cast<double>(b) * p_b[b];
    }
    double var = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        var += (static_cast<double>(b) - mu) * (static_cast<double>(b) - mu) * p_b[b];
    }
    if (var < kVarianceFloor) {
        throw std::domain_error("correlation_ratio: estimated image is constant (variance " + std::to_string(var) + ")");
    }
    return 1.0 - within / var;
}

double srwcr(const RegionalStats &stats) {
    if (stats.retained_mass <= 0.0) {
        throw std::domain_error("srwcr: no spatial bin has enough mass and variance");
    }
    double d = 0.0;
    for (std::size_t r = 0; r < stats.regions; ++r) {
        if (stats.retained[r]) {
            d += stats.mass[r] * (1.0 - stats.cr[r]);
        }
    }
    return d / stats.retained_mass;
}

double srwcr_triple_sum(const RegionalPDF &pdf, const RegionalStats &stats) {
    if (stats.retained_mass <= 0.0) {
        throw std::domain_error("srwcr: no spatial bin has enough mass and variance");
    }
    const std::size_t nb = pdf.cfg.bins();
    double d = 0.0;
    for (std::size_t r = 0; r < pdf.regions; ++r) {
        if (!stats.retained[r]) {
            continue;
        }
        const double inv_var = 1.0 / stats.variance[r];
        for (std::size_t a = 0; a < nb; ++a) {
            const double mu_a = stats.mu_a(r, a);
            for (std::size_t b = 0; b < nb; ++b) {
                const double bb = static_cast<double>(b);
                d += (bb * bb - mu_a * mu_a) * inv_var * pdf.joint_prob(r, a, b);
            }
        }
    }
    return d / stats.retained_mass;
}

double srwcr(const Volume &A, const Volume &B, const FFDGrid &grid, SpatialWeightKind kind, const BinConfig &cfg) {
    return srwcr(regional_stats(build_regional_pdf(A, B, grid, kind, cfg)));
}

// ---------------------------------------------------------------------------

std::vector<Cuboid> lattice_patches(const FFDGrid &grid) {
    std::vector<Cuboid> out;
    const Dims d = grid.image_dims();
    const Dims g = grid.node_dims();
    for (int k = 0; k < g.z; ++k) {
        for (int j = 0; j < g.y; ++j) {
            for (int i = 0; i < g.x; ++i) {
                const Vec3 c = grid.node_position(i, j, k);
                Cuboid box;
                bool empty = false;
                for (int axis = 0; axis < 3; ++axis) {
                    const double half = 2.0 * grid.spacing()[axis];
                    const int lo = std::max(0, static_cast<int>(std::ceil(c[axis] - half)));
                    const int hi = std::min(d[axis], static_cast<int>(std::ceil(c[axis] + half)));
                    box.lo[static_cast<std::size_t>(axis)] = lo;
                    box.hi[static_cast<std::size_t>(axis)] = hi;
                    empty = empty || lo >= hi;
                }
                if (!empty) {
                    out.push_back(box);
                }
            }
        }
    }
    return out;
}

std::vector<Cuboid> random_patches(Dims dims, int size, std::size_t count, std::uint64_t seed) {
    if (size < 1 || size > dims.x || size > dims.y || size > dims.z) {
        throw std::invalid_argument("random_patches: patch size must fit inside the image");
    }
    std::mt19937_64 rng(seed);
    std::vector<Cuboid> out(count);
    for (auto &box : out) {
        for (int axis = 0; axis < 3; ++axis) {
            std::uniform_int_distribution<int> pick(0, dims[axis] - size);
            const int lo = pick(rng);
            box.lo[static_cast<std::size_t>(axis)] = lo;
            box.hi[static_cast<std::size_t>(axis)] = lo + size;
        }
    }
    return out;
}

double raptor(const Volume &A, const Volume &B, std::span<const Cuboid> patches, const BinConfig &cfg) {
    cfg.validate();
    require_same_dims(A.dims(), B.dims(), "raptor");
    const Dims d = A.dims();
    const std::size_t nb = cfg.bins();
    std::vector<double> s0(nb);
    std::vector<double> s1(nb);
    double total = 0.0;
    std::size_t used = 0;
    for (const Cuboid &box : patches) {
        for (int axis = 0; axis < 3; ++axis) {
            if (box.lo[static_cast<std::size_t>(axis)] < 0 || box.hi[static_cast<std::size_t>(axis)] > d[axis] ||
                box.lo[static_cast<std::size_t>(axis)] >= box.hi[static_cast<std::size_t>(axis)]) {
                throw std::invalid_argument("raptor: patch outside the image domain");
            }
        }
        std::fill(s0.begin(), s0.end(), 0.0);
        std::fill(s1.begin(), s1.end(), 0.0);
        double sum_b = 0.0;
        const auto n = static_cast<double>(box.voxels());
        for (int k = box.lo[2]; k < box.hi[2]; ++k) {
            for (int j = box.lo[1]; j < box.hi[1]; ++j) {
                for (int i = box.lo[0]; i < box.hi[0]; ++i) {
                    const SoftBin s = soft_bin(A(i, j, k), cfg, BinKernel::Tent);
                    const double b = B(i, j, k);
                    const auto lo = static_cast<std::size_t>(s.lower);
                    s0[lo] += s.w0;
                    s0[lo + 1] += s.w1;
                    s1[lo] += s.w0 * b;
                    s1[lo + 1] += s.w1 * b;
                    sum_b += b;
                }
            }
        }
        const double mean = sum_b / n;
        // Second pass: centred frequency variance and within-class dispersion.
        double var = 0.0;
        double within = 0.0;
        for (int k = box.lo[2]; k < box.hi[2]; ++k) {
            for (int j = box.lo[1]; j < box.hi[1]; ++j) {
                for (int i = box.lo[0]; i < box.hi[0]; ++i) {
                    const SoftBin s = soft_bin(A(i, j, k), cfg, BinKernel::Tent);
                    const double b = B(i, j, k);
                    const auto lo = static_cast<std::size_t>(s.lower);
                    var += (b - mean) * (b - mean);
                    const double mu0 = s0[lo] > 0.0 ? s1[lo] / s0[lo] : 0.0;
                    const double mu1 = s0[lo + 1] > 0.0 ? s1[lo + 1] / s0[lo + 1] : 0.0;
                    within += s.w0 * (b - mu0) * (b - mu0) + s.w1 * (b - mu1) * (b - mu1);
                }
            }
        }
        var /= n;
        if (var < kVarianceFloor) {
            continue;
        }
        total += within / n / var;
        ++used;
    }
    if (used == 0) {
        throw std::domain_error("raptor: every patch is degenerate");
    }
    return total / static_cast<double>(used);
}

PatchStats build_patch_stats(std::span<const SoftBin> a_bins, std::span<const double> b, const FFDGrid &grid,
                             const NodeSupport &support, const BinConfig &cfg, int workers, bool deterministic) {
    const Dims d = grid.image_dims();
    if (a_bins.size() != d.count() || b.size() != d.count()) {
        throw std::invalid_argument("build_patch_stats: inputs do not match the grid's image");
    }
    const std::size_t nb = cfg.bins();
    PatchStats st;
    st.cfg = cfg;
    st.patches = grid.node_count();
    st.count.assign(st.patches, 0.0);
    st.mean.assign(st.patches, 0.0);
    st.variance.assign(st.patches, 0.0);
    st.value.assign(st.patches, 0.0);
    st.cond_mean.assign(st.patches * nb, 0.0);
    st.retained.assign(st.patches, 0);

    parallel_for(
        st.patches, workers,
        [&](std::size_t begin, std::size_t end, int) {
            std::vector<double> s0(nb);
            std::vector<double> s1(nb);
            for (std::size_t r = begin; r < end; ++r) {
                const auto node = grid.node_coords(r);
                const auto &wx = support.axes[0].weights[static_cast<std::size_t>(node[0])];
                const auto &wy = support.axes[1].weights[static_cast<std::size_t>(node[1])];
                const auto &wz = support.axes[2].weights[static_cast<std::size_t>(node[2])];
                if (wx.empty() || wy.empty() || wz.empty()) {
                    continue;
                }
                const int bx = support.axes[0].begin[static_cast<std::size_t>(node[0])];
                const int by = support.axes[1].begin[static_cast<std::size_t>(node[1])];
                const int bz = support.axes[2].begin[static_cast<std::size_t>(node[2])];
                std::fill(s0.begin(), s0.end(), 0.0);
                std::fill(s1.begin(), s1.end(), 0.0);
                double sum_b = 0.0;
                double sum_b2 = 0.0;
                for (std::size_t n = 0; n < wz.size(); ++n) {
                    for (std::size_t m = 0; m < wy.size(); ++m) {
                        const std::size_t row = d.index(bx, by + static_cast<int>(m), bz + static_cast<int>(n));
                        for (std::size_t l = 0; l < wx.size(); ++l) {
                            const SoftBin &s = a_bins[row + l];
                            const double v = b[row + l];
                            const auto lo = static_cast<std::size_t>(s.lower);
                            s0[lo] += s.w0;
                            s0[lo + 1] += s.w1;
                            s1[lo] += s.w0 * v;
                            s1[lo + 1] += s.w1 * v;
                            sum_b += v;
                            sum_b2 += v * v;
                        }
                    }
                }
                const double cnt = static_cast<double>(wx.size() * wy.size() * wz.size());
                const double mean = sum_b / cnt;
                const double var = sum_b2 / cnt - mean * mean;
                double explained = 0.0;
                for (std::size_t a = 0; a < nb; ++a) {
                    if (s0[a] > 0.0) {
                        const double mu = s1[a] / s0[a];
                        st.cond_mean[r * nb + a] = mu;
                        explained += s1[a] * mu;
                    }
                }
                st.count[r] = cnt;
                st.mean[r] = mean;
                st.variance[r] = var;
                if (var >= kVarianceFloor) {
                    st.retained[r] = 1;
                    st.value[r] = (sum_b2 - explained) / cnt / var;
                }
            }
        },
        deterministic ? Schedule::Static : Schedule::Dynamic);

    st.used = static_cast<std::size_t>(std::count(st.retained.begin(), st.retained.end(), std::uint8_t{1}));
    return st;
}

double raptor_value(const PatchStats &stats) {
    if (stats.used == 0) {
        throw std::domain_error("raptor: every patch is degenerate");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < stats.patches; ++r) {
        if (stats.retained[r]) {
            total += stats.value[r];
        }
    }
    return total / static_cast<double>(stats.used);
}

// ---------------------------------------------------------------------------

namespace {

// Dense per-axis Gram matrix Σ_c f_i(c) f_j(c) over the image coordinates,
// where f is the basis (order 0), its first or second derivative.
std::vector<double> axis_gram(const FFDGrid &g, int axis, int order) {
    const auto n = static_cast<std::size_t>(g.node_dims()[axis]);
    const double h = g.spacing()[axis];
    const double scale = order == 0 ? 1.0 : (order == 1 ? 1.0 / h : 1.0 / (h * h));
    std::vector<double> k(n * n, 0.0);
    for (const AxisSupport &s : g.axis_table(axis)) {
        double f[4];
        for (int l = 0; l < 4; ++l) {
            f[l] = scale * (order == 0 ? basis_value(l, s.t) : (order == 1 ? basis_deriv1(l, s.t) : basis_deriv2(l, s.t)));
        }
        for (int l = 0; l < 4; ++l) {
            for (int m = 0; m < 4; ++m) {
                k[static_cast<std::size_t>(s.first + l) * n + static_cast<std::size_t>(s.first + m)] += f[l] * f[m];
            }
        }
    }
    return k;
}

// out = (K applied along `axis`) in, on a node-lattice array.
void apply_axis(const std::vector<double> &k, int axis, const Dims &nd, const std::vector<double> &in,
                std::vector<double> &out) {
    const auto n = static_cast<std::size_t>(nd[axis]);
    out.assign(in.size(), 0.0);
    for (int kz = 0; kz < nd.z; ++kz) {
        for (int jy = 0; jy < nd.y; ++jy) {
            for (int ix = 0; ix < nd.x; ++ix) {
                int pos[3] = {ix, jy, kz};
                const auto row = static_cast<std::size_t>(pos[axis]);
                const int lo = std::max(0, pos[axis] - 3);
                const int hi = std::min(static_cast<int>(n) - 1, pos[axis] + 3);
                double acc = 0.0;
                for (int q = lo; q <= hi; ++q) {
                    int src[3] = {ix, jy, kz};
                    src[axis] = q;
                    acc += k[row * n + static_cast<std::size_t>(q)] * in[nd.index(src[0], src[1], src[2])];
                }
                out[nd.index(ix, jy, kz)] = acc;
            }
        }
    }
}

} // namespace

BendingEnergy bending_energy(const FFDGrid &g) {
    const Dims nd = g.node_dims();
    std::array<std::array<std::vector<double>, 3>, 3> gram; // [axis][order]
    for (int axis = 0; axis < 3; ++axis) {
        for (int order = 0; order < 3; ++order) {
            gram[static_cast<std::size_t>(axis)][static_cast<std::size_t>(order)] = axis_gram(g, axis, order);
        }
    }
    // (order along x, y, z) and multiplicity of each second-derivative term.
    struct Term {
        int ox, oy, oz;
        double coef;
    };
    constexpr Term terms[6] = {{2, 0, 0, 1.0}, {0, 2, 0, 1.0}, {0, 0, 2, 1.0},
                               {1, 1, 0, 2.0}, {1, 0, 1, 2.0}, {0, 1, 1, 2.0}};

    const std::size_t nodes = g.node_count();
    const double inv_vox = 1.0 / static_cast<double>(g.image_dims().count());
    BendingEnergy be;
    be.gradient.assign(nodes, Vec3{});
    std::vector<double> phi(nodes), y(nodes), t1, t2, t3;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t s = 0; s < nodes; ++s) {
            phi[s] = g.displacements()[s][c];
        }
        std::fill(y.begin(), y.end(), 0.0);
        for (const Term &t : terms) {
            // control-lattice units for positions and displacements: d/du = delta * d/dx, phi / delta_c
            const double lattice = std::pow(g.spacing().x, 2 * t.ox) * std::pow(g.spacing().y, 2 * t.oy) *
                                   std::pow(g.spacing().z, 2 * t.oz) / (g.spacing()[c] * g.spacing()[c]);
            apply_axis(gram[2][static_cast<std::size_t>(t.oz)], 2, nd, phi, t1);
            apply_axis(gram[1][static_cast<std::size_t>(t.oy)], 1, nd, t1, t2);
            apply_axis(gram[0][static_cast<std::size_t>(t.ox)], 0, nd, t2, t3);
            for (std::size_t s = 0; s < nodes; ++s) {
                y[s] += t.coef * lattice * t3[s];
            }
        }
        for (std::size_t s = 0; s < nodes; ++s) {
            be.value += phi[s] * y[s] * inv_vox;
            be.gradient[s][c] = 2.0 * y[s] * inv_vox;
        }
    }
    return be;
}

CostBreakdown total_cost(double similarity, const FFDGrid &g, double penalty_weight) {
    if (penalty_weight < 0.0) {
        throw std::invalid_argument("total_cost: penalty weight must be >= 0");
    }
    CostBreakdown c;
    c.similarity = similarity;
    c.weight = penalty_weight;
    c.penalty = bending_energy(g).value;
    c.total = similarity + penalty_weight * c.penalty;
    return c;
}

} // namespace crreg
