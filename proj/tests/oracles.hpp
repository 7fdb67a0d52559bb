// Brute-force reference implementations used to check the library. They
// follow the defining formulas literally and share no code with src/ beyond
// the data containers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "crreg/bspline.hpp"
#include "crreg/histogram.hpp"
#include "crreg/metric.hpp"
#include "crreg/volume.hpp"

namespace oracle {

using crreg::Dims;
using crreg::FFDGrid;
using crreg::Vec3;
using crreg::Volume;

inline double parzen(double t) {
    const double a = std::abs(t);
    if (a < 0.5) {
        return -1.8 * a * a - 0.1 * a + 1.0;
    }
    if (a < 1.0) {
        return 1.8 * a * a - 3.7 * a + 1.9;
    }
    return 0.0;
}

inline double cubic_bspline(double u) {
    const double a = std::abs(u);
    if (a < 1.0) {
        return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
    }
    if (a < 2.0) {
        return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
    }
    return 0.0;
}

inline double cubic_bspline_d1(double u) {
    const double a = std::abs(u);
    const double s = u < 0.0 ? -1.0 : 1.0;
    if (a < 1.0) {
        return s * (-2.0 * a + 1.5 * a * a);
    }
    if (a < 2.0) {
        return s * (-0.5 * (2.0 - a) * (2.0 - a));
    }
    return 0.0;
}

inline double cubic_bspline_d2(double u) {
    const double a = std::abs(u);
    if (a < 1.0) {
        return -2.0 + 3.0 * a;
    }
    if (a < 2.0) {
        return 2.0 - a;
    }
    return 0.0;
}

/// Node weight at x as a product of centred cubic B-splines.
inline double node_weight(const FFDGrid &g, std::size_t s, const Vec3 &x) {
    const auto n = g.node_coords(s);
    const Vec3 c = g.node_position(n[0], n[1], n[2]);
    double w = 1.0;
    for (int axis = 0; axis < 3; ++axis) {
        w *= cubic_bspline((x[axis] - c[axis]) / g.spacing()[axis]);
    }
    return w;
}

inline double boxcar_weight(const FFDGrid &g, std::size_t s, const Vec3 &x) {
    const auto n = g.node_coords(s);
    const Vec3 c = g.node_position(n[0], n[1], n[2]);
    for (int axis = 0; axis < 3; ++axis) {
        const double h = 2.0 * g.spacing()[axis];
        if (x[axis] < c[axis] - h || x[axis] >= c[axis] + h) {
            return 0.0;
        }
    }
    return 1.0;
}

/// p(a,b,r) by the triple loop over regions, voxels and all bin pairs.
/// Layout regions x bins x bins.
inline std::vector<double> regional_joint(const Volume &A, const Volume &B, const FFDGrid &g, bool bspline,
                                          int max_bin) {
    const std::size_t nb = static_cast<std::size_t>(max_bin) + 1;
    const Dims d = A.dims();
    std::vector<double> p(g.node_count() * nb * nb, 0.0);
    double z = 0.0;
    for (std::size_t r = 0; r < g.node_count(); ++r) {
        for (int k = 0; k < d.z; ++k) {
            for (int j = 0; j < d.y; ++j) {
                for (int i = 0; i < d.x; ++i) {
                    const Vec3 x{double(i), double(j), double(k)};
                    const double w = bspline ? node_weight(g, r, x) : boxcar_weight(g, r, x);
                    if (w == 0.0) {
                        continue;
                    }
                    for (std::size_t a = 0; a < nb; ++a) {
                        const double ha = parzen(double(a) - A(i, j, k));
                        if (ha == 0.0) {
                            continue;
                        }
                        for (std::size_t b = 0; b < nb; ++b) {
                            const double v = w * ha * parzen(double(b) - B(i, j, k));
                            p[(r * nb + a) * nb + b] += v;
                            z += v;
                        }
                    }
                }
            }
        }
    }
    for (double &v : p) {
        v /= z;
    }
    return p;
}

/// CR from raw moments: 1 - (1/σ²) Σ_a σ²(a) p(a), σ² = E[b²] - E[b]².
inline double correlation_ratio(const std::vector<double> &joint, std::size_t nb) {
    double m1 = 0.0, m2 = 0.0, total = 0.0;
    for (std::size_t a = 0; a < nb; ++a) {
        for (std::size_t b = 0; b < nb; ++b) {
            const double p = joint[a * nb + b];
            total += p;
            m1 += double(b) * p;
            m2 += double(b) * double(b) * p;
        }
    }
    m1 /= total;
    m2 /= total;
    const double var = m2 - m1 * m1;
    double weighted = 0.0;
    for (std::size_t a = 0; a < nb; ++a) {
        double pa = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const double p = joint[a * nb + b] / total;
            pa += p;
            s1 += double(b) * p;
            s2 += double(b) * double(b) * p;
        }
        if (pa > 0.0) {
            const double mu = s1 / pa;
            weighted += (s2 / pa - mu * mu) * pa;
        }
    }
    return 1.0 - weighted / var;
}

/// Patch baseline written straight from its definition: mean over
/// non-degenerate patches of (Σ B²/N - Σ_a p(a) μ(a)²)/σ².
inline double raptor(const Volume &A, const Volume &B, const std::vector<crreg::Cuboid> &patches, int max_bin) {
    const std::size_t nb = static_cast<std::size_t>(max_bin) + 1;
    double total = 0.0;
    int used = 0;
    for (const auto &box : patches) {
        std::vector<double> s0(nb, 0.0), s1(nb, 0.0);
        double sb = 0.0, sb2 = 0.0, n = 0.0;
        for (int k = box.lo[2]; k < box.hi[2]; ++k) {
            for (int j = box.lo[1]; j < box.hi[1]; ++j) {
                for (int i = box.lo[0]; i < box.hi[0]; ++i) {
                    const double a = A(i, j, k);
                    const double b = B(i, j, k);
                    for (std::size_t bin = 0; bin < nb; ++bin) {
                        const double h = std::max(0.0, 1.0 - std::abs(double(bin) - a));
                        s0[bin] += h;
                        s1[bin] += h * b;
                    }
                    sb += b;
                    sb2 += b * b;
                    n += 1.0;
                }
            }
        }
        const double var = sb2 / n - (sb / n) * (sb / n);
        if (var < 1e-8) {
            continue;
        }
        double explained = 0.0;
        for (std::size_t bin = 0; bin < nb; ++bin) {
            if (s0[bin] > 0.0) {
                const double mu = s1[bin] / s0[bin];
                explained += (s0[bin] / n) * mu * mu;
            }
        }
        total += (sb2 / n - explained) / var;
        ++used;
    }
    return total / used;
}

/// Bending energy by per-voxel second derivatives of the displacement,
/// both expressed in lattice coordinates u = x / spacing.
inline double bending_energy(const FFDGrid &g) {
    const Dims d = g.image_dims();
    double sum = 0.0;
    for (int k = 0; k < d.z; ++k) {
        for (int j = 0; j < d.y; ++j) {
            for (int i = 0; i < d.x; ++i) {
                const Vec3 x{double(i), double(j), double(k)};
                // H[c][p][q] = second derivative of component c along lattice axes p, q
                double H[3][3][3] = {};
                for (std::size_t s = 0; s < g.node_count(); ++s) {
                    const auto n = g.node_coords(s);
                    const Vec3 c = g.node_position(n[0], n[1], n[2]);
                    double u[3], f0[3], f1[3], f2[3];
                    bool zero = false;
                    for (int axis = 0; axis < 3; ++axis) {
                        const double h = g.spacing()[axis];
                        u[axis] = (x[axis] - c[axis]) / h;
                        if (std::abs(u[axis]) >= 2.0) {
                            zero = true;
                        }
                        f0[axis] = cubic_bspline(u[axis]);
                        f1[axis] = cubic_bspline_d1(u[axis]);
                        f2[axis] = cubic_bspline_d2(u[axis]);
                    }
                    if (zero) {
                        continue;
                    }
                    for (int p = 0; p < 3; ++p) {
                        for (int q = 0; q < 3; ++q) {
                            double w = 1.0;
                            for (int axis = 0; axis < 3; ++axis) {
                                const int order = (axis == p) + (axis == q);
                                w *= order == 0 ? f0[axis] : (order == 1 ? f1[axis] : f2[axis]);
                            }
                            const Vec3 &phi = g.displacements()[s];
                            for (int comp = 0; comp < 3; ++comp) {
                                H[comp][p][q] += w * phi[comp] / g.spacing()[comp];
                            }
                        }
                    }
                }
                for (int comp = 0; comp < 3; ++comp) {
                    for (int p = 0; p < 3; ++p) {
                        for (int q = 0; q < 3; ++q) {
                            sum += H[comp][p][q] * H[comp][p][q];
                        }
                    }
                }
            }
        }
    }
    return sum / static_cast<double>(d.count());
}

inline double hausdorff(const std::vector<Vec3> &xs, const std::vector<Vec3> &ys) {
    auto directed = [](const std::vector<Vec3> &p, const std::vector<Vec3> &q) {
        double worst = 0.0;
        for (const Vec3 &a : p) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3 &b : q) {
                best = std::min(best, (a - b).squared_norm());
            }
            worst = std::max(worst, std::sqrt(best));
        }
        return worst;
    };
    return std::max(directed(xs, ys), directed(ys, xs));
}

inline double mhd(const std::vector<Vec3> &xs, const std::vector<Vec3> &ys) {
    auto directed = [](const std::vector<Vec3> &p, const std::vector<Vec3> &q) {
        double sum = 0.0;
        for (const Vec3 &a : p) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3 &b : q) {
                best = std::min(best, (a - b).squared_norm());
            }
            sum += std::sqrt(best);
        }
        return sum / static_cast<double>(p.size());
    };
    return std::max(directed(xs, ys), directed(ys, xs));
}

/// Trilinear sample written per corner.
inline double trilinear(const Volume &v, Vec3 p) {
    const Dims d = v.dims();
    double out = 0.0;
    int lo[3];
    double t[3];
    for (int axis = 0; axis < 3; ++axis) {
        const double c = std::clamp(p[axis], 0.0, double(d[axis] - 1));
        lo[axis] = std::min(int(std::floor(c)), d[axis] - 2);
        t[axis] = c - lo[axis];
    }
    for (int corner = 0; corner < 8; ++corner) {
        double w = 1.0;
        int idx[3];
        for (int axis = 0; axis < 3; ++axis) {
            const int bit = (corner >> axis) & 1;
            idx[axis] = lo[axis] + bit;
            w *= bit ? t[axis] : 1.0 - t[axis];
        }
        out += w * v(idx[0], idx[1], idx[2]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generators

inline Volume random_volume(Dims d, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Volume v(d);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = u(rng);
    }
    return v;
}

inline Volume random_integer_volume(Dims d, int max_bin, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, max_bin);
    Volume v(d);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = u(rng);
    }
    return v;
}

inline void randomize_grid(FFDGrid &g, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    for (Vec3 &p : g.displacements()) {
        p = {u(rng), u(rng), u(rng)};
    }
}

} // namespace oracle
