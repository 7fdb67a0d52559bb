#include "crreg/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crreg/parallel.hpp"

namespace crreg {

void BinConfig::validate() const {
    if (max_bin < 1) {
        throw std::invalid_argument("BinConfig: max_bin must be >= 1, got " + std::to_string(max_bin));
    }
}

double parzen(double t) {
    const double a = std::abs(t);
    if (a < 0.5) {
        return -1.8 * a * a - 0.1 * a + 1.0;
    }
    if (a < 1.0) {
        return 1.8 * a * a - 3.7 * a + 1.9;
    }
    return 0.0;
}

double parzen_deriv(double t) {
    const double a = std::abs(t);
    if (t == 0.0 || a >= 1.0) {
        return 0.0;
    }
    const double s = t > 0.0 ? 1.0 : -1.0;
    if (a < 0.5) {
        return s * (-3.6 * a - 0.1);
    }
    return s * (3.6 * a - 3.7);
}

double tent(double t) {
    const double a = std::abs(t);
    return a < 1.0 ? 1.0 - a : 0.0;
}

double tent_deriv(double t) {
    const double a = std::abs(t);
    if (t == 0.0 || a >= 1.0) {
        return 0.0;
    }
    return t > 0.0 ? -1.0 : 1.0;
}

namespace {
constexpr double kRangeTolerance = 1e-6;
}

SoftBin soft_bin(double v, const BinConfig &cfg, BinKernel kernel) {
    const double top = static_cast<double>(cfg.max_bin);
    if (!(v >= -kRangeTolerance && v <= top + kRangeTolerance)) {
        throw std::invalid_argument("intensity " + std::to_string(v) + " outside [0, " + std::to_string(cfg.max_bin) +
                                    "]; normalize the image first");
    }
    v = std::clamp(v, 0.0, top);
    SoftBin s;
    s.lower = std::min(static_cast<int>(std::floor(v)), cfg.max_bin - 1);
    const double t0 = s.lower - v;
    const double t1 = t0 + 1.0;
    if (kernel == BinKernel::Parzen) {
        s.w0 = parzen(t0);
        s.w1 = parzen(t1);
        s.d0 = parzen_deriv(t0);
        s.d1 = parzen_deriv(t1);
    } else {
        s.w0 = tent(t0);
        s.w1 = tent(t1);
        s.d0 = tent_deriv(t0);
        s.d1 = tent_deriv(t1);
    }
    return s;
}

std::vector<SoftBin> soft_bins(const Volume &v, const BinConfig &cfg, BinKernel kernel, int workers) {
    cfg.validate();
    std::vector<SoftBin> out(v.size());
    parallel_for(v.size(), workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            out[i] = soft_bin(v[i], cfg, kernel);
        }
    });
    return out;
}

NodeSupport NodeSupport::build(const FFDGrid &g, SpatialWeightKind kind) {
    NodeSupport s;
    for (int axis = 0; axis < 3; ++axis) {
        AxisRuns &runs = s.axes[static_cast<std::size_t>(axis)];
        const auto nodes = static_cast<std::size_t>(g.node_dims()[axis]);
        runs.begin.assign(nodes, 0);
        runs.weights.assign(nodes, {});
        const auto table = g.axis_table(axis);
        for (std::size_t c = 0; c < table.size(); ++c) {
            const AxisSupport &sup = table[c];
            for (int l = 0; l < 4; ++l) {
                const auto node = static_cast<std::size_t>(sup.first + l);
                auto &w = runs.weights[node];
                if (w.empty()) {
                    runs.begin[node] = static_cast<int>(c);
                }
                w.push_back(kind == SpatialWeightKind::CubicBSpline ? sup.w[static_cast<std::size_t>(l)] : 1.0);
            }
        }
    }
    return s;
}

double accumulate_region(std::size_t r, std::span<const SoftBin> a_bins, std::span<const SoftBin> b_bins,
                         const FFDGrid &grid, const NodeSupport &support, std::size_t bins, std::span<double> table) {
    std::fill(table.begin(), table.end(), 0.0);
    const auto node = grid.node_coords(r);
    const auto &rx = support.axes[0];
    const auto &ry = support.axes[1];
    const auto &rz = support.axes[2];
    const auto &wx = rx.weights[static_cast<std::size_t>(node[0])];
    const auto &wy = ry.weights[static_cast<std::size_t>(node[1])];
    const auto &wz = rz.weights[static_cast<std::size_t>(node[2])];
    if (wx.empty() || wy.empty() || wz.empty()) {
        return 0.0;
    }
    const int bx = rx.begin[static_cast<std::size_t>(node[0])];
    const int by = ry.begin[static_cast<std::size_t>(node[1])];
    const int bz = rz.begin[static_cast<std::size_t>(node[2])];
    const Dims &d = grid.image_dims();

    for (std::size_t n = 0; n < wz.size(); ++n) {
        for (std::size_t m = 0; m < wy.size(); ++m) {
            const double wzy = wz[n] * wy[m];
            if (wzy == 0.0) {
                continue;
            }
            const std::size_t row = d.index(bx, by + static_cast<int>(m), bz + static_cast<int>(n));
            for (std::size_t l = 0; l < wx.size(); ++l) {
                const double w = wzy * wx[l];
                const SoftBin &sa = a_bins[row + l];
                const SoftBin &sb = b_bins[row + l];
                double *t0 = table.data() + static_cast<std::size_t>(sa.lower) * bins + static_cast<std::size_t>(sb.lower);
                double *t1 = t0 + bins;
                const double wa0 = w * sa.w0;
                const double wa1 = w * sa.w1;
                t0[0] += wa0 * sb.w0;
                t0[1] += wa0 * sb.w1;
                t1[0] += wa1 * sb.w0;
                t1[1] += wa1 * sb.w1;
            }
        }
    }
    double mass = 0.0;
    for (const double v : table) {
        mass += v;
    }
    return mass;
}

namespace {

// Fills the intensity statistics of region r from its unnormalised table.
// Mass-dependent fields (p(r), mass-floor retention) are set by the caller.
void summarize_region(std::span<const double> raw, double raw_mass, std::size_t r, RegionalStats &st) {
    const std::size_t nb = st.cfg.bins();
    double *mu_a = st.cond_mean.data() + r * nb;
    double *p_a = st.cond_mass.data() + r * nb;
    std::fill(mu_a, mu_a + nb, 0.0);
    std::fill(p_a, p_a + nb, 0.0);
    st.variance[r] = 0.0;
    st.mean[r] = 0.0;
    st.cr[r] = 0.0;
    st.retained[r] = 0;
    if (!(raw_mass > 0.0)) {
        return;
    }
    const double inv = 1.0 / raw_mass;

    std::vector<double> p_b(nb, 0.0);
    for (std::size_t a = 0; a < nb; ++a) {
        double pa = 0.0;
        double s1 = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const double p = raw[a * nb + b] * inv;
            pa += p;
            s1 += static_cast<double>(b) * p;
            p_b[b] += p;
        }
        p_a[a] = pa;
        mu_a[a] = pa >= kMassFloor ? s1 / pa : 0.0;
    }
    double mu = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        mu += static_cast<double>(b) * p_b[b];
    }
    double var = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        const double dev = static_cast<double>(b) - mu;
        var += dev * dev * p_b[b];
    }
    double within = 0.0;
    for (std::size_t a = 0; a < nb; ++a) {
        for (std::size_t b = 0; b < nb; ++b) {
            const double dev = static_cast<double>(b) - mu_a[a];
            within += dev * dev * raw[a * nb + b] * inv;
        }
    }
    st.mean[r] = mu;
    st.variance[r] = var;
    if (var >= kVarianceFloor) {
        st.cr[r] = 1.0 - within / var;
        st.retained[r] = 1;
    }
}

void finalize_masses(const std::vector<double> &raw_mass, RegionalStats &st) {
    double z = 0.0;
    for (const double m : raw_mass) {
        z += m;
    }
    st.normalizer = z;
    st.retained_mass = 0.0;
    for (std::size_t r = 0; r < st.regions; ++r) {
        st.mass[r] = z > 0.0 ? raw_mass[r] / z : 0.0;
        if (st.mass[r] < kMassFloor) {
            st.retained[r] = 0;
        }
        if (st.retained[r]) {
            st.retained_mass += st.mass[r];
        }
    }
}

RegionalStats empty_stats(const BinConfig &cfg, std::size_t regions) {
    RegionalStats st;
    st.cfg = cfg;
    st.regions = regions;
    st.mass.assign(regions, 0.0);
    st.retained.assign(regions, 0);
    st.variance.assign(regions, 0.0);
    st.mean.assign(regions, 0.0);
    st.cr.assign(regions, 0.0);
    st.cond_mean.assign(regions * cfg.bins(), 0.0);
    st.cond_mass.assign(regions * cfg.bins(), 0.0);
    return st;
}

void check_inputs(const Volume &A, const Volume &B, const FFDGrid &grid) {
    require_same_dims(A.dims(), B.dims(), "regional pdf");
    require_same_dims(A.dims(), grid.image_dims(), "regional pdf (grid)");
}

} // namespace

std::size_t RegionalStats::retained_count() const {
    return static_cast<std::size_t>(std::count(retained.begin(), retained.end(), std::uint8_t{1}));
}

RegionalPDF build_regional_pdf(const Volume &A, const Volume &B, const FFDGrid &grid, SpatialWeightKind kind,
                               const BinConfig &cfg, int workers) {
    cfg.validate();
    check_inputs(A, B, grid);
    const auto a_bins = soft_bins(A, cfg, BinKernel::Parzen, workers);
    const auto b_bins = soft_bins(B, cfg, BinKernel::Parzen, workers);
    const NodeSupport support = NodeSupport::build(grid, kind);

    RegionalPDF pdf;
    pdf.cfg = cfg;
    pdf.regions = grid.node_count();
    const std::size_t cells = cfg.bins() * cfg.bins();
    pdf.joint.assign(pdf.regions * cells, 0.0);
    pdf.raw_mass.assign(pdf.regions, 0.0);
    pdf.region_mass.assign(pdf.regions, 0.0);

    parallel_for(pdf.regions, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t r = b; r < e; ++r) {
            std::span<double> table(pdf.joint.data() + r * cells, cells);
            pdf.raw_mass[r] = accumulate_region(r, a_bins, b_bins, grid, support, cfg.bins(), table);
        }
    });

    double z = 0.0;
    for (const double m : pdf.raw_mass) {
        z += m;
    }
    pdf.normalizer = z;
    for (std::size_t r = 0; r < pdf.regions; ++r) {
        const double m = pdf.raw_mass[r];
        pdf.region_mass[r] = z > 0.0 ? m / z : 0.0;
        if (m > 0.0) {
            for (std::size_t c = 0; c < cells; ++c) {
                pdf.joint[r * cells + c] /= m;
            }
        }
    }
    return pdf;
}

RegionalStats regional_stats(const RegionalPDF &pdf) {
    RegionalStats st = empty_stats(pdf.cfg, pdf.regions);
    // Tables are already normalised; feed them with unit mass.
    for (std::size_t r = 0; r < pdf.regions; ++r) {
        summarize_region(pdf.table(r), pdf.raw_mass[r] > 0.0 ? 1.0 : 0.0, r, st);
    }
    finalize_masses(pdf.raw_mass, st);
    return st;
}

RegionalStats build_regional_stats(std::span<const SoftBin> a_bins, std::span<const SoftBin> b_bins,
                                   const FFDGrid &grid, const NodeSupport &support, const BinConfig &cfg,
                                   int workers, bool deterministic) {
    if (a_bins.size() != grid.image_dims().count() || b_bins.size() != a_bins.size()) {
        throw std::invalid_argument("build_regional_stats: bin arrays do not match the grid's image");
    }
    RegionalStats st = empty_stats(cfg, grid.node_count());
    std::vector<double> raw_mass(st.regions, 0.0);
    const std::size_t cells = cfg.bins() * cfg.bins();
    parallel_for(
        st.regions, workers,
        [&](std::size_t b, std::size_t e, int) {
            std::vector<double> table(cells);
            for (std::size_t r = b; r < e; ++r) {
                raw_mass[r] = accumulate_region(r, a_bins, b_bins, grid, support, cfg.bins(), table);
                summarize_region(table, raw_mass[r], r, st);
            }
        },
        deterministic ? Schedule::Static : Schedule::Dynamic);
    finalize_masses(raw_mass, st);
    return st;
}

} // namespace crreg
