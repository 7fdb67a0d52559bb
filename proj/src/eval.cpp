#include "crreg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "crreg/parallel.hpp"
#include "crreg/pipeline.hpp"

namespace crreg {

void SyntheticConfig::validate() const {
    if (dims.x < 32 || dims.y < 32 || dims.z < 32) {
        throw std::invalid_argument("synthetic: dims must be >= 32 per axis, got " + dims.str());
    }
    if (!(amplitude >= 0.0)) {
        throw std::invalid_argument("synthetic: amplitude must be >= 0");
    }
    if (!(warp_spacing > 0.0) || !(amplitude < warp_spacing / 2.0)) {
        throw std::invalid_argument("synthetic: amplitude " + std::to_string(amplitude) +
                                    " must stay below half the warp spacing (" + std::to_string(warp_spacing) +
                                    ") to avoid folding");
    }
    if (period < 0 || thick < 0) {
        throw std::invalid_argument("synthetic: period and thick must be >= 0");
    }
    const int pe = effective_period();
    const int th = effective_thick();
    if (pe < 2 || th < 1 || th >= pe) {
        throw std::invalid_argument("synthetic: need period >= 2 and 1 <= thick < period, got " + std::to_string(pe) +
                                    " and " + std::to_string(th));
    }
    if (max_bin < 1) {
        throw std::invalid_argument("synthetic: max_bin must be >= 1");
    }
}

int SyntheticConfig::effective_period() const {
    return period > 0 ? period : static_cast<int>(std::lround(0.75 * warp_spacing));
}

int SyntheticConfig::effective_thick() const {
    return thick > 0 ? thick : std::max(1, static_cast<int>(std::lround(warp_spacing / 8.0)));
}

namespace {

// Warp lattice along one axis: node k sits at offset + k*spacing for k in
// [kmin, kmin + count).
struct WarpAxis {
    double offset = 0.0;
    int kmin = 0;
    int count = 0;
    std::vector<int> first;                 // per voxel: local index of the first supporting node
    std::vector<std::array<double, 4>> w;   // per voxel basis weights
    std::vector<std::uint8_t> inside;       // per node: position within [0, n-1]
};

WarpAxis warp_axis(int n, double spacing) {
    WarpAxis a;
    const double span = n - 1;
    a.offset = (span - spacing * std::floor(span / spacing)) / 2.0;
    a.kmin = static_cast<int>(std::floor(-a.offset / spacing)) - 1;
    const int kmax = static_cast<int>(std::floor((span - a.offset) / spacing)) + 2;
    a.count = kmax - a.kmin + 1;
    a.inside.resize(static_cast<std::size_t>(a.count));
    for (int k = 0; k < a.count; ++k) {
        const double pos = a.offset + (a.kmin + k) * spacing;
        a.inside[static_cast<std::size_t>(k)] = pos >= 0.0 && pos <= span;
    }
    a.first.resize(static_cast<std::size_t>(n));
    a.w.resize(static_cast<std::size_t>(n));
    for (int x = 0; x < n; ++x) {
        const double u = (x - a.offset) / spacing;
        const double p = std::floor(u);
        const double t = u - p;
        a.first[static_cast<std::size_t>(x)] = static_cast<int>(p) - 1 - a.kmin;
        for (int l = 0; l < 4; ++l) {
            a.w[static_cast<std::size_t>(x)][static_cast<std::size_t>(l)] = basis_value(l, t);
        }
    }
    return a;
}

} // namespace

SyntheticPair generate_synthetic(const SyntheticConfig &cfg) {
    cfg.validate();
    const Dims d = cfg.dims;
    SyntheticPair pair;
    pair.seed = cfg.seed;
    const int period = cfg.effective_period();
    const int thick = cfg.effective_thick();

    pair.original = Volume(d);
    for (int k = 0; k < d.z; ++k) {
        for (int j = 0; j < d.y; ++j) {
            for (int i = 0; i < d.x; ++i) {
                const bool white = i % period < thick || j % period < thick || k % period < thick;
                pair.original(i, j, k) = white ? cfg.max_bin : 0.0;
            }
        }
    }

    const WarpAxis ax = warp_axis(d.x, cfg.warp_spacing);
    const WarpAxis ay = warp_axis(d.y, cfg.warp_spacing);
    const WarpAxis az = warp_axis(d.z, cfg.warp_spacing);
    const Dims nd{ax.count, ay.count, az.count};
    std::vector<Vec3> phi(nd.count());
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-cfg.amplitude, cfg.amplitude);
    for (int k = 0; k < nd.z; ++k) {
        for (int j = 0; j < nd.y; ++j) {
            for (int i = 0; i < nd.x; ++i) {
                if (ax.inside[static_cast<std::size_t>(i)] && ay.inside[static_cast<std::size_t>(j)] &&
                    az.inside[static_cast<std::size_t>(k)] && cfg.amplitude > 0.0) {
                    Vec3 &p = phi[nd.index(i, j, k)];
                    p.x = uni(rng);
                    p.y = uni(rng);
                    p.z = uni(rng);
                }
            }
        }
    }

    pair.u_gt = DisplacementField(d);
    for (int k = 0; k < d.z; ++k) {
        const auto zk = static_cast<std::size_t>(k);
        for (int j = 0; j < d.y; ++j) {
            const auto yj = static_cast<std::size_t>(j);
            for (int i = 0; i < d.x; ++i) {
                const auto xi = static_cast<std::size_t>(i);
                Vec3 u;
                for (int n = 0; n < 4; ++n) {
                    for (int m = 0; m < 4; ++m) {
                        const double wzy = az.w[zk][static_cast<std::size_t>(n)] * ay.w[yj][static_cast<std::size_t>(m)];
                        for (int l = 0; l < 4; ++l) {
                            u += phi[nd.index(ax.first[xi] + l, ay.first[yj] + m, az.first[zk] + n)] *
                                 (wzy * ax.w[xi][static_cast<std::size_t>(l)]);
                        }
                    }
                }
                pair.u_gt(i, j, k) = u;
            }
        }
    }
    pair.warped = warp_with_field(pair.original, pair.u_gt);
    return pair;
}

double rmse_displacement(const DisplacementField &f, const DisplacementField &gt) {
    require_same_dims(f.dims(), gt.dims(), "rmse_displacement");
    if (f.size() == 0) {
        throw std::invalid_argument("rmse_displacement: empty field");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        sum += (f[i] - gt[i]).squared_norm();
    }
    return std::sqrt(sum / static_cast<double>(f.size()));
}

PointSet load_points(const std::filesystem::path &path, PointUnit unit) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open point file " + path.string());
    }
    PointSet ps;
    ps.unit = unit;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p.x)) {
            continue;
        }
        std::string extra;
        if (!(ls >> p.y >> p.z) || (ls >> extra)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
        }
        ps.points.push_back(p);
    }
    return ps;
}

void save_points(const std::filesystem::path &path, const PointSet &pts) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write point file " + path.string());
    }
    out.precision(17);
    for (const Vec3 &p : pts.points) {
        out << p.x << ' ' << p.y << ' ' << p.z << '\n';
    }
}

PointSet to_voxels(const PointSet &pts, const Vec3 &spacing) {
    if (pts.unit == PointUnit::Voxel) {
        return pts;
    }
    PointSet out;
    out.unit = PointUnit::Voxel;
    for (const Vec3 &p : pts.points) {
        out.points.push_back({p.x / spacing.x, p.y / spacing.y, p.z / spacing.z});
    }
    return out;
}

double mean_tre(const PointSet &fixed_pts, const PointSet &moving_pts, const DisplacementField &f,
                const Vec3 &spacing) {
    if (fixed_pts.points.size() != moving_pts.points.size()) {
        throw std::invalid_argument("mean_tre: point counts differ (" + std::to_string(fixed_pts.points.size()) +
                                    " vs " + std::to_string(moving_pts.points.size()) + ")");
    }
    if (fixed_pts.points.empty()) {
        throw std::invalid_argument("mean_tre: empty point sets");
    }
    const PointSet p = to_voxels(fixed_pts, spacing);
    const PointSet q = to_voxels(moving_pts, spacing);
    const auto mapped = transform_landmarks(p.points, f);
    double sum = 0.0;
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        const Vec3 e = mapped[i] - q.points[i];
        sum += Vec3{e.x * spacing.x, e.y * spacing.y, e.z * spacing.z}.norm();
    }
    return sum / static_cast<double>(mapped.size());
}

namespace {

// min_y ‖x - y‖ for every x.
std::vector<double> nearest_distances(const PointSet &xs, const PointSet &ys, int workers) {
    if (xs.points.empty() || ys.points.empty()) {
        throw std::invalid_argument("surface distance: empty point set");
    }
    std::vector<double> out(xs.points.size());
    parallel_for(xs.points.size(), workers, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3 &y : ys.points) {
                best = std::min(best, (xs.points[i] - y).squared_norm());
            }
            out[i] = std::sqrt(best);
        }
    });
    return out;
}

double mean_of(const std::vector<double> &v) {
    double s = 0.0;
    for (const double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

} // namespace

double hausdorff(const PointSet &xs, const PointSet &ys, int workers) {
    const auto a = nearest_distances(xs, ys, workers);
    const auto b = nearest_distances(ys, xs, workers);
    return std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
}

double mhd(const PointSet &xs, const PointSet &ys, int workers) {
    return std::max(mean_of(nearest_distances(xs, ys, workers)), mean_of(nearest_distances(ys, xs, workers)));
}

// ---------------------------------------------------------------------------

Volume random_smooth_volume(Dims dims, double sigma, int max_bin, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Volume v(dims);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = uni(rng);
    }
    return normalize_intensity(gaussian_smooth(v, sigma), max_bin);
}

GradcheckReport gradient_check(const GradcheckConfig &cfg) {
    const Dims d{cfg.dims, cfg.dims, cfg.dims};
    const BinConfig bins;
    const Volume a = random_smooth_volume(d, 2.0, bins.max_bin, cfg.seed);
    const Volume c = random_smooth_volume(d, 2.0, bins.max_bin, cfg.seed + 1000003);
    // B depends on A non-monotonically, plus an independent component.
    Volume b(d);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double t = a[i] / bins.max_bin - 0.5;
        b[i] = 0.7 * (4.0 * t * t) + 0.3 * c[i] / bins.max_bin;
    }
    b = normalize_intensity(b, bins.max_bin);

    FFDGrid grid = FFDGrid::covering(d, {cfg.grid_spacing, cfg.grid_spacing, cfg.grid_spacing});
    std::mt19937_64 rng(cfg.seed * 7919 + 17);
    std::uniform_real_distribution<double> uni(-cfg.displacement, cfg.displacement);
    for (Vec3 &p : grid.displacements()) {
        p = {uni(rng), uni(rng), uni(rng)};
    }
    const std::vector<double> x0 = grid.parameters();

    GradcheckReport report;
    report.pass = true;
    for (const MovingRole role : {MovingRole::Model, MovingRole::Estimated}) {
        for (const SpatialWeightKind kind : {SpatialWeightKind::CubicBSpline, SpatialWeightKind::Boxcar}) {
            EvalPlan plan;
            plan.moving_role = role;
            plan.weight_kind = kind;
            plan.similarity = cfg.similarity;
            plan.penalty_weight = cfg.penalty_weight;
            // The moving image is A for the model role, B otherwise.
            const Volume &moving = role == MovingRole::Model ? a : b;
            const Volume &fixed = role == MovingRole::Model ? b : a;
            Evaluator ev(plan, fixed, moving, grid);
            std::vector<double> g(x0.size());
            ev(x0, g);

            GradcheckCase cs;
            cs.role = role;
            cs.kind = kind;
            std::vector<double> x = x0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] = x0[i] + cfg.step;
                const double fp = ev(x, {});
                x[i] = x0[i] - cfg.step;
                const double fm = ev(x, {});
                x[i] = x0[i];
                const double fd = (fp - fm) / (2.0 * cfg.step);
                const double err = std::abs(fd - g[i]);
                if (std::abs(g[i]) > cfg.magnitude_floor) {
                    cs.max_rel_error = std::max(cs.max_rel_error, err / std::abs(g[i]));
                } else {
                    cs.max_abs_error = std::max(cs.max_abs_error, err);
                }
                ++cs.checked;
            }
            cs.pass = cs.max_rel_error < cfg.rel_tol && cs.max_abs_error < cfg.abs_tol;
            report.max_rel_error = std::max(report.max_rel_error, cs.max_rel_error);
            report.max_abs_error = std::max(report.max_abs_error, cs.max_abs_error);
            report.pass = report.pass && cs.pass;
            report.cases.push_back(cs);
        }
    }
    return report;
}

} // namespace crreg
