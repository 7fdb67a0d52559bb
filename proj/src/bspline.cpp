#include "crreg/bspline.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

#include "crreg/parallel.hpp"

namespace crreg {

double basis_eval(int l, double t) {
    if (l < 0 || l > 3) {
        throw std::out_of_range("basis_eval: segment index " + std::to_string(l) + " outside 0..3");
    }
    if (!(t >= 0.0 && t < 1.0)) {
        throw std::out_of_range("basis_eval: fraction " + std::to_string(t) + " outside [0,1)");
    }
    return basis_value(l, t);
}

FFDGrid FFDGrid::covering(Dims image_dims, Vec3 spacing) {
    if (!image_dims.positive()) {
        throw std::invalid_argument("FFDGrid: image dimensions must be positive, got " + image_dims.str());
    }
    if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) {
        throw std::invalid_argument("FFDGrid: spacing must be positive");
    }
    FFDGrid g;
    g.image_dims_ = image_dims;
    g.spacing_ = spacing;
    g.origin_ = -spacing;
    auto nodes = [](int n, double d) { return static_cast<int>(std::floor((n - 1) / d)) + 4; };
    g.node_dims_ = {nodes(image_dims.x, spacing.x), nodes(image_dims.y, spacing.y), nodes(image_dims.z, spacing.z)};
    g.phi_.assign(g.node_dims_.count(), Vec3{});
    return g;
}

std::array<int, 3> FFDGrid::node_coords(std::size_t s) const {
    const auto gx = static_cast<std::size_t>(node_dims_.x);
    const auto gy = static_cast<std::size_t>(node_dims_.y);
    return {static_cast<int>(s % gx), static_cast<int>((s / gx) % gy), static_cast<int>(s / (gx * gy))};
}

Vec3 FFDGrid::node_position(int i, int j, int k) const {
    return {origin_.x + i * spacing_.x, origin_.y + j * spacing_.y, origin_.z + k * spacing_.z};
}

std::vector<double> FFDGrid::parameters() const {
    std::vector<double> p(3 * phi_.size());
    for (std::size_t s = 0; s < phi_.size(); ++s) {
        p[3 * s] = phi_[s].x;
        p[3 * s + 1] = phi_[s].y;
        p[3 * s + 2] = phi_[s].z;
    }
    return p;
}

void FFDGrid::set_parameters(std::span<const double> params) {
    if (params.size() != 3 * phi_.size()) {
        throw std::invalid_argument("FFDGrid::set_parameters: expected " + std::to_string(3 * phi_.size()) +
                                    " values, got " + std::to_string(params.size()));
    }
    for (std::size_t s = 0; s < phi_.size(); ++s) {
        phi_[s] = {params[3 * s], params[3 * s + 1], params[3 * s + 2]};
    }
}

AxisSupport FFDGrid::axis_support(int axis, double c) const {
    const double u = (c - origin_[axis]) / spacing_[axis];
    const double fl = std::floor(u);
    AxisSupport s;
    s.first = static_cast<int>(fl) - 1;
    s.t = u - fl;
    if (s.first < 0 || s.first + 3 >= node_dims_[axis]) {
        throw std::out_of_range("FFDGrid: coordinate " + std::to_string(c) + " on axis " + std::to_string(axis) +
                                " has incomplete node support");
    }
    for (int l = 0; l < 4; ++l) {
        s.w[static_cast<std::size_t>(l)] = basis_value(l, s.t);
    }
    return s;
}

std::vector<AxisSupport> FFDGrid::axis_table(int axis) const {
    std::vector<AxisSupport> table(static_cast<std::size_t>(image_dims_[axis]));
    for (int c = 0; c < image_dims_[axis]; ++c) {
        table[static_cast<std::size_t>(c)] = axis_support(axis, static_cast<double>(c));
    }
    return table;
}

Vec3 transform_point(const FFDGrid &g, const Vec3 &x) {
    const AxisSupport sx = g.axis_support(0, x.x);
    const AxisSupport sy = g.axis_support(1, x.y);
    const AxisSupport sz = g.axis_support(2, x.z);
    Vec3 u;
    for (int n = 0; n < 4; ++n) {
        for (int m = 0; m < 4; ++m) {
            const double wzy = sz.w[static_cast<std::size_t>(n)] * sy.w[static_cast<std::size_t>(m)];
            for (int l = 0; l < 4; ++l) {
                u += g.phi(sx.first + l, sy.first + m, sz.first + n) * (wzy * sx.w[static_cast<std::size_t>(l)]);
            }
        }
    }
    return x + u;
}

double transform_jacobian(const FFDGrid &g, const Vec3 &x, std::size_t s) {
    if (s >= g.node_count()) {
        throw std::out_of_range("transform_jacobian: node index out of range");
    }
    const auto node = g.node_coords(s);
    double w = 1.0;
    for (int axis = 0; axis < 3; ++axis) {
        const AxisSupport sup = g.axis_support(axis, x[axis]);
        const int l = node[static_cast<std::size_t>(axis)] - sup.first;
        if (l < 0 || l > 3) {
            return 0.0;
        }
        w *= sup.w[static_cast<std::size_t>(l)];
    }
    return w;
}

double spatial_weight(SpatialWeightKind kind, const FFDGrid &g, std::size_t r, const Vec3 &x) {
    if (kind == SpatialWeightKind::CubicBSpline) {
        return transform_jacobian(g, x, r);
    }
    if (r >= g.node_count()) {
        throw std::out_of_range("spatial_weight: region index out of range");
    }
    const auto node = g.node_coords(r);
    const Vec3 c = g.node_position(node[0], node[1], node[2]);
    for (int axis = 0; axis < 3; ++axis) {
        const double off = x[axis] - c[axis];
        const double half = 2.0 * g.spacing()[axis];
        if (off < -half || off >= half) {
            return 0.0;
        }
    }
    return 1.0;
}

DisplacementField densify(const FFDGrid &g, int workers) {
    const Dims d = g.image_dims();
    const Dims gd = g.node_dims();
    const auto tx = g.axis_table(0);
    const auto ty = g.axis_table(1);
    const auto tz = g.axis_table(2);
    const auto phi = g.displacements();

    // Contract z, then y, then x.
    const auto gx = static_cast<std::size_t>(gd.x);
    const auto gy = static_cast<std::size_t>(gd.y);
    std::vector<Vec3> pz(static_cast<std::size_t>(d.z) * gy * gx);
    parallel_for(static_cast<std::size_t>(d.z), workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t z = b; z < e; ++z) {
            const AxisSupport &sz = tz[z];
            for (std::size_t j = 0; j < gy; ++j) {
                for (std::size_t i = 0; i < gx; ++i) {
                    Vec3 acc;
                    for (int n = 0; n < 4; ++n) {
                        acc += phi[gd.index(static_cast<int>(i), static_cast<int>(j), sz.first + n)] *
                               sz.w[static_cast<std::size_t>(n)];
                    }
                    pz[(z * gy + j) * gx + i] = acc;
                }
            }
        }
    });

    DisplacementField out(d);
    parallel_for(static_cast<std::size_t>(d.z), workers, [&](std::size_t b, std::size_t e, int) {
        std::vector<Vec3> py(gx);
        for (std::size_t z = b; z < e; ++z) {
            for (int y = 0; y < d.y; ++y) {
                const AxisSupport &sy = ty[static_cast<std::size_t>(y)];
                for (std::size_t i = 0; i < gx; ++i) {
                    Vec3 acc;
                    for (int m = 0; m < 4; ++m) {
                        acc += pz[(z * gy + static_cast<std::size_t>(sy.first + m)) * gx + i] *
                               sy.w[static_cast<std::size_t>(m)];
                    }
                    py[i] = acc;
                }
                for (int x = 0; x < d.x; ++x) {
                    const AxisSupport &sx = tx[static_cast<std::size_t>(x)];
                    Vec3 acc;
                    for (int l = 0; l < 4; ++l) {
                        acc += py[static_cast<std::size_t>(sx.first + l)] * sx.w[static_cast<std::size_t>(l)];
                    }
                    out(x, y, static_cast<int>(z)) = acc;
                }
            }
        }
    });
    return out;
}

DisplacementField compose(const DisplacementField &outer, const DisplacementField &inner, int workers) {
    require_same_dims(outer.dims(), inner.dims(), "compose");
    const Dims d = inner.dims();
    DisplacementField out(d, inner.spacing());
    parallel_for(static_cast<std::size_t>(d.z), workers, [&](std::size_t b, std::size_t e, int) {
        for (int k = static_cast<int>(b); k < static_cast<int>(e); ++k) {
            for (int j = 0; j < d.y; ++j) {
                for (int i = 0; i < d.x; ++i) {
                    const Vec3 &u = inner(i, j, k);
                    const Vec3 p{i + u.x, j + u.y, k + u.z};
                    out(i, j, k) = u + trilinear_sample(outer, p);
                }
            }
        }
    });
    return out;
}

DisplacementField invert_field(const DisplacementField &f, double sigma_splat, int workers) {
    if (!(sigma_splat > 0.0)) {
        throw std::invalid_argument("invert_field: sigma must be positive");
    }
    const Dims d = f.dims();
    const std::size_t n = d.count();
    const double cutoff2 = 9.0 * sigma_splat * sigma_splat;
    const int radius = static_cast<int>(std::floor(3.0 * sigma_splat));
    const double inv2s2 = 1.0 / (2.0 * sigma_splat * sigma_splat);

    struct Accum {
        std::vector<Vec3> num;
        std::vector<double> weight;
    };
    const int nw = std::clamp(workers, 1, std::max(1, d.z));
    std::vector<Accum> partial(static_cast<std::size_t>(nw));

    parallel_for(
        static_cast<std::size_t>(d.z), nw,
        [&](std::size_t b, std::size_t e, int w) {
            Accum &acc = partial[static_cast<std::size_t>(w)];
            acc.num.assign(n, Vec3{});
            acc.weight.assign(n, 0.0);
            for (int k = static_cast<int>(b); k < static_cast<int>(e); ++k) {
                for (int j = 0; j < d.y; ++j) {
                    for (int i = 0; i < d.x; ++i) {
                        const Vec3 &u = f(i, j, k);
                        const Vec3 q{i + u.x, j + u.y, k + u.z};
                        const int cx = static_cast<int>(std::lround(q.x));
                        const int cy = static_cast<int>(std::lround(q.y));
                        const int cz = static_cast<int>(std::lround(q.z));
                        for (int z = std::max(0, cz - radius); z <= std::min(d.z - 1, cz + radius); ++z) {
                            const double dz2 = (z - q.z) * (z - q.z);
                            for (int y = std::max(0, cy - radius); y <= std::min(d.y - 1, cy + radius); ++y) {
                                const double dzy2 = dz2 + (y - q.y) * (y - q.y);
                                for (int x = std::max(0, cx - radius); x <= std::min(d.x - 1, cx + radius); ++x) {
                                    const double r2 = dzy2 + (x - q.x) * (x - q.x);
                                    if (r2 > cutoff2) {
                                        continue;
                                    }
                                    const double wgt = std::exp(-r2 * inv2s2);
                                    const std::size_t idx = d.index(x, y, z);
                                    acc.num[idx] -= u * wgt;
                                    acc.weight[idx] += wgt;
                                }
                            }
                        }
                    }
                }
            }
        },
        Schedule::Static);

    // Merge in worker order; workers that received no rows left their buffers empty.
    std::vector<Vec3> num(n);
    std::vector<double> weight(n, 0.0);
    for (const Accum &acc : partial) {
        if (acc.weight.empty()) {
            continue;
        }
        for (std::size_t idx = 0; idx < n; ++idx) {
            num[idx] += acc.num[idx];
            weight[idx] += acc.weight[idx];
        }
    }

    DisplacementField out(d, f.spacing());
    std::vector<char> filled(n, 0);
    std::deque<std::size_t> frontier;
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (weight[idx] > 1e-12) {
            out[idx] = num[idx] * (1.0 / weight[idx]);
            filled[idx] = 1;
            frontier.push_back(idx);
        }
    }
    if (frontier.empty()) {
        return out;
    }
    while (!frontier.empty()) {
        const std::size_t idx = frontier.front();
        frontier.pop_front();
        const int i = static_cast<int>(idx % static_cast<std::size_t>(d.x));
        const int j = static_cast<int>((idx / static_cast<std::size_t>(d.x)) % static_cast<std::size_t>(d.y));
        const int k = static_cast<int>(idx / (static_cast<std::size_t>(d.x) * static_cast<std::size_t>(d.y)));
        const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
        for (const auto &p : nb) {
            if (p[0] < 0 || p[1] < 0 || p[2] < 0 || p[0] >= d.x || p[1] >= d.y || p[2] >= d.z) {
                continue;
            }
            const std::size_t nidx = d.index(p[0], p[1], p[2]);
            if (!filled[nidx]) {
                filled[nidx] = 1;
                out[nidx] = out[idx];
                frontier.push_back(nidx);
            }
        }
    }
    return out;
}

} // namespace crreg
