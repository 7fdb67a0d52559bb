#include "crreg/volume.hpp"

#include "crreg/bspline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace crreg {

namespace fs = std::filesystem;

Volume::Volume(Dims dims, Vec3 spacing, double fill) : dims_(dims), spacing_(spacing), data_(dims.count(), fill) {
    if (!dims.positive()) {
        throw std::invalid_argument("Volume: dimensions must be positive, got " + dims.str());
    }
}

Volume::Volume(Dims dims, Vec3 spacing, std::vector<double> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (!dims.positive()) {
        throw std::invalid_argument("Volume: dimensions must be positive, got " + dims.str());
    }
    if (data_.size() != dims.count()) {
        throw std::invalid_argument("Volume: data length " + std::to_string(data_.size()) + " does not match " +
                                    dims.str());
    }
}

std::pair<double, double> Volume::min_max() const {
    if (data_.empty()) {
        return {0.0, 0.0};
    }
    const auto [lo, hi] = std::minmax_element(data_.begin(), data_.end());
    return {*lo, *hi};
}

DisplacementField::DisplacementField(Dims dims, Vec3 spacing) : dims_(dims), spacing_(spacing), data_(dims.count()) {
    if (!dims.positive()) {
        throw std::invalid_argument("DisplacementField: dimensions must be positive, got " + dims.str());
    }
}

DisplacementField::DisplacementField(Dims dims, Vec3 spacing, std::vector<Vec3> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (data_.size() != dims.count()) {
        throw std::invalid_argument("DisplacementField: data length does not match " + dims.str());
    }
}

// ---------------------------------------------------------------------------
// I/O

std::string to_string(ElementType t) {
    switch (t) {
    case ElementType::Float32:
        return "float32";
    case ElementType::Int16:
        return "int16";
    case ElementType::UInt8:
        return "uint8";
    }
    return "?";
}

ElementType parse_element_type(const std::string &s) {
    if (s == "float32") {
        return ElementType::Float32;
    }
    if (s == "int16") {
        return ElementType::Int16;
    }
    if (s == "uint8") {
        return ElementType::UInt8;
    }
    throw std::runtime_error("unsupported element_type '" + s + "' (expected float32, int16 or uint8)");
}

namespace {

std::size_t element_bytes(ElementType t) {
    switch (t) {
    case ElementType::Float32:
        return 4;
    case ElementType::Int16:
        return 2;
    case ElementType::UInt8:
        return 1;
    }
    return 0;
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::string &require_key(const std::map<std::string, std::string> &kv, const std::string &key,
                               const fs::path &path) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
        throw std::runtime_error(path.string() + ": missing key '" + key + "'");
    }
    return it->second;
}

template <class T, std::size_t N>
std::array<T, N> parse_tuple(const std::string &key, const std::string &value) {
    std::istringstream in(value);
    std::array<T, N> out{};
    for (auto &x : out) {
        if (!(in >> x)) {
            throw std::runtime_error("key '" + key + "': cannot parse '" + value + "' as " + std::to_string(N) +
                                     " numbers");
        }
    }
    std::string extra;
    if (in >> extra) {
        throw std::runtime_error("key '" + key + "': trailing content in '" + value + "'");
    }
    return out;
}

// Payload codecs. Little-endian on disk regardless of host order.
void put_le(std::vector<char> &buf, std::size_t offset, std::uint32_t bits, std::size_t bytes) {
    for (std::size_t b = 0; b < bytes; ++b) {
        buf[offset + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
}

std::uint32_t get_le(const std::vector<char> &buf, std::size_t offset, std::size_t bytes) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < bytes; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[offset + b])) << (8 * b);
    }
    return bits;
}

void encode(std::vector<char> &buf, std::size_t i, ElementType t, double v) {
    switch (t) {
    case ElementType::Float32:
        put_le(buf, i * 4, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
        break;
    case ElementType::Int16: {
        const double r = std::clamp(std::round(v), -32768.0, 32767.0);
        put_le(buf, i * 2, static_cast<std::uint16_t>(static_cast<std::int16_t>(r)), 2);
        break;
    }
    case ElementType::UInt8: {
        const double r = std::clamp(std::round(v), 0.0, 255.0);
        put_le(buf, i, static_cast<std::uint32_t>(r), 1);
        break;
    }
    }
}

double decode(const std::vector<char> &buf, std::size_t i, ElementType t) {
    switch (t) {
    case ElementType::Float32:
        return static_cast<double>(std::bit_cast<float>(get_le(buf, i * 4, 4)));
    case ElementType::Int16:
        return static_cast<double>(static_cast<std::int16_t>(static_cast<std::uint16_t>(get_le(buf, i * 2, 2))));
    case ElementType::UInt8:
        return static_cast<double>(get_le(buf, i, 1));
    }
    return 0.0;
}

std::vector<char> read_payload(const fs::path &header_path, const VolumeHeader &h) {
    const fs::path data_path = header_path.parent_path() / h.data_file;
    std::ifstream in(data_path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("data_file '" + data_path.string() + "' cannot be opened");
    }
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = h.dim_size.count() * static_cast<std::size_t>(h.components) * element_bytes(h.element_type);
    if (buf.size() != expected) {
        throw std::runtime_error("data_file '" + data_path.string() + "': payload length " + std::to_string(buf.size()) +
                                 " bytes does not match dim_size " + h.dim_size.str() + " x components " +
                                 std::to_string(h.components) + " x " + to_string(h.element_type) + " (" +
                                 std::to_string(expected) + " bytes)");
    }
    return buf;
}

void write_payload(const fs::path &path, const std::vector<char> &buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

fs::path payload_name(const fs::path &header_path) {
    return header_path.stem().string() + ".raw";
}

} // namespace

VolumeHeader read_header(const fs::path &header_path) {
    std::ifstream in(header_path);
    if (!in) {
        throw std::runtime_error("header '" + header_path.string() + "' cannot be opened");
    }
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(header_path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }

    VolumeHeader h;
    const auto d = parse_tuple<int, 3>("dim_size", require_key(kv, "dim_size", header_path));
    h.dim_size = {d[0], d[1], d[2]};
    if (!h.dim_size.positive()) {
        throw std::runtime_error("key 'dim_size': extents must be positive, got '" + kv["dim_size"] + "'");
    }
    const auto s = parse_tuple<double, 3>("spacing", require_key(kv, "spacing", header_path));
    h.spacing = {s[0], s[1], s[2]};
    if (!(h.spacing.x > 0 && h.spacing.y > 0 && h.spacing.z > 0)) {
        throw std::runtime_error("key 'spacing': values must be > 0, got '" + kv["spacing"] + "'");
    }
    h.element_type = parse_element_type(require_key(kv, "element_type", header_path));
    h.byte_order = require_key(kv, "byte_order", header_path);
    if (h.byte_order != "little") {
        throw std::runtime_error("key 'byte_order': unsupported value '" + h.byte_order + "' (expected little)");
    }
    const auto c = parse_tuple<int, 1>("components", require_key(kv, "components", header_path));
    h.components = c[0];
    if (h.components != 1 && h.components != 3) {
        throw std::runtime_error("key 'components': unsupported value '" + kv["components"] + "' (expected 1 or 3)");
    }
    h.data_file = require_key(kv, "data_file", header_path);
    return h;
}

void write_header(const fs::path &header_path, const VolumeHeader &h) {
    std::ofstream out(header_path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + header_path.string() + "' for writing");
    }
    out.precision(17);
    out << "dim_size = " << h.dim_size.x << ' ' << h.dim_size.y << ' ' << h.dim_size.z << '\n';
    out << "spacing = " << h.spacing.x << ' ' << h.spacing.y << ' ' << h.spacing.z << '\n';
    out << "element_type = " << to_string(h.element_type) << '\n';
    out << "byte_order = " << h.byte_order << '\n';
    out << "components = " << h.components << '\n';
    out << "data_file = " << h.data_file << '\n';
}

Volume load_volume(const fs::path &header_path) {
    const VolumeHeader h = read_header(header_path);
    if (h.components != 1) {
        throw std::runtime_error("key 'components': expected 1 for a scalar volume, got " + std::to_string(h.components));
    }
    const auto buf = read_payload(header_path, h);
    std::vector<double> data(h.dim_size.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = decode(buf, i, h.element_type);
    }
    return Volume(h.dim_size, h.spacing, std::move(data));
}

void save_volume(const fs::path &header_path, const Volume &v, ElementType type) {
    VolumeHeader h;
    h.dim_size = v.dims();
    h.spacing = v.spacing();
    h.element_type = type;
    h.components = 1;
    h.data_file = payload_name(header_path).string();

    std::vector<char> buf(v.size() * element_bytes(type));
    for (std::size_t i = 0; i < v.size(); ++i) {
        encode(buf, i, type, v[i]);
    }
    write_payload(header_path.parent_path() / h.data_file, buf);
    write_header(header_path, h);
}

DisplacementField load_field(const fs::path &header_path) {
    const VolumeHeader h = read_header(header_path);
    if (h.components != 3) {
        throw std::runtime_error("key 'components': expected 3 for a displacement field, got " +
                                 std::to_string(h.components));
    }
    const auto buf = read_payload(header_path, h);
    std::vector<Vec3> data(h.dim_size.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = {decode(buf, 3 * i, h.element_type), decode(buf, 3 * i + 1, h.element_type),
                   decode(buf, 3 * i + 2, h.element_type)};
    }
    return DisplacementField(h.dim_size, h.spacing, std::move(data));
}

void save_field(const fs::path &header_path, const DisplacementField &f) {
    VolumeHeader h;
    h.dim_size = f.dims();
    h.spacing = f.spacing();
    h.element_type = ElementType::Float32;
    h.components = 3;
    h.data_file = payload_name(header_path).string();

    std::vector<char> buf(f.size() * 3 * 4);
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            encode(buf, 3 * i + static_cast<std::size_t>(c), ElementType::Float32, f[i][c]);
        }
    }
    write_payload(header_path.parent_path() / h.data_file, buf);
    write_header(header_path, h);
}

// ---------------------------------------------------------------------------
// Image operations

Volume normalize_intensity(const Volume &v, int max_bin, std::optional<IntensityWindow> window) {
    double lo = 0.0;
    double hi = 0.0;
    if (window) {
        if (!(window->lo < window->hi)) {
            throw std::invalid_argument("normalize_intensity: window requires lo < hi");
        }
        lo = window->lo;
        hi = window->hi;
    } else {
        std::tie(lo, hi) = v.min_max();
    }
    Volume out(v.dims(), v.spacing(), 0.0);
    if (!(hi > lo)) {
        return out;
    }
    const double scale = static_cast<double>(max_bin) / (hi - lo);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double c = std::clamp(v[i], lo, hi);
        out[i] = std::clamp((c - lo) * scale, 0.0, static_cast<double>(max_bin));
    }
    return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    for (int t = -radius; t <= radius; ++t) {
        k[static_cast<std::size_t>(t + radius)] = std::exp(-0.5 * t * t / (sigma * sigma));
    }
    return k;
}

// One separable pass along `axis`, producing outputs at positions 0, step, 2*step...
std::vector<double> smooth_axis(const std::vector<double> &in, const Dims &in_dims, int axis,
                                const std::vector<double> &kernel, int step, Dims &out_dims) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int n = in_dims[axis];
    const int n_out = (n + step - 1) / step;
    out_dims = in_dims;
    (axis == 0 ? out_dims.x : (axis == 1 ? out_dims.y : out_dims.z)) = n_out;
    std::vector<double> out(out_dims.count());

    for (int k = 0; k < out_dims.z; ++k) {
        for (int j = 0; j < out_dims.y; ++j) {
            for (int i = 0; i < out_dims.x; ++i) {
                int pos[3] = {i, j, k};
                const int centre = pos[axis] * step;
                double acc = 0.0;
                double wsum = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    const int q = centre + t;
                    if (q < 0 || q >= n) {
                        continue;
                    }
                    int src[3] = {i, j, k};
                    src[axis] = q;
                    const double w = kernel[static_cast<std::size_t>(t + radius)];
                    acc += w * in[in_dims.index(src[0], src[1], src[2])];
                    wsum += w;
                }
                out[out_dims.index(i, j, k)] = acc / wsum;
            }
        }
    }
    return out;
}

Volume smooth_and_step(const Volume &v, double sigma, int step) {
    const auto kernel = gaussian_kernel(sigma);
    std::vector<double> buf(v.data().begin(), v.data().end());
    Dims dims = v.dims();
    for (int axis = 0; axis < 3; ++axis) {
        Dims next{};
        buf = smooth_axis(buf, dims, axis, kernel, step, next);
        dims = next;
    }
    return Volume(dims, v.spacing() * static_cast<double>(step), std::move(buf));
}

} // namespace

Volume gaussian_downsample(const Volume &v) {
    const Dims d = v.dims();
    if (d.x < 4 || d.y < 4 || d.z < 4) {
        throw std::invalid_argument("gaussian_downsample: every dimension must be >= 4, got " + d.str());
    }
    return smooth_and_step(v, 1.0, 2);
}

Volume gaussian_smooth(const Volume &v, double sigma_voxels) {
    if (!(sigma_voxels > 0.0)) {
        return v;
    }
    return smooth_and_step(v, sigma_voxels, 1);
}

namespace {

// Cell lookup along one axis: lower index, fraction, and whether the
// coordinate lay inside [0, n-1] (derivative is zero when clamped).
struct AxisCell {
    int i0;
    int i1;
    double t;
    bool inside;
};

inline AxisCell axis_cell(double p, int n) {
    if (n == 1) {
        return {0, 0, 0.0, false};
    }
    const double hi = static_cast<double>(n - 1);
    bool inside = true;
    if (p < 0.0) {
        p = 0.0;
        inside = false;
    } else if (p > hi) {
        p = hi;
        inside = false;
    }
    int i0 = static_cast<int>(std::floor(p));
    if (i0 > n - 2) {
        i0 = n - 2;
    }
    return {i0, i0 + 1, p - i0, inside};
}

} // namespace

double trilinear_sample(const Volume &v, const Vec3 &p) {
    const Dims &d = v.dims();
    const AxisCell cx = axis_cell(p.x, d.x);
    const AxisCell cy = axis_cell(p.y, d.y);
    const AxisCell cz = axis_cell(p.z, d.z);
    const double c000 = v(cx.i0, cy.i0, cz.i0), c100 = v(cx.i1, cy.i0, cz.i0);
    const double c010 = v(cx.i0, cy.i1, cz.i0), c110 = v(cx.i1, cy.i1, cz.i0);
    const double c001 = v(cx.i0, cy.i0, cz.i1), c101 = v(cx.i1, cy.i0, cz.i1);
    const double c011 = v(cx.i0, cy.i1, cz.i1), c111 = v(cx.i1, cy.i1, cz.i1);
    const double c00 = c000 + cx.t * (c100 - c000);
    const double c10 = c010 + cx.t * (c110 - c010);
    const double c01 = c001 + cx.t * (c101 - c001);
    const double c11 = c011 + cx.t * (c111 - c011);
    const double c0 = c00 + cy.t * (c10 - c00);
    const double c1 = c01 + cy.t * (c11 - c01);
    return c0 + cz.t * (c1 - c0);
}

double trilinear_sample_gradient(const Volume &v, const Vec3 &p, Vec3 &grad) {
    const Dims &d = v.dims();
    const AxisCell cx = axis_cell(p.x, d.x);
    const AxisCell cy = axis_cell(p.y, d.y);
    const AxisCell cz = axis_cell(p.z, d.z);
    const double c000 = v(cx.i0, cy.i0, cz.i0), c100 = v(cx.i1, cy.i0, cz.i0);
    const double c010 = v(cx.i0, cy.i1, cz.i0), c110 = v(cx.i1, cy.i1, cz.i0);
    const double c001 = v(cx.i0, cy.i0, cz.i1), c101 = v(cx.i1, cy.i0, cz.i1);
    const double c011 = v(cx.i0, cy.i1, cz.i1), c111 = v(cx.i1, cy.i1, cz.i1);
    const double tx = cx.t, ty = cy.t, tz = cz.t;

    const double c00 = c000 + tx * (c100 - c000);
    const double c10 = c010 + tx * (c110 - c010);
    const double c01 = c001 + tx * (c101 - c001);
    const double c11 = c011 + tx * (c111 - c011);
    const double c0 = c00 + ty * (c10 - c00);
    const double c1 = c01 + ty * (c11 - c01);

    if (cx.inside) {
        const double dx00 = c100 - c000, dx10 = c110 - c010, dx01 = c101 - c001, dx11 = c111 - c011;
        const double dx0 = dx00 + ty * (dx10 - dx00);
        const double dx1 = dx01 + ty * (dx11 - dx01);
        grad.x = dx0 + tz * (dx1 - dx0);
    } else {
        grad.x = 0.0;
    }
    grad.y = cy.inside ? (c10 - c00) + tz * ((c11 - c01) - (c10 - c00)) : 0.0;
    grad.z = cz.inside ? c1 - c0 : 0.0;
    return c0 + tz * (c1 - c0);
}

namespace {

struct AxisTaps {
    int k[4];
    double w[4];
    double dw[4];
    bool inside;
};

AxisTaps axis_taps(double p, int n) {
    AxisTaps a{};
    const double hi = static_cast<double>(n - 1);
    a.inside = n > 1 && p >= 0.0 && p <= hi;
    p = std::clamp(p, 0.0, hi);
    const double fl = std::floor(p);
    const double t = p - fl;
    const int i = static_cast<int>(fl);
    for (int l = 0; l < 4; ++l) {
        a.k[l] = std::clamp(i - 1 + l, 0, n - 1);
        a.w[l] = basis_value(l, t);
        a.dw[l] = a.inside ? basis_deriv1(l, t) : 0.0;
    }
    return a;
}

} // namespace

double sample_gradient(const Volume &v, const Vec3 &p, Vec3 &grad, Interpolation kind) {
    if (kind == Interpolation::Linear) {
        return trilinear_sample_gradient(v, p, grad);
    }
    const Dims &d = v.dims();
    const AxisTaps ax = axis_taps(p.x, d.x);
    const AxisTaps ay = axis_taps(p.y, d.y);
    const AxisTaps az = axis_taps(p.z, d.z);
    double val = 0.0;
    grad = Vec3{};
    for (int n = 0; n < 4; ++n) {
        for (int m = 0; m < 4; ++m) {
            const std::size_t row = d.index(0, ay.k[m], az.k[n]);
            double sx = 0.0;
            double dsx = 0.0;
            for (int l = 0; l < 4; ++l) {
                const double r = v[row + static_cast<std::size_t>(ax.k[l])];
                sx += ax.w[l] * r;
                dsx += ax.dw[l] * r;
            }
            val += az.w[n] * ay.w[m] * sx;
            grad.x += az.w[n] * ay.w[m] * dsx;
            grad.y += az.w[n] * ay.dw[m] * sx;
            grad.z += az.dw[n] * ay.w[m] * sx;
        }
    }
    return val;
}

Vec3 trilinear_sample(const DisplacementField &f, const Vec3 &p) {
    const Dims &d = f.dims();
    const AxisCell cx = axis_cell(p.x, d.x);
    const AxisCell cy = axis_cell(p.y, d.y);
    const AxisCell cz = axis_cell(p.z, d.z);
    Vec3 out;
    const int xs[2] = {cx.i0, cx.i1};
    const int ys[2] = {cy.i0, cy.i1};
    const int zs[2] = {cz.i0, cz.i1};
    const double wx[2] = {1.0 - cx.t, cx.t};
    const double wy[2] = {1.0 - cy.t, cy.t};
    const double wz[2] = {1.0 - cz.t, cz.t};
    for (int c = 0; c < 2; ++c) {
        for (int b = 0; b < 2; ++b) {
            const double wzy = wz[c] * wy[b];
            for (int a = 0; a < 2; ++a) {
                out += f(xs[a], ys[b], zs[c]) * (wzy * wx[a]);
            }
        }
    }
    return out;
}

std::array<Volume, 3> image_gradient(const Volume &v) {
    const Dims d = v.dims();
    if (d.x < 2 || d.y < 2 || d.z < 2) {
        throw std::invalid_argument("image_gradient: every dimension must be >= 2, got " + d.str());
    }
    std::array<Volume, 3> g{Volume(d, v.spacing()), Volume(d, v.spacing()), Volume(d, v.spacing())};
    for (int k = 0; k < d.z; ++k) {
        for (int j = 0; j < d.y; ++j) {
            for (int i = 0; i < d.x; ++i) {
                const int pos[3] = {i, j, k};
                for (int axis = 0; axis < 3; ++axis) {
                    const int n = d[axis];
                    int lo[3] = {i, j, k};
                    int hi[3] = {i, j, k};
                    double span = 2.0;
                    if (pos[axis] == 0) {
                        hi[axis] = 1;
                        span = 1.0;
                    } else if (pos[axis] == n - 1) {
                        lo[axis] = n - 2;
                        span = 1.0;
                    } else {
                        lo[axis] = pos[axis] - 1;
                        hi[axis] = pos[axis] + 1;
                    }
                    g[static_cast<std::size_t>(axis)](i, j, k) = (v(hi[0], hi[1], hi[2]) - v(lo[0], lo[1], lo[2])) / span;
                }
            }
        }
    }
    return g;
}

} // namespace crreg
