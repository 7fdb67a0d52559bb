#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crreg/types.hpp"

namespace crreg {

/// Scalar 3-D image, x fastest. Spacing is in millimetres.
class Volume {
  public:
    Volume() = default;
    Volume(Dims dims, Vec3 spacing = {1.0, 1.0, 1.0}, double fill = 0.0);
    Volume(Dims dims, Vec3 spacing, std::vector<double> data);

    const Dims &dims() const { return dims_; }
    const Vec3 &spacing() const { return spacing_; }
    std::size_t size() const { return data_.size(); }

    double operator()(int i, int j, int k) const { return data_[dims_.index(i, j, k)]; }
    double &operator()(int i, int j, int k) { return data_[dims_.index(i, j, k)]; }
    double operator[](std::size_t idx) const { return data_[idx]; }
    double &operator[](std::size_t idx) { return data_[idx]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    std::pair<double, double> min_max() const;

  private:
    Dims dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    std::vector<double> data_;
};

/// Per-voxel 3-vector field (voxel units of its own lattice).
class DisplacementField {
  public:
    DisplacementField() = default;
    explicit DisplacementField(Dims dims, Vec3 spacing = {1.0, 1.0, 1.0});
    DisplacementField(Dims dims, Vec3 spacing, std::vector<Vec3> data);

    const Dims &dims() const { return dims_; }
    const Vec3 &spacing() const { return spacing_; }
    std::size_t size() const { return data_.size(); }

    const Vec3 &operator()(int i, int j, int k) const { return data_[dims_.index(i, j, k)]; }
    Vec3 &operator()(int i, int j, int k) { return data_[dims_.index(i, j, k)]; }
    const Vec3 &operator[](std::size_t idx) const { return data_[idx]; }
    Vec3 &operator[](std::size_t idx) { return data_[idx]; }

    std::span<const Vec3> data() const { return data_; }
    std::span<Vec3> data() { return data_; }

  private:
    Dims dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    std::vector<Vec3> data_;
};

// ---------------------------------------------------------------------------
// File I/O: ASCII `key = value` header plus a raw little-endian payload.

enum class ElementType { Float32, Int16, UInt8 };

std::string to_string(ElementType t);
ElementType parse_element_type(const std::string &s);

struct VolumeHeader {
    Dims dim_size{};
    Vec3 spacing{1.0, 1.0, 1.0};
    ElementType element_type = ElementType::Float32;
    std::string byte_order = "little";
    int components = 1;
    std::string data_file;
};

VolumeHeader read_header(const std::filesystem::path &header_path);
void write_header(const std::filesystem::path &header_path, const VolumeHeader &h);

/// Loads a scalar volume. Throws std::runtime_error naming the offending key
/// or value on malformed input.
Volume load_volume(const std::filesystem::path &header_path);

/// Writes `<header_path>` and a payload next to it (header stem + ".raw").
/// Values are converted to `type`; integer types are rounded and saturated.
void save_volume(const std::filesystem::path &header_path, const Volume &v, ElementType type = ElementType::Float32);

DisplacementField load_field(const std::filesystem::path &header_path);
void save_field(const std::filesystem::path &header_path, const DisplacementField &f);

// ---------------------------------------------------------------------------
// Image operations. All pure.

struct IntensityWindow {
    double lo = 0.0;
    double hi = 1.0;
};

/// Linear map of [min,max] (or the clamped window) onto [0, max_bin].
/// A constant input maps to all zeros.
Volume normalize_intensity(const Volume &v, int max_bin, std::optional<IntensityWindow> window = std::nullopt);

/// Gaussian smoothing (sigma 1 voxel, radius 3, border-renormalised) followed by
/// 2x decimation per axis; output extent is ceil(n/2), spacing doubles.
Volume gaussian_downsample(const Volume &v);

/// Separable Gaussian smoothing with border renormalisation.
Volume gaussian_smooth(const Volume &v, double sigma_voxels);

/// Trilinear interpolation with per-axis coordinate clamping to [0, n-1].
double trilinear_sample(const Volume &v, const Vec3 &p);

/// Trilinear value and the exact derivative of the interpolant at p.
/// Axes where p was clamped report a zero derivative.
double trilinear_sample_gradient(const Volume &v, const Vec3 &p, Vec3 &grad);

Vec3 trilinear_sample(const DisplacementField &f, const Vec3 &p);

/// Resampling kernels for the warped moving image. CubicBSpline applies the
/// (non-interpolating) cubic B-spline kernel to the samples directly: the
/// result stays within the sample range and is twice continuously
/// differentiable in p.
enum class Interpolation { Linear, CubicBSpline };

/// Value and exact derivative of the chosen kernel at p. Coordinates are
/// clamped to [0, n-1] per axis; clamped axes report a zero derivative.
double sample_gradient(const Volume &v, const Vec3 &p, Vec3 &grad, Interpolation kind);

/// Central differences in the interior, one-sided at the borders
/// (intensity per voxel).
std::array<Volume, 3> image_gradient(const Volume &v);

} // namespace crreg
