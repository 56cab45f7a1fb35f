#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voxgrid/random.hpp"

namespace voxgrid::grid {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Placement of a lattice in world space (Å). Voxel (i,j,k) has its center at
/// origin + spacing * (i,j,k).
struct GridGeometry {
  Dims dims;
  double spacing = 1.0;
  Vec3 origin;

  Vec3 center_of(int i, int j, int k) const {
    return {origin.x + spacing * i, origin.y + spacing * j, origin.z + spacing * k};
  }
  /// World position of the lattice midpoint.
  Vec3 midpoint() const {
    return {origin.x + spacing * 0.5 * (dims.nx - 1), origin.y + spacing * 0.5 * (dims.ny - 1),
            origin.z + spacing * 0.5 * (dims.nz - 1)};
  }
  /// Cubic lattice of n^3 voxels whose midpoint sits exactly at `center`.
  static GridGeometry centered(Vec3 center, int n, double spacing);

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// C-channel scalar field on a regular isotropic lattice. Data is channel-major,
/// then z, y, x with x fastest. Immutable once constructed.
class VoxelGrid {
 public:
  /// Zero-filled grid.
  VoxelGrid(GridGeometry geometry, int channels);
  /// Takes ownership of `data`; throws ArgumentError on size mismatch,
  /// non-positive spacing or non-finite values.
  VoxelGrid(GridGeometry geometry, int channels, std::vector<float> data);

  const GridGeometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  double spacing() const { return geometry_.spacing; }
  const Vec3& origin() const { return geometry_.origin; }
  int channels() const { return channels_; }

  std::span<const float> data() const { return data_; }
  std::span<const float> channel(int c) const;
  /// Releases the raster (leaves this grid empty); used when concatenating.
  std::vector<float> take_data() && { return std::move(data_); }

  std::size_t index(int c, int i, int j, int k) const {
    const auto& d = geometry_.dims;
    return ((static_cast<std::size_t>(c) * d.nz + k) * d.ny + j) * d.nx + i;
  }
  float at(int c, int i, int j, int k) const { return data_[index(c, i, j, k)]; }

 private:
  GridGeometry geometry_;
  int channels_;
  std::vector<float> data_;
};

/// Proper rotation (orthonormal, det +1), stored row-major.
class Rotation {
 public:
  Rotation();  // identity
  /// Validates orthonormality and determinant within 1e-6.
  explicit Rotation(const std::array<double, 9>& m);
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation about_axis(Vec3 axis, double radians);

  double operator()(int r, int c) const { return m_[3 * r + c]; }
  const std::array<double, 9>& matrix() const { return m_; }
  Vec3 apply(Vec3 v) const;
  Vec3 apply_transpose(Vec3 v) const;
  Rotation transpose() const;
  Rotation operator*(const Rotation& rhs) const;

 private:
  struct Unchecked {};
  Rotation(const std::array<double, 9>& m, Unchecked) : m_(m) {}
  std::array<double, 9> m_;
};

/// Trilinear interpolation at a world point; zero outside the voxel-center
/// bounding box. Throws ArgumentError for a bad channel.
float trilinear_sample(const VoxelGrid& grid, int channel, Vec3 point);

/// Resamples every channel onto `target` by trilinear sampling at target centers.
VoxelGrid resample(const VoxelGrid& grid, const GridGeometry& target);

/// Per-voxel |grad f| in field units per Å. Central differences inside, one-sided
/// at faces. Throws ArgumentError when any dimension is below 2.
VoxelGrid gradient_magnitude(const VoxelGrid& grid);

/// Output voxel at p takes the source value at pivot + R^T (p - pivot).
VoxelGrid rotate_resample(const VoxelGrid& grid, const Rotation& rot, Vec3 pivot);

/// Uniform over SO(3) from a uniformly sampled unit quaternion.
Rotation random_rotation(Rng& rng);

/// Uniform over the 24 rotations of the cube.
Rotation random_octahedral_rotation(Rng& rng);

/// All 24 proper rotations mapping the coordinate axes onto themselves.
const std::vector<Rotation>& octahedral_rotations();

}  // namespace voxgrid::grid
