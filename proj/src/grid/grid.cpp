#include "voxgrid/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "voxgrid/errors.hpp"

namespace voxgrid::grid {
namespace {

// Fractional indices within this distance of an integer are treated as lying
// exactly on a voxel center.
constexpr double kSnap = 1e-9;

void validate_geometry(const GridGeometry& g) {
  if (!(g.spacing > 0.0) || !std::isfinite(g.spacing)) {
    throw ArgumentError("grid spacing must be positive and finite, got " +
                        std::to_string(g.spacing));
  }
  if (g.dims.nx < 1 || g.dims.ny < 1 || g.dims.nz < 1) {
    throw ArgumentError("grid dimensions must be positive");
  }
  if (!std::isfinite(g.origin.x) || !std::isfinite(g.origin.y) || !std::isfinite(g.origin.z)) {
    throw ArgumentError("grid origin must be finite");
  }
}

struct AxisWeights {
  int i0;
  int i1;
  double t;
};

// Returns false when u lies outside [0, n-1].
bool axis_weights(double u, int n, AxisWeights& out) {
  const double r = std::round(u);
  if (std::abs(u - r) <= kSnap) u = r;
  if (u < 0.0 || u > static_cast<double>(n - 1)) return false;
  if (n == 1) {
    out = {0, 0, 0.0};
    return true;
  }
  const int i0 = std::min(static_cast<int>(std::floor(u)), n - 2);
  out = {i0, i0 + 1, u - i0};
  return true;
}

// Trilinear interpolation of one channel at fractional index (u, v, w).
double sample_index(std::span<const float> chan, const Dims& d, double u, double v, double w) {
  AxisWeights ax, ay, az;
  if (!axis_weights(u, d.nx, ax) || !axis_weights(v, d.ny, ay) || !axis_weights(w, d.nz, az)) {
    return 0.0;
  }
  const auto at = [&](int i, int j, int k) -> double {
    return chan[(static_cast<std::size_t>(k) * d.ny + j) * d.nx + i];
  };
  const double sx = 1.0 - ax.t, sy = 1.0 - ay.t, sz = 1.0 - az.t;
  const double c00 = at(ax.i0, ay.i0, az.i0) * sx + at(ax.i1, ay.i0, az.i0) * ax.t;
  const double c10 = at(ax.i0, ay.i1, az.i0) * sx + at(ax.i1, ay.i1, az.i0) * ax.t;
  const double c01 = at(ax.i0, ay.i0, az.i1) * sx + at(ax.i1, ay.i0, az.i1) * ax.t;
  const double c11 = at(ax.i0, ay.i1, az.i1) * sx + at(ax.i1, ay.i1, az.i1) * ax.t;
  const double c0 = c00 * sy + c10 * ay.t;
  const double c1 = c01 * sy + c11 * ay.t;
  return c0 * sz + c1 * az.t;
}

}  // namespace

GridGeometry GridGeometry::centered(Vec3 center, int n, double spacing) {
  const double half = spacing * 0.5 * (n - 1);
  return {{n, n, n}, spacing, {center.x - half, center.y - half, center.z - half}};
}

VoxelGrid::VoxelGrid(GridGeometry geometry, int channels)
    : geometry_(geometry), channels_(channels) {
  validate_geometry(geometry_);
  if (channels_ < 1) throw ArgumentError("grid needs at least one channel");
  data_.assign(static_cast<std::size_t>(channels_) * geometry_.dims.voxels(), 0.0f);
}

VoxelGrid::VoxelGrid(GridGeometry geometry, int channels, std::vector<float> data)
    : geometry_(geometry), channels_(channels), data_(std::move(data)) {
  validate_geometry(geometry_);
  if (channels_ < 1) throw ArgumentError("grid needs at least one channel");
  const std::size_t expected = static_cast<std::size_t>(channels_) * geometry_.dims.voxels();
  if (data_.size() != expected) {
    throw ArgumentError("grid data has " + std::to_string(data_.size()) + " values, expected " +
                        std::to_string(expected));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw ArgumentError("grid data contains a non-finite value");
  }
}

std::span<const float> VoxelGrid::channel(int c) const {
  if (c < 0 || c >= channels_) {
    throw ArgumentError("channel " + std::to_string(c) + " out of range [0, " +
                        std::to_string(channels_) + ")");
  }
  const std::size_t n = geometry_.dims.voxels();
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * n, n);
}

Rotation::Rotation() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Rotation::Rotation(const std::array<double, 9>& m) : m_(m) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m_[3 * r + k] * m_[3 * c + k];
      if (std::abs(s - (r == c ? 1.0 : 0.0)) > 1e-6) {
        throw ArgumentError("rotation matrix is not orthonormal");
      }
    }
  }
  const double det = m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) -
                     m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
                     m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
  if (std::abs(det - 1.0) > 1e-6) throw ArgumentError("rotation matrix must have det +1");
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0)) throw ArgumentError("zero quaternion");
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  return Rotation({1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                   2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                   2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)},
                  Unchecked{});
}

Rotation Rotation::about_axis(Vec3 axis, double radians) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw ArgumentError("rotation axis must be non-zero");
  const double s = std::sin(radians / 2) / n;
  return from_quaternion(std::cos(radians / 2), axis.x * s, axis.y * s, axis.z * s);
}

Vec3 Rotation::apply(Vec3 v) const {
  return {m_[0] * v.x + m_[1] * v.y + m_[2] * v.z, m_[3] * v.x + m_[4] * v.y + m_[5] * v.z,
          m_[6] * v.x + m_[7] * v.y + m_[8] * v.z};
}

Vec3 Rotation::apply_transpose(Vec3 v) const {
  return {m_[0] * v.x + m_[3] * v.y + m_[6] * v.z, m_[1] * v.x + m_[4] * v.y + m_[7] * v.z,
          m_[2] * v.x + m_[5] * v.y + m_[8] * v.z};
}

Rotation Rotation::transpose() const {
  return Rotation({m_[0], m_[3], m_[6], m_[1], m_[4], m_[7], m_[2], m_[5], m_[8]}, Unchecked{});
}

Rotation Rotation::operator*(const Rotation& rhs) const {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) out[3 * r + c] += m_[3 * r + k] * rhs.m_[3 * k + c];
  return Rotation(out, Unchecked{});
}

float trilinear_sample(const VoxelGrid& grid, int channel, Vec3 point) {
  const auto chan = grid.channel(channel);
  const double h = grid.spacing();
  const Vec3& o = grid.origin();
  return static_cast<float>(
      sample_index(chan, grid.dims(), (point.x - o.x) / h, (point.y - o.y) / h, (point.z - o.z) / h));
}

VoxelGrid resample(const VoxelGrid& grid, const GridGeometry& target) {
  validate_geometry(target);
  const GridGeometry& src = grid.geometry();
  const double ratio = target.spacing / src.spacing;
  const Vec3 shift{(target.origin.x - src.origin.x) / src.spacing,
                   (target.origin.y - src.origin.y) / src.spacing,
                   (target.origin.z - src.origin.z) / src.spacing};
  const Dims& td = target.dims;
  std::vector<float> out(static_cast<std::size_t>(grid.channels()) * td.voxels());
  std::size_t n = 0;
  for (int c = 0; c < grid.channels(); ++c) {
    const auto chan = grid.channel(c);
    for (int k = 0; k < td.nz; ++k) {
      const double w = shift.z + k * ratio;
      for (int j = 0; j < td.ny; ++j) {
        const double v = shift.y + j * ratio;
        for (int i = 0; i < td.nx; ++i) {
          out[n++] = static_cast<float>(sample_index(chan, src.dims, shift.x + i * ratio, v, w));
        }
      }
    }
  }
  return VoxelGrid(target, grid.channels(), std::move(out));
}

VoxelGrid gradient_magnitude(const VoxelGrid& grid) {
  const Dims& d = grid.dims();
  if (d.nx < 2 || d.ny < 2 || d.nz < 2) {
    throw ArgumentError("gradient_magnitude needs at least 2 voxels per axis");
  }
  const double h = grid.spacing();
  const std::size_t sx = 1, sy = static_cast<std::size_t>(d.nx),
                    sz = static_cast<std::size_t>(d.nx) * d.ny;
  // Derivative along one axis at position `pos` of `n`, stride `s` in the raster.
  const auto deriv = [h](const float* f, int pos, int n, std::size_t s) -> double {
    if (pos == 0) return (static_cast<double>(f[s]) - f[0]) / h;
    if (pos == n - 1) return (static_cast<double>(f[0]) - f[-static_cast<std::ptrdiff_t>(s)]) / h;
    return (static_cast<double>(f[s]) - f[-static_cast<std::ptrdiff_t>(s)]) / (2.0 * h);
  };
  std::vector<float> out(grid.data().size());
  for (int c = 0; c < grid.channels(); ++c) {
    const float* base = grid.channel(c).data();
    float* dst = out.data() + static_cast<std::size_t>(c) * d.voxels();
    for (int k = 0; k < d.nz; ++k) {
      for (int j = 0; j < d.ny; ++j) {
        for (int i = 0; i < d.nx; ++i) {
          const std::size_t idx = k * sz + j * sy + i * sx;
          const float* f = base + idx;
          const double gx = deriv(f, i, d.nx, sx);
          const double gy = deriv(f, j, d.ny, sy);
          const double gz = deriv(f, k, d.nz, sz);
          dst[idx] = static_cast<float>(std::sqrt(gx * gx + gy * gy + gz * gz));
        }
      }
    }
  }
  return VoxelGrid(grid.geometry(), grid.channels(), std::move(out));
}

VoxelGrid rotate_resample(const VoxelGrid& grid, const Rotation& rot, Vec3 pivot) {
  const GridGeometry& g = grid.geometry();
  const double h = g.spacing;
  // Work in index space: src = p + (R^T - I)(p - pivot). The identity rotation
  // then maps every center onto itself without rounding.
  Vec3 piv{(pivot.x - g.origin.x) / h, (pivot.y - g.origin.y) / h, (pivot.z - g.origin.z) / h};
  for (int a = 0; a < 3; ++a) {
    const double r = std::round(piv[a]);
    if (std::abs(piv[a] - r) <= kSnap) piv[a] = r;
  }
  std::array<double, 9> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[3 * r + c] = rot(c, r) - (r == c ? 1.0 : 0.0);

  const Dims& d = g.dims;
  std::vector<float> out(grid.data().size());
  std::size_t n = 0;
  for (int c = 0; c < grid.channels(); ++c) {
    const auto chan = grid.channel(c);
    for (int k = 0; k < d.nz; ++k) {
      const double dz = k - piv.z;
      for (int j = 0; j < d.ny; ++j) {
        const double dy = j - piv.y;
        for (int i = 0; i < d.nx; ++i) {
          const double dx = i - piv.x;
          const double u = i + (a[0] * dx + a[1] * dy + a[2] * dz);
          const double v = j + (a[3] * dx + a[4] * dy + a[5] * dz);
          const double w = k + (a[6] * dx + a[7] * dy + a[8] * dz);
          out[n++] = static_cast<float>(sample_index(chan, d, u, v, w));
        }
      }
    }
  }
  return VoxelGrid(g, grid.channels(), std::move(out));
}

Rotation random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Rotation::from_quaternion(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2),
                                   b * std::sin(t3));
}

const std::vector<Rotation>& octahedral_rotations() {
  static const std::vector<Rotation> all = [] {
    std::vector<Rotation> out;
    std::array<int, 3> perm{0, 1, 2};
    do {
      for (int signs = 0; signs < 8; ++signs) {
        std::array<double, 9> m{};
        for (int r = 0; r < 3; ++r) m[3 * r + perm[r]] = (signs >> r & 1) ? -1.0 : 1.0;
        const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                           m[2] * (m[3] * m[7] - m[4] * m[6]);
        if (det > 0) out.emplace_back(m);
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
  }();
  return all;
}

Rotation random_octahedral_rotation(Rng& rng) {
  const auto& all = octahedral_rotations();
  return all[rng.below(all.size())];
}

}  // namespace voxgrid::grid
