#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "voxgrid/errors.hpp"
#include "voxgrid/grid.hpp"
#include "voxgrid/random.hpp"

using namespace voxgrid;
using namespace voxgrid::grid;

namespace {

GridGeometry cube(int n, double h, Vec3 origin = {0, 0, 0}) { return {{n, n, n}, h, origin}; }

template <typename F>
VoxelGrid field(const GridGeometry& g, F f) {
  std::vector<float> data(g.dims.voxels());
  std::size_t i = 0;
  for (int k = 0; k < g.dims.nz; ++k)
    for (int j = 0; j < g.dims.ny; ++j)
      for (int x = 0; x < g.dims.nx; ++x) data[i++] = static_cast<float>(f(g.center_of(x, j, k)));
  return VoxelGrid(g, 1, std::move(data));
}

}  // namespace

TEST(VoxelGrid, RasterLengthAndWorldCoordinates) {
  const GridGeometry g{{4, 3, 2}, 0.5, {1.0, -2.0, 3.0}};
  VoxelGrid v(g, 2);
  EXPECT_EQ(v.data().size(), 2u * 4 * 3 * 2);
  const Vec3 p = g.center_of(3, 2, 1);
  EXPECT_EQ(p.x, 1.0 + 0.5 * 3);
  EXPECT_EQ(p.y, -2.0 + 0.5 * 2);
  EXPECT_EQ(p.z, 3.0 + 0.5 * 1);
}

TEST(VoxelGrid, RejectsBadGeometryAndData) {
  EXPECT_THROW(VoxelGrid(cube(4, 0.0), 1), ArgumentError);
  EXPECT_THROW(VoxelGrid(cube(4, 1.0), 0), ArgumentError);
  EXPECT_THROW(VoxelGrid(cube(2, 1.0), 1, std::vector<float>(7)), ArgumentError);
  std::vector<float> bad(8, 0.0f);
  bad[3] = std::nanf("");
  EXPECT_THROW(VoxelGrid(cube(2, 1.0), 1, bad), ArgumentError);
}

TEST(TrilinearSample, ConstantFieldIsReproduced) {
  const auto g = field(cube(6, 0.7, {-1, 2, 0.5}), [](Vec3) { return 5.0; });
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vec3 p{-1 + rng.uniform(0, 3.5), 2 + rng.uniform(0, 3.5), 0.5 + rng.uniform(0, 3.5)};
    EXPECT_FLOAT_EQ(trilinear_sample(g, 0, p), 5.0f);
  }
}

TEST(TrilinearSample, VoxelCenterReturnsStoredValue) {
  const auto geo = cube(5, 0.25, {1, 1, 1});
  const auto g = field(geo, [](Vec3 p) { return std::sin(p.x) + p.y * p.z; });
  EXPECT_EQ(trilinear_sample(g, 0, geo.center_of(2, 3, 1)), g.at(0, 2, 3, 1));
}

TEST(TrilinearSample, MidpointOfLinearFieldIsMean) {
  const auto geo = cube(5, 0.5);
  const auto g = field(geo, [](Vec3 p) { return p.x; });
  const Vec3 mid = 0.5 * (geo.center_of(1, 2, 2) + geo.center_of(2, 2, 2));
  EXPECT_FLOAT_EQ(trilinear_sample(g, 0, mid), 0.5f * (g.at(0, 1, 2, 2) + g.at(0, 2, 2, 2)));
}

TEST(TrilinearSample, OutsideIsZeroAndBadChannelThrows) {
  const auto g = field(cube(4, 1.0), [](Vec3) { return 2.0; });
  EXPECT_EQ(trilinear_sample(g, 0, {-0.5, 1, 1}), 0.0f);
  EXPECT_EQ(trilinear_sample(g, 0, {1, 1, 3.01}), 0.0f);
  EXPECT_THROW(trilinear_sample(g, 1, {1, 1, 1}), ArgumentError);
  EXPECT_THROW(trilinear_sample(g, -1, {1, 1, 1}), ArgumentError);
}

TEST(TrilinearSample, IsConvexCombinationOfNeighbours) {
  Rng rng(11);
  std::vector<float> data(4 * 4 * 4);
  for (auto& v : data) v = static_cast<float>(rng.uniform(-3, 3));
  const VoxelGrid g(cube(4, 1.0), 1, data);
  for (int t = 0; t < 500; ++t) {
    const Vec3 p{rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3)};
    const int i = std::min(2, int(p.x)), j = std::min(2, int(p.y)), k = std::min(2, int(p.z));
    float lo = 1e9f, hi = -1e9f;
    for (int c = 0; c < 8; ++c) {
      const float v = g.at(0, i + (c & 1), j + ((c >> 1) & 1), k + (c >> 2));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const float s = trilinear_sample(g, 0, p);
    EXPECT_GE(s, lo - 1e-5f);
    EXPECT_LE(s, hi + 1e-5f);
  }
}

TEST(Resample, IdentityGeometryIsBitwiseEqual) {
  Rng rng(5);
  std::vector<float> data(2 * 5 * 5 * 5);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  const VoxelGrid g(cube(5, 0.3, {0.1, 0.2, 0.3}), 2, data);
  const VoxelGrid r = resample(g, g.geometry());
  ASSERT_EQ(r.channels(), 2);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(r.data()[i], g.data()[i]);
}

TEST(Resample, ConstantFieldInsideSourceStaysConstant) {
  const auto g = field(cube(8, 1.0), [](Vec3) { return -1.5; });
  const VoxelGrid r = resample(g, cube(10, 0.5, {1.2, 1.1, 1.3}));
  for (float v : r.data()) EXPECT_FLOAT_EQ(v, -1.5f);
}

TEST(Resample, UpsampledRampMatchesAnalyticValues) {
  const auto src = field(cube(6, 1.0), [](Vec3 p) { return p.x; });
  const GridGeometry target = cube(11, 0.5);
  const VoxelGrid r = resample(src, target);
  for (int k = 0; k < 11; ++k)
    for (int j = 0; j < 11; ++j)
      for (int i = 0; i < 11; ++i) EXPECT_NEAR(r.at(0, i, j, k), target.center_of(i, j, k).x, 1e-6);
}

TEST(GradientMagnitude, ConstantFieldIsExactlyZero) {
  const auto g = gradient_magnitude(field(cube(5, 0.25), [](Vec3) { return 7.0; }));
  for (float v : g.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GradientMagnitude, LinearRampGivesSlopeInsideAndIsNonNegative) {
  const auto g = gradient_magnitude(field(cube(6, 0.25), [](Vec3 p) { return 3.0 * p.x; }));
  for (int k = 1; k < 5; ++k)
    for (int j = 1; j < 5; ++j)
      for (int i = 1; i < 5; ++i) EXPECT_NEAR(g.at(0, i, j, k), 3.0f, 1e-5);
  for (float v : g.data()) EXPECT_GE(v, 0.0f);
}

TEST(GradientMagnitude, RejectsThinGrids) {
  EXPECT_THROW(gradient_magnitude(VoxelGrid({{1, 4, 4}, 1.0, {}}, 1)), ArgumentError);
}

TEST(GradientMagnitude, GaussianErrorConvergesAtSecondOrder) {
  // |grad exp(-r^2/2)| = r exp(-r^2/2) for sigma = 1 Å.
  const auto max_err = [](int n, double h) {
    const double half = h * (n - 1) / 2;
    const GridGeometry geo = cube(n, h, {-half, -half, -half});
    const auto gm = gradient_magnitude(field(geo, [](Vec3 p) { return std::exp(-p.dot(p) / 2); }));
    double err = 0.0;
    for (int k = 1; k < n - 1; ++k)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) {
          const Vec3 p = geo.center_of(i, j, k);
          const double r = p.norm();
          err = std::max(err, std::abs(gm.at(0, i, j, k) - r * std::exp(-r * r / 2)));
        }
    return err;
  };
  const double coarse = max_err(32, 0.25);
  const double fine = max_err(63, 0.125);
  EXPECT_GT(coarse / fine, 3.5);
}

TEST(Rotation, ValidatesMatrices) {
  EXPECT_THROW(Rotation({1, 0, 0, 0, 1, 0, 0, 0, -1}), ArgumentError);
  EXPECT_THROW(Rotation({2, 0, 0, 0, 1, 0, 0, 0, 1}), ArgumentError);
  EXPECT_NO_THROW(Rotation({0, -1, 0, 1, 0, 0, 0, 0, 1}));
}

TEST(RandomRotation, IsOrthonormalWithUnitDeterminant) {
  Rng rng(42);
  for (int t = 0; t < 200; ++t) {
    const Rotation r = random_rotation(rng);
    const auto& m = r.matrix();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) dot += m[3 * a + c] * m[3 * b + c];
        EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-6);
      }
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    EXPECT_NEAR(det, 1.0, 1e-6);
  }
}

TEST(RandomRotation, ImagesOfAnAxisAverageToZero) {
  Rng rng(7);
  Vec3 sum{};
  for (int t = 0; t < 10000; ++t) sum = sum + random_rotation(rng).apply({0, 0, 1});
  EXPECT_LT((1.0 / 10000 * sum).norm(), 0.05);
}

TEST(OctahedralRotations, TwentyFourDistinctAxisPermutations) {
  const auto& all = octahedral_rotations();
  ASSERT_EQ(all.size(), 24u);
  for (std::size_t a = 0; a < all.size(); ++a) {
    for (double v : all[a].matrix()) EXPECT_TRUE(v == 0.0 || v == 1.0 || v == -1.0);
    for (std::size_t b = a + 1; b < all.size(); ++b) EXPECT_NE(all[a].matrix(), all[b].matrix());
  }
}

TEST(RotateResample, IdentityIsBitwiseEqual) {
  Rng rng(2);
  std::vector<float> data(6 * 6 * 6);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  const VoxelGrid g(cube(6, 0.25, {1, 2, 3}), 1, data);
  const VoxelGrid r = rotate_resample(g, Rotation(), g.geometry().midpoint());
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(r.data()[i], data[i]);
}

TEST(RotateResample, QuarterTurnMovesImpulseToPermutedIndex) {
  const GridGeometry geo = cube(7, 0.5, {-1.5, -1.5, -1.5});
  std::vector<float> data(geo.dims.voxels(), 0.0f);
  VoxelGrid proto(geo, 1);
  data[proto.index(0, 4, 3, 3)] = 1.0f;  // one voxel along +x from the pivot
  const VoxelGrid g(geo, 1, data);
  const VoxelGrid r = rotate_resample(g, Rotation::about_axis({0, 0, 1}, std::numbers::pi / 2),
                                      geo.center_of(3, 3, 3));
  EXPECT_NEAR(r.at(0, 3, 4, 3), 1.0f, 1e-6);
  double total = 0.0;
  for (float v : r.data()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(RotateResample, OctahedralRotationsConserveImpulse) {
  const GridGeometry geo = cube(9, 0.25);
  const Vec3 pivot = geo.center_of(4, 4, 4);
  VoxelGrid proto(geo, 1);
  std::vector<float> data(geo.dims.voxels(), 0.0f);
  data[proto.index(0, 6, 5, 3)] = 1.0f;
  const VoxelGrid g(geo, 1, data);
  for (const Rotation& rot : octahedral_rotations()) {
    const VoxelGrid r = rotate_resample(g, rot, pivot);
    const Vec3 dest = pivot + rot.apply(geo.center_of(6, 5, 3) - pivot);
    const int i = int(std::lround(dest.x / 0.25)), j = int(std::lround(dest.y / 0.25)),
              k = int(std::lround(dest.z / 0.25));
    EXPECT_NEAR(r.at(0, i, j, k), 1.0f, 1e-6);
    double total = 0.0;
    for (float v : r.data()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(RotateResample, RoundTripOnSmoothFieldIsClose) {
  // The Gaussian spans ~30 voxels so two trilinear passes stay below 1e-3;
  // voxels outside the inscribed sphere lose support to zero fill.
  const int n = 48;
  const double h = 0.05, half = h * (n - 1) / 2, sigma = 1.5;
  const GridGeometry geo = cube(n, h, {-half, -half, -half});
  const auto g = field(geo, [&](Vec3 p) { return std::exp(-p.dot(p) / (2 * sigma * sigma)); });
  Rng rng(9);
  for (int t = 0; t < 3; ++t) {
    const Rotation rot = random_rotation(rng);
    const VoxelGrid back = rotate_resample(rotate_resample(g, rot, {0, 0, 0}), rot.transpose(), {0, 0, 0});
    double err = 0.0;
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          if (geo.center_of(i, j, k).norm() < half - 2 * h) {
            err = std::max(err, std::abs(double(back.at(0, i, j, k)) - g.at(0, i, j, k)));
          }
        }
    EXPECT_LT(err, 1e-3) << "trial " << t;
  }
}
