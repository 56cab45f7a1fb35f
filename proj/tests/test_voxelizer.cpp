#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "voxgrid/chem.hpp"
#include "voxgrid/density_io.hpp"
#include "voxgrid/errors.hpp"
#include "voxgrid/random.hpp"
#include "voxgrid/voxelizer.hpp"

using namespace voxgrid;
using namespace voxgrid::voxel;
using chem::Atom;
using chem::Role;
using grid::GridGeometry;
using grid::Vec3;

namespace {

GridGeometry centered(int n, Vec3 c = {0, 0, 0}) { return GridGeometry::centered(c, n, 0.25); }

chem::Structure molecule(std::vector<Atom> atoms, std::string id = "m") {
  chem::Structure s;
  s.id = std::move(id);
  s.atoms = std::move(atoms);
  return s;
}

double sum(const grid::VoxelGrid& g, int c = 0) {
  double t = 0.0;
  for (float v : g.channel(c)) t += v;
  return t;
}

}  // namespace

TEST(ChannelSchemes, PdbbindOrdering) {
  const auto s = pdbbind_schemes();
  const std::vector<std::string> lig{"C", "O", "N", "S", "F", "Cl", "P"};
  const std::vector<std::string> poc{"C", "O", "N", "S"};
  ASSERT_EQ(s.ligand.channels(), 7);
  ASSERT_EQ(s.pocket.channels(), 4);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(s.ligand.channel_of(lig[i]), i);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(s.pocket.channel_of(poc[i]), i);
  EXPECT_TRUE(s.ligand.ignores("H"));
}

TEST(ChannelSchemes, Qm9OrderingAndShapeVariant) {
  const auto q = qm9_scheme();
  const std::vector<std::string> el{"H", "C", "N", "O", "F"};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(q.channel_of(el[i]), i);
  EXPECT_EQ(q.channel_of("S"), -1);
  const auto shape = q.shape_only();
  EXPECT_EQ(shape.channels(), 1);
  for (const auto& e : el) EXPECT_EQ(shape.channel_of(e), 0);
  EXPECT_EQ(pdbbind_schemes().ligand.shape_only().channel_of("Cl"), 0);
}

TEST(SplatAtoms, UnknownElementInAtomTypeModeNamesElementAndStructure) {
  const std::vector<Atom> atoms{{"S", {0, 0, 0}, Role::Ligand}};
  try {
    splat_atoms(atoms, qm9_scheme(), centered(8), {}, "mol42");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'S'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("mol42"), std::string::npos);
  }
  EXPECT_NO_THROW(splat_atoms(atoms, qm9_scheme().shape_only(), centered(8)));
}

TEST(SplatAtoms, PeakIsOneAtAtomVoxelAndFaceNeighboursAgree) {
  const GridGeometry g = centered(9);
  const Vec3 c = g.center_of(4, 4, 4);
  const auto grid = splat_atoms(std::vector<Atom>{{"C", c}}, qm9_scheme().shape_only(), g);
  EXPECT_FLOAT_EQ(grid.at(0, 4, 4, 4), 1.0f);
  const float ref = grid.at(0, 5, 4, 4);
  EXPECT_GT(ref, 0.0f);
  EXPECT_EQ(grid.at(0, 3, 4, 4), ref);
  EXPECT_EQ(grid.at(0, 4, 5, 4), ref);
  EXPECT_EQ(grid.at(0, 4, 3, 4), ref);
  EXPECT_EQ(grid.at(0, 4, 4, 5), ref);
  EXPECT_EQ(grid.at(0, 4, 4, 3), ref);
  // sigma = r_vdw(C) / 2 = 0.85 Å
  EXPECT_NEAR(ref, std::exp(-0.25 * 0.25 / (2 * 0.85 * 0.85)), 1e-6);
}

TEST(SplatAtoms, TwoIdenticalAtomsAreTheSumOfSingles) {
  const GridGeometry g = centered(16);
  const Atom a{"N", {0.13, -0.2, 0.31}};
  const auto one = splat_atoms(std::vector<Atom>{a}, qm9_scheme(), g);
  const auto two = splat_atoms(std::vector<Atom>{a, a}, qm9_scheme(), g);
  for (std::size_t i = 0; i < one.data().size(); ++i) EXPECT_EQ(two.data()[i], 2.0f * one.data()[i]);
}

TEST(SplatAtoms, InteriorMassMatchesGaussianIntegral) {
  Rng rng(4);
  const GridGeometry g = centered(40);
  for (const char* el : {"H", "C", "N", "O", "F"}) {
    const Vec3 p{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const auto grid = splat_atoms(std::vector<Atom>{{el, p}}, qm9_scheme(), g);
    const double sigma = splat_sigma(el, qm9_scheme(), {});
    const double expected = std::pow(2 * std::numbers::pi * sigma * sigma, 1.5);
    const double mass = sum(grid, qm9_scheme().channel_of(el)) * std::pow(0.25, 3);
    EXPECT_NEAR(mass / expected, 1.0, 0.01) << el;
  }
}

TEST(SplatAtoms, ChannelSumEqualsShapeOnlyForFixedWidth) {
  Rng rng(8);
  std::vector<Atom> atoms;
  const char* els[] = {"H", "C", "N", "O", "F"};
  for (int i = 0; i < 12; ++i) {
    atoms.push_back({els[i % 5], {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}});
  }
  SplatParams p;
  p.fixed_sigma = 0.7;
  const GridGeometry g = centered(24);
  const auto typed = splat_atoms(atoms, qm9_scheme(), g, p);
  const auto shape = splat_atoms(atoms, qm9_scheme().shape_only(), g, p);
  for (std::size_t v = 0; v < g.dims.voxels(); ++v) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) s += typed.channel(c)[v];
    // Each channel is rounded to f32 separately, so allow a few ulps.
    EXPECT_NEAR(s, shape.data()[v], 4e-7 * std::max(1.0, s));
  }
}

namespace {

// Max-abs gap between splatting rotated atoms and rotating the splatted grid.
double equivariance_error(const std::vector<Atom>& atoms, const grid::Rotation& rot, const GridGeometry& g) {
  const Vec3 pivot = g.midpoint();
  const auto direct = splat_atoms(chem::rotate_atoms(atoms, rot, pivot), qm9_scheme(), g);
  const auto resampled = grid::rotate_resample(splat_atoms(atoms, qm9_scheme(), g), rot, pivot);
  double err = 0.0;
  for (std::size_t i = 0; i < direct.data().size(); ++i) {
    err = std::max(err, std::abs(double(direct.data()[i]) - resampled.data()[i]));
  }
  return err;
}

}  // namespace

TEST(SplatAtoms, RotationEquivarianceAgainstResampledGrid) {
  // 0.125 Å spacing: trilinear error on a sigma = 0.85 Å Gaussian is about
  // 3 h^2 / (8 sigma^2) of the peak, ~0.01 here and ~0.04 at 0.25 Å.
  Rng rng(21);
  const GridGeometry g = GridGeometry::centered({0, 0, 0}, 80, 0.125);
  for (int t = 0; t < 10; ++t) {
    // Bonded-like layout: atoms at least 1.3 Å apart, as in real molecules.
    std::vector<Atom> atoms;
    while (atoms.size() < 5) {
      const Vec3 p{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
      bool clear = true;
      for (const auto& a : atoms) {
        const Vec3 d = a.position - p;
        clear = clear && d.x * d.x + d.y * d.y + d.z * d.z >= 1.3 * 1.3;
      }
      if (clear) atoms.push_back({"C", p});
    }
    EXPECT_LT(equivariance_error(atoms, grid::random_rotation(rng), g), 2e-2) << "trial " << t;
  }
}

TEST(SplatAtoms, EquivarianceErrorIsSecondOrderInSpacing) {
  Rng rng(22);
  const std::vector<Atom> atoms{{"C", {0.31, -0.12, 0.07}}};
  const auto rot = grid::random_rotation(rng);
  const double coarse = equivariance_error(atoms, rot, GridGeometry::centered({0, 0, 0}, 40, 0.25));
  const double fine = equivariance_error(atoms, rot, GridGeometry::centered({0, 0, 0}, 80, 0.125));
  const double h = 0.25, sigma = 0.85;
  EXPECT_LT(coarse, 3 * h * h / (8 * sigma * sigma) * 1.1);
  EXPECT_GT(coarse / fine, 3.0);
}

TEST(CenterOfMass, SimpleCases) {
  const std::vector<Atom> one{{"O", {1, 2, 3}}};
  EXPECT_EQ(chem::center_of_mass(one), (Vec3{1, 2, 3}));
  const std::vector<Atom> pair{{"C", {1, 0, 0}}, {"C", {-1, 0, 0}}};
  const Vec3 c = chem::center_of_mass(pair);
  EXPECT_NEAR(c.x, 0.0, 1e-15);
  const std::vector<Atom> co{{"C", {0, 0, 0}}, {"O", {1.13, 0, 0}}};
  EXPECT_NEAR(chem::center_of_mass(co).x, 1.13 * 15.999 / (12.011 + 15.999), 1e-12);
  EXPECT_NEAR(chem::center_of_mass(co).x, 0.6454, 1e-4);
  EXPECT_THROW(chem::center_of_mass(std::vector<Atom>{}), ArgumentError);
}

TEST(VoxelizeSample, SingleAtomSitsAtGridCentre) {
  const auto s = molecule({{"C", {0, 0, 0}}});
  const auto grids = voxelize_sample(s, Task::Molecule, ReprMode::AtomType);
  ASSERT_EQ(grids.size(), 1u);
  const auto& g = grids[0];
  EXPECT_EQ(g.channels(), 5);
  EXPECT_EQ(g.dims(), (grid::Dims{32, 32, 32}));
  for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(g.origin()[a], -0.25 * 31 / 2);
}

TEST(VoxelizeSample, ComplexYieldsSevenAndFourChannelGrids) {
  chem::Structure s = molecule({{"C", {0, 0, 0}}, {"Cl", {1.7, 0, 0}}, {"H", {0, 1, 0}},
                                {"N", {4, 0, 0}, Role::Pocket}, {"S", {-4, 1, 0}, Role::Pocket}});
  const auto grids = voxelize_sample(s, Task::Complex, ReprMode::AtomType);
  ASSERT_EQ(grids.size(), 2u);
  EXPECT_EQ(grids[0].channels(), 7);
  EXPECT_EQ(grids[1].channels(), 4);
  EXPECT_EQ(grids[0].dims(), (grid::Dims{64, 64, 64}));
  EXPECT_EQ(grids[0].geometry(), grids[1].geometry());
  EXPECT_GT(sum(grids[1], 2), 0.0);  // N in pocket channel 2
  EXPECT_EQ(sample_channels(Task::Complex, ReprMode::ShapeOnly), (std::vector<int>{1, 1}));
  EXPECT_EQ(sample_channels(Task::Molecule, ReprMode::GradMag), (std::vector<int>{1}));
}

TEST(VoxelizeSample, DensityModesNeedMaps) {
  const auto s = molecule({{"C", {0, 0, 0}}});
  EXPECT_THROW(voxelize_sample(s, Task::Molecule, ReprMode::Density), ConfigError);
  EXPECT_THROW(voxelize_sample(s, Task::Molecule, ReprMode::GradMag), ConfigError);
}

TEST(VoxelizeSample, ConstantMapGivesConstantDensityAndZeroGradient) {
  const auto s = molecule({{"C", {0.3, 0, 0}}});
  const GridGeometry big = centered(48);
  const io::DensityMap map(grid::VoxelGrid(big, 1, std::vector<float>(big.dims.voxels(), 0.75f)), "synthetic");
  const auto dens = voxelize_sample(s, Task::Molecule, ReprMode::Density, {&map});
  for (float v : dens[0].data()) EXPECT_FLOAT_EQ(v, 0.75f);
  const auto grad = voxelize_sample(s, Task::Molecule, ReprMode::GradMag, {&map});
  for (float v : grad[0].data()) EXPECT_NEAR(v, 0.0f, 1e-5);
}

TEST(VoxelizeSample, GradMagOfAtomDensityPeaksAtSigma) {
  const auto s = molecule({{"O", {0, 0, 0}}});
  const GridGeometry big = centered(48);
  const auto map = io::synth_density(s, big);
  const auto g = voxelize_sample(s, Task::Molecule, ReprMode::GradMag, {&map})[0];
  float best = -1.0f;
  Vec3 at{};
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) {
        if (g.at(0, i, j, k) > best) {
          best = g.at(0, i, j, k);
          at = g.geometry().center_of(i, j, k);
        }
      }
  EXPECT_NEAR(at.norm(), 0.4, 0.4 * 0.15);
}

TEST(VoxelizeSample, Deterministic) {
  const auto s = molecule({{"C", {0.1, 0.2, 0}}, {"O", {1.2, 0.1, 0.3}}, {"H", {-0.9, 0.3, 0.1}}});
  const auto a = voxelize_sample(s, Task::Molecule, ReprMode::AtomType);
  const auto b = voxelize_sample(s, Task::Molecule, ReprMode::AtomType);
  EXPECT_TRUE(std::equal(a[0].data().begin(), a[0].data().end(), b[0].data().begin()));
}

TEST(VoxelizeSample, ParsesModeNames) {
  EXPECT_EQ(parse_repr("atomtype"), ReprMode::AtomType);
  EXPECT_EQ(parse_repr("shape"), ReprMode::ShapeOnly);
  EXPECT_EQ(parse_repr("density"), ReprMode::Density);
  EXPECT_EQ(parse_repr("gradmag"), ReprMode::GradMag);
  EXPECT_THROW(parse_repr("voxels"), ArgumentError);
  EXPECT_EQ(parse_task("complex"), Task::Complex);
  EXPECT_THROW(parse_task("protein"), ArgumentError);
}
