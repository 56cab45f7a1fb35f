#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxgrid/chem.hpp"
#include "voxgrid/density_map.hpp"
#include "voxgrid/grid.hpp"

namespace voxgrid::voxel {

enum class SchemeMode { AtomType, ShapeOnly };

/// Element-to-channel assignment. Elements listed in `ignored` are skipped
/// silently (hydrogens for the complex schemes); any other element outside the
/// map is a data error in atom-type mode.
class ChannelScheme {
 public:
  ChannelScheme(SchemeMode mode, std::vector<std::string> elements,
                std::set<std::string> ignored = {});

  SchemeMode mode() const { return mode_; }
  int channels() const { return mode_ == SchemeMode::ShapeOnly ? 1 : static_cast<int>(order_.size()); }
  const std::vector<std::string>& elements() const { return order_; }
  bool ignores(std::string_view element) const;
  /// Channel for `element`, or -1 when not covered.
  int channel_of(std::string_view element) const;
  /// Same scheme collapsed to a single channel.
  ChannelScheme shape_only() const;

 private:
  SchemeMode mode_;
  std::vector<std::string> order_;
  std::map<std::string, int, std::less<>> index_;
  std::set<std::string, std::less<>> ignored_;
};

struct SchemePair {
  ChannelScheme ligand;
  ChannelScheme pocket;
};

/// Ligand C,O,N,S,F,Cl,P and pocket C,O,N,S; hydrogens ignored.
SchemePair pdbbind_schemes();
/// H,C,N,O,F.
ChannelScheme qm9_scheme();

enum class ReprMode { AtomType, ShapeOnly, Density, GradMag };

std::string_view to_string(ReprMode mode);
/// Accepts "atomtype", "shape", "density", "gradmag" (plus the long forms).
ReprMode parse_repr(std::string_view text);

struct SplatParams {
  /// Support radius in units of the atom's Gaussian width.
  double truncation_sigmas = 4.0;
  /// Overrides the per-element width r_vdw/2 when set.
  std::optional<double> fixed_sigma;
};

/// Gaussian width used for `element` under `params` and `scheme`. Shape-only
/// schemes treat every atom as carbon.
double splat_sigma(std::string_view element, const ChannelScheme& scheme, const SplatParams& params);

/// Sums exp(-d^2 / 2 sigma^2) of every atom into its channel for voxels within
/// the truncation radius. `structure_id` is used in error messages.
grid::VoxelGrid splat_atoms(std::span<const chem::Atom> atoms, const ChannelScheme& scheme,
                            const grid::GridGeometry& geometry, const SplatParams& params = {},
                            std::string_view structure_id = {});

enum class Task { Complex, Molecule };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

/// 64^3 for complexes, 32^3 for molecules, both at 0.25 Å, midpoint at `center`.
grid::GridGeometry task_geometry(Task task, grid::Vec3 center);

struct SampleMaps {
  const io::DensityMap* ligand = nullptr;
  /// Complexes only; when absent the ligand map also feeds the pocket grid.
  const io::DensityMap* pocket = nullptr;
};

struct VoxelizeOptions {
  SplatParams splat;
  /// Rotation applied about the grid center (augmentation). Atom modes rotate
  /// coordinates before splatting; density modes rotate the resampled map.
  std::optional<grid::Rotation> rotation;
};

/// Voxelizes one sample. Complexes yield [ligand, pocket] grids, molecules a
/// single grid. The geometry is centered on the ligand's (molecule's) center of
/// mass. Throws ConfigError when a density mode has no map.
std::vector<grid::VoxelGrid> voxelize_sample(const chem::Structure& structure, Task task,
                                             ReprMode mode, const SampleMaps& maps = {},
                                             const VoxelizeOptions& options = {});

/// Channel counts of voxelize_sample's outputs for (task, mode).
std::vector<int> sample_channels(Task task, ReprMode mode);

}  // namespace voxgrid::voxel
