#pragma once

#include <string>
#include <utility>

#include "voxgrid/errors.hpp"
#include "voxgrid/grid.hpp"

namespace voxgrid::io {

/// Single-channel electron density on a lattice plus where it came from
/// ("2mFo-DFc", "xtb", "synthetic", ...).
class DensityMap {
 public:
  DensityMap(grid::VoxelGrid grid, std::string source_tag)
      : grid_(std::move(grid)), source_tag_(std::move(source_tag)) {
    if (grid_.channels() != 1) throw ArgumentError("density map must have exactly one channel");
  }

  const grid::VoxelGrid& grid() const { return grid_; }
  const std::string& source_tag() const { return source_tag_; }

 private:
  grid::VoxelGrid grid_;
  std::string source_tag_;
};

}  // namespace voxgrid::io
