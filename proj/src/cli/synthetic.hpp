#pragma once

#include <cstdint>
#include <string>

#include "voxgrid/chem.hpp"
#include "voxgrid/random.hpp"

namespace voxgrid::cli {

/// Small molecule of `heavy` atoms drawn from C, N, O, F, grown as a random
/// tree of 1.45 Å bonds and kept within `radius` Å of its center of mass.
chem::Structure random_molecule(Rng& rng, int heavy, double radius = 3.0);

/// Analytic molecule label: total electron count plus twice the radius of
/// gyration (Å, unweighted). The first term is invisible to shape-only input
/// when the heavy-atom count is fixed.
double molecule_label(const chem::Structure& s);

}  // namespace voxgrid::cli
