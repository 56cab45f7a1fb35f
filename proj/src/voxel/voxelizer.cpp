#include "voxgrid/voxelizer.hpp"

#include <algorithm>
#include <cmath>

#include "voxgrid/errors.hpp"

namespace voxgrid::voxel {

ChannelScheme::ChannelScheme(SchemeMode mode, std::vector<std::string> elements,
                             std::set<std::string> ignored)
    : mode_(mode), order_(std::move(elements)), ignored_(ignored.begin(), ignored.end()) {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    chem::element(order_[i]);
    if (!index_.emplace(order_[i], static_cast<int>(i)).second) {
      throw ArgumentError("duplicate element '" + order_[i] + "' in channel scheme");
    }
  }
  if (order_.empty()) throw ArgumentError("channel scheme needs at least one element");
}

bool ChannelScheme::ignores(std::string_view element) const {
  return ignored_.find(element) != ignored_.end();
}

int ChannelScheme::channel_of(std::string_view element) const {
  if (mode_ == SchemeMode::ShapeOnly) return chem::find_element(element) != nullptr ? 0 : -1;
  const auto it = index_.find(element);
  return it == index_.end() ? -1 : it->second;
}

ChannelScheme ChannelScheme::shape_only() const {
  return ChannelScheme(SchemeMode::ShapeOnly, order_, {ignored_.begin(), ignored_.end()});
}

SchemePair pdbbind_schemes() {
  return {ChannelScheme(SchemeMode::AtomType, {"C", "O", "N", "S", "F", "Cl", "P"}, {"H"}),
          ChannelScheme(SchemeMode::AtomType, {"C", "O", "N", "S"}, {"H"})};
}

ChannelScheme qm9_scheme() {
  return ChannelScheme(SchemeMode::AtomType, {"H", "C", "N", "O", "F"});
}

std::string_view to_string(ReprMode mode) {
  switch (mode) {
    case ReprMode::AtomType: return "atomtype";
    case ReprMode::ShapeOnly: return "shape";
    case ReprMode::Density: return "density";
    case ReprMode::GradMag: return "gradmag";
  }
  return "?";
}

ReprMode parse_repr(std::string_view text) {
  if (text == "atomtype" || text == "atom-type" || text == "atom_type") return ReprMode::AtomType;
  if (text == "shape" || text == "shape-only" || text == "shape_only") return ReprMode::ShapeOnly;
  if (text == "density") return ReprMode::Density;
  if (text == "gradmag") return ReprMode::GradMag;
  throw ArgumentError("unknown representation '" + std::string(text) + "'");
}

std::string_view to_string(Task task) {
  return task == Task::Complex ? "complex" : "molecule";
}

Task parse_task(std::string_view text) {
  if (text == "complex") return Task::Complex;
  if (text == "molecule") return Task::Molecule;
  throw ArgumentError("unknown task '" + std::string(text) + "'");
}

double splat_sigma(std::string_view element, const ChannelScheme& scheme, const SplatParams& params) {
  if (params.fixed_sigma) return *params.fixed_sigma;
  const std::string_view as = scheme.mode() == SchemeMode::ShapeOnly ? "C" : element;
  return chem::element(as).vdw_radius / 2.0;
}

grid::VoxelGrid splat_atoms(std::span<const chem::Atom> atoms, const ChannelScheme& scheme,
                            const grid::GridGeometry& geometry, const SplatParams& params,
                            std::string_view structure_id) {
  if (!(params.truncation_sigmas > 0.0)) throw ArgumentError("truncation radius must be positive");
  if (params.fixed_sigma && !(*params.fixed_sigma > 0.0)) {
    throw ArgumentError("Gaussian width must be positive");
  }
  const grid::Dims& d = geometry.dims;
  const double h = geometry.spacing;
  const std::size_t nvox = d.voxels();
  std::vector<double> acc(static_cast<std::size_t>(scheme.channels()) * nvox, 0.0);
  std::vector<double> ex, ey, ez;

  for (const auto& atom : atoms) {
    if (scheme.ignores(atom.element)) continue;
    chem::element(atom.element, structure_id);
    const int ch = scheme.channel_of(atom.element);
    if (ch < 0) {
      throw DataError("element '" + atom.element + "' in structure '" + std::string(structure_id) +
                      "' is not covered by the channel scheme");
    }
    const double sigma = splat_sigma(atom.element, scheme, params);
    const double radius = params.truncation_sigmas * sigma;
    const double r2 = radius * radius;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      const double u = (atom.position[a] - geometry.origin[a]) / h;
      const double ru = radius / h;
      lo[a] = std::max(0, static_cast<int>(std::ceil(u - ru)));
      hi[a] = std::min(d[a] - 1, static_cast<int>(std::floor(u + ru)));
    }
    if (lo[0] > hi[0] || lo[1] > hi[1] || lo[2] > hi[2]) continue;

    // Separable factors exp(-dx^2/2s^2) etc.; squared offsets kept for the cutoff test.
    const auto fill = [&](std::vector<double>& e, std::vector<double>& sq, int axis) {
      e.resize(hi[axis] - lo[axis] + 1);
      sq.resize(e.size());
      for (int i = lo[axis]; i <= hi[axis]; ++i) {
        const double off = geometry.origin[axis] + h * i - atom.position[axis];
        sq[i - lo[axis]] = off * off;
        e[i - lo[axis]] = std::exp(-off * off * inv2s2);
      }
    };
    std::vector<double> sx, sy, sz;
    fill(ex, sx, 0);
    fill(ey, sy, 1);
    fill(ez, sz, 2);

    double* base = acc.data() + static_cast<std::size_t>(ch) * nvox;
    for (int k = lo[2]; k <= hi[2]; ++k) {
      const double dz2 = sz[k - lo[2]];
      if (dz2 > r2) continue;
      for (int j = lo[1]; j <= hi[1]; ++j) {
        const double dyz2 = dz2 + sy[j - lo[1]];
        if (dyz2 > r2) continue;
        const double fyz = ez[k - lo[2]] * ey[j - lo[1]];
        double* row = base + (static_cast<std::size_t>(k) * d.ny + j) * d.nx;
        for (int i = lo[0]; i <= hi[0]; ++i) {
          if (dyz2 + sx[i - lo[0]] > r2) continue;
          row[i] += fyz * ex[i - lo[0]];
        }
      }
    }
  }

  std::vector<float> out(acc.size());
  std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return grid::VoxelGrid(geometry, scheme.channels(), std::move(out));
}

grid::GridGeometry task_geometry(Task task, grid::Vec3 center) {
  return grid::GridGeometry::centered(center, task == Task::Complex ? 64 : 32, 0.25);
}

std::vector<int> sample_channels(Task task, ReprMode mode) {
  const bool typed = mode == ReprMode::AtomType;
  if (task == Task::Complex) {
    return typed ? std::vector<int>{7, 4} : std::vector<int>{1, 1};
  }
  return {typed ? 5 : 1};
}

namespace {

grid::VoxelGrid density_grid(const io::DensityMap& map, const grid::GridGeometry& geometry,
                             ReprMode mode, const std::optional<grid::Rotation>& rotation) {
  grid::VoxelGrid g = grid::resample(map.grid(), geometry);
  if (rotation) g = grid::rotate_resample(g, *rotation, geometry.midpoint());
  if (mode == ReprMode::GradMag) g = grid::gradient_magnitude(g);
  return g;
}

}  // namespace

std::vector<grid::VoxelGrid> voxelize_sample(const chem::Structure& structure, Task task,
                                             ReprMode mode, const SampleMaps& maps,
                                             const VoxelizeOptions& options) {
  std::vector<chem::Atom> ligand =
      task == Task::Complex ? structure.select(chem::Role::Ligand) : structure.atoms;
  if (ligand.empty()) {
    throw DataError("structure '" + structure.id + "' has no ligand atoms");
  }
  const grid::Vec3 center = chem::center_of_mass(ligand);
  const grid::GridGeometry geometry = task_geometry(task, center);

  std::vector<grid::VoxelGrid> out;
  if (mode == ReprMode::Density || mode == ReprMode::GradMag) {
    if (maps.ligand == nullptr) {
      throw ConfigError("representation '" + std::string(to_string(mode)) +
                        "' requires a density map (sample '" + structure.id + "')");
    }
    out.push_back(density_grid(*maps.ligand, geometry, mode, options.rotation));
    if (task == Task::Complex) {
      const io::DensityMap& pocket_map = maps.pocket != nullptr ? *maps.pocket : *maps.ligand;
      out.push_back(density_grid(pocket_map, geometry, mode, options.rotation));
    }
    return out;
  }

  if (options.rotation) {
    ligand = chem::rotate_atoms(ligand, *options.rotation, geometry.midpoint());
  }
  if (task == Task::Molecule) {
    ChannelScheme scheme = qm9_scheme();
    if (mode == ReprMode::ShapeOnly) scheme = scheme.shape_only();
    out.push_back(splat_atoms(ligand, scheme, geometry, options.splat, structure.id));
    return out;
  }

  SchemePair schemes = pdbbind_schemes();
  if (mode == ReprMode::ShapeOnly) {
    schemes = {schemes.ligand.shape_only(), schemes.pocket.shape_only()};
  }
  std::vector<chem::Atom> pocket = structure.select(chem::Role::Pocket);
  if (options.rotation) {
    pocket = chem::rotate_atoms(pocket, *options.rotation, geometry.midpoint());
  }
  out.push_back(splat_atoms(ligand, schemes.ligand, geometry, options.splat, structure.id));
  out.push_back(splat_atoms(pocket, schemes.pocket, geometry, options.splat, structure.id));
  return out;
}

}  // namespace voxgrid::voxel
