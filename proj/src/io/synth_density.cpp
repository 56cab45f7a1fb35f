#include <algorithm>
#include <cmath>
#include <numbers>

#include "voxgrid/density_io.hpp"
#include "voxgrid/errors.hpp"

namespace voxgrid::io {

DensityMap synth_density(const chem::Structure& s, const grid::GridGeometry& geometry,
                         const SynthDensityParams& params) {
  if (s.atoms.empty()) throw ArgumentError("synth_density of an empty structure");
  if (!(params.sigma > 0.0) || !(params.truncation_sigmas > 0.0)) {
    throw ArgumentError("density width and truncation must be positive");
  }
  const grid::Dims& d = geometry.dims;
  const double h = geometry.spacing;
  const double sigma = params.sigma;
  const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -1.5);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double radius = params.truncation_sigmas * sigma;
  const double r2 = radius * radius;
  std::vector<double> acc(d.voxels(), 0.0);

  for (const auto& atom : s.atoms) {
    const double z = chem::element(atom.element, s.id).atomic_number;
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      const double u = (atom.position[a] - geometry.origin[a]) / h;
      lo[a] = std::max(0, static_cast<int>(std::ceil(u - radius / h)));
      hi[a] = std::min(d[a] - 1, static_cast<int>(std::floor(u + radius / h)));
    }
    for (int k = lo[2]; k <= hi[2]; ++k) {
      const double dz = geometry.origin.z + h * k - atom.position.z;
      for (int j = lo[1]; j <= hi[1]; ++j) {
        const double dy = geometry.origin.y + h * j - atom.position.y;
        const double dyz2 = dy * dy + dz * dz;
        if (dyz2 > r2) continue;
        double* row = acc.data() + (static_cast<std::size_t>(k) * d.ny + j) * d.nx;
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const double dx = geometry.origin.x + h * i - atom.position.x;
          const double d2 = dx * dx + dyz2;
          if (d2 > r2) continue;
          row[i] += z * norm * std::exp(-d2 * inv2s2);
        }
      }
    }
  }
  std::vector<float> out(acc.size());
  std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return DensityMap(grid::VoxelGrid(geometry, 1, std::move(out)), "synthetic");
}

}  // namespace voxgrid::io
