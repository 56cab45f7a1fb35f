#include "synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "commands.hpp"
#include "voxgrid/errors.hpp"
#include "voxgrid/splitter.hpp"

namespace voxgrid::cli {

namespace {

constexpr double kBond = 1.45;
constexpr double kMinSeparation = 1.3;

grid::Vec3 random_direction(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(1.0 - z * z);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

grid::Vec3 unweighted_center(const std::vector<chem::Atom>& atoms) {
  grid::Vec3 c{};
  for (const auto& a : atoms) c = c + a.position;
  return (1.0 / static_cast<double>(atoms.size())) * c;
}

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& options) {
  return options[rng.below(N)];
}

// Grows a random bonded cluster around the origin; retries until it fits.
std::vector<chem::Atom> grow_cluster(Rng& rng, int count, double radius,
                                     const std::function<const char*()>& element) {
  for (;;) {
    std::vector<chem::Atom> atoms{{element(), {0.0, 0.0, 0.0}, chem::Role::Ligand}};
    std::vector<int> degree{0};
    int attempts = 0;
    while (static_cast<int>(atoms.size()) < count && attempts < 200 * count) {
      ++attempts;
      const std::size_t parent = rng.below(atoms.size());
      if (degree[parent] >= 3) continue;
      const grid::Vec3 p = atoms[parent].position + kBond * random_direction(rng);
      bool clear = true;
      for (const auto& a : atoms) clear = clear && (a.position - p).norm() >= kMinSeparation;
      if (!clear) continue;
      atoms.push_back({element(), p, chem::Role::Ligand});
      degree.push_back(1);
      ++degree[parent];
    }
    if (static_cast<int>(atoms.size()) < count) continue;
    const grid::Vec3 c = chem::center_of_mass(atoms);
    bool fits = true;
    for (const auto& a : atoms) fits = fits && (a.position - c).norm() <= radius;
    if (!fits) continue;
    for (auto& a : atoms) a.position = a.position - c;
    return atoms;
  }
}

char hex_digit(unsigned v) { return "0123456789abcdef"[v & 15u]; }

std::string to_hex(const std::vector<bool>& bits) {
  std::string out;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    unsigned v = 0;
    for (std::size_t b = 0; b < 4; ++b) v = (v << 1) | (bits[i + b] ? 1u : 0u);
    out += hex_digit(v);
  }
  return out;
}

std::string sample_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05d", prefix, i);
  return buf;
}

}  // namespace

chem::Structure random_molecule(Rng& rng, int heavy, double radius) {
  static constexpr std::array<const char*, 4> kElements{"C", "N", "O", "F"};
  chem::Structure s;
  s.atoms = grow_cluster(rng, heavy, radius, [&] { return pick(rng, kElements); });
  return s;
}

double molecule_label(const chem::Structure& s) {
  double electrons = 0.0;
  for (const auto& a : s.atoms) electrons += chem::element(a.element).atomic_number;
  const grid::Vec3 c = unweighted_center(s.atoms);
  double ss = 0.0;
  for (const auto& a : s.atoms) ss += (a.position - c).dot(a.position - c);
  const double rg = std::sqrt(ss / static_cast<double>(s.atoms.size()));
  return electrons + 2.0 * rg;
}

void cmd_gen_synthetic(const SyntheticArgs& a, RunRecord& rec, std::ostream& log) {
  rec.seed = a.seed;
  rec.config = {{"task", a.task}, {"count", a.count}, {"with_density", a.with_density}};
  if (a.count < 1) throw ArgumentError("--count must be at least 1");
  const auto task = voxel::parse_task(a.task);
  const fs::path root = fs::absolute(a.out);
  const fs::path structures = root / "structures";
  const fs::path density = root / "density";
  fs::create_directories(structures);
  fs::create_directories(root / "reports");
  if (a.with_density) fs::create_directories(density);

  Rng rng(a.seed);
  io::Manifest manifest;
  manifest.directory = root;
  std::vector<chem::Structure> built;

  if (task == voxel::Task::Molecule) {
    for (int i = 0; i < a.count; ++i) {
      chem::Structure s = random_molecule(rng, 9);
      s.id = sample_id("mol", i);
      s.labels["y"] = molecule_label(s);
      built.push_back(std::move(s));
    }
  } else {
    // Complexes come in receptor families: a family shares a base sequence
    // and fingerprint that each member mutates.
    static constexpr std::array<const char*, 10> kLigand{"C", "C", "C", "C", "O", "N", "S", "F", "Cl", "P"};
    static constexpr std::array<const char*, 6> kPocket{"C", "C", "C", "O", "N", "S"};
    static constexpr char kResidues[] = "ACDEFGHIKLMNPQRSTVWY";
    const int families = std::max(1, a.count / 5);
    std::vector<std::string> base_seq(families);
    std::vector<std::vector<bool>> base_fp(families, std::vector<bool>(256));
    std::vector<double> offset(families);
    for (int f = 0; f < families; ++f) {
      for (int k = 0; k < 80; ++k) base_seq[f] += kResidues[rng.below(20)];
      for (int k = 0; k < 40; ++k) base_fp[f][rng.below(256)] = true;
      offset[f] = rng.normal();
    }
    for (int i = 0; i < a.count; ++i) {
      const int f = static_cast<int>(rng.below(families));
      const double rate = rng.uniform(0.02, 0.4);
      std::string seq = base_seq[f];
      for (auto& c : seq) {
        if (rng.uniform() < rate) c = kResidues[rng.below(20)];
      }
      std::vector<bool> fp = base_fp[f];
      const int flips = static_cast<int>(rng.below(24));
      for (int k = 0; k < flips; ++k) {
        const std::size_t bit = rng.below(256);
        fp[bit] = !fp[bit];
      }
      const int heavy = 6 + static_cast<int>(rng.below(7));
      chem::Structure s;
      s.id = sample_id("cpx", i);
      s.atoms = grow_cluster(rng, heavy, 4.0, [&] { return pick(rng, kLigand); });
      for (int k = 0; k < 40; ++k) {
        const double r = rng.uniform(4.5, 7.0);
        s.atoms.push_back({pick(rng, kPocket), r * random_direction(rng), chem::Role::Pocket});
      }
      s.labels["pK"] = 4.0 + 0.35 * heavy + 0.8 * offset[f] + 0.3 * rng.normal();
      io::SampleRecord r;
      r.sequence = seq;
      r.fingerprint = to_hex(fp);
      manifest.samples.push_back(r);
      built.push_back(std::move(s));
    }
  }
  if (manifest.samples.size() < built.size()) manifest.samples.resize(built.size());

  io::SynthDensityParams params;
  parallel_for(built.size(), [&](std::size_t i) {
    const chem::Structure& s = built[i];
    io::SampleRecord& r = manifest.samples[i];
    r.id = s.id;
    r.labels = s.labels;
    r.structure = structures / (s.id + ".xyz");
    chem::write_xyz(s, r.structure.string());
    if (a.with_density) write_synth_maps(r, s, task, 16, params, density);
  });

  const fs::path manifest_path = root / "manifest.json";
  io::save_manifest(manifest, manifest_path);
  rec.outputs = {manifest_path.string(), structures.string()};
  if (a.with_density) rec.outputs.push_back(density.string());
  rec.metrics["samples"] = built.size();
  log << "generated " << built.size() << " synthetic " << (task == voxel::Task::Molecule ? "molecules" : "complexes")
      << " in " << root.string() << "\n";
}

}  // namespace voxgrid::cli
