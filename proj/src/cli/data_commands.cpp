#include <algorithm>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "voxgrid/errors.hpp"
#include "voxgrid/splitter.hpp"

namespace voxgrid::cli {

namespace {

// Ids become file names, so they must stay inside the output directory.
void check_file_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
    throw DataError("sample id '" + id + "' cannot be used as a file name");
  }
}

std::string rel_to(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

// Concatenates grids sharing one geometry along the channel axis.
grid::VoxelGrid concat_channels(std::vector<grid::VoxelGrid> grids) {
  if (grids.size() == 1) return std::move(grids.front());
  const grid::GridGeometry geo = grids.front().geometry();
  int channels = 0;
  std::vector<float> data;
  for (auto& g : grids) {
    if (!(g.geometry() == geo)) throw ArgumentError("cannot concatenate grids with different geometry");
    channels += g.channels();
    auto part = std::move(g).take_data();
    data.insert(data.end(), part.begin(), part.end());
  }
  return grid::VoxelGrid(geo, channels, std::move(data));
}

std::set<std::string> read_pins(const fs::path& path) {
  std::set<std::string> pins;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    pins.insert(line.substr(b, e - b + 1));
  }
  return pins;
}

}  // namespace

void cmd_voxelize(const VoxelizeArgs& a, RunRecord& rec, std::ostream& log) {
  rec.config = {{"manifest", a.manifest}, {"repr", a.repr}, {"task", a.task}};
  if (a.split) rec.config["split"] = *a.split;
  const auto task = voxel::parse_task(a.task);
  const auto mode = voxel::parse_repr(a.repr);
  const auto manifest = io::load_manifest(a.manifest);
  const OutDirs dirs = make_out_dirs(a.out);

  std::vector<std::string> ids;
  for (const auto* r : io::iterate_samples(manifest, a.split)) {
    check_file_id(r->id);
    ids.push_back(r->id);
  }
  const auto samples = load_samples(manifest, ids, mode);
  const std::vector<int> blocks = voxel::sample_channels(task, mode);
  std::string tag = std::string(voxel::to_string(mode)) + ";blocks=";
  for (std::size_t i = 0; i < blocks.size(); ++i) tag += (i ? "," : "") + std::to_string(blocks[i]);

  std::vector<fs::path> files(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const LoadedSample& s = *samples[i];
    voxel::SampleMaps maps;
    if (s.ligand_map) maps.ligand = &*s.ligand_map;
    if (s.pocket_map) maps.pocket = &*s.pocket_map;
    try {
      auto grid = concat_channels(voxel::voxelize_sample(s.structure, task, mode, maps));
      files[i] = dirs.grids / (s.id + ".voxb");
      io::write_voxb(grid, tag, files[i]);
    } catch (const ConfigError& e) {
      throw DataError("sample '" + s.id + "': " + e.what());
    }
  });

  json index;
  index["task"] = voxel::to_string(task);
  index["repr"] = voxel::to_string(mode);
  index["channel_blocks"] = blocks;
  index["block_names"] = task == voxel::Task::Complex ? json{"ligand", "pocket"} : json{"molecule"};
  index["samples"] = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    index["samples"].push_back({{"id", ids[i]}, {"file", rel_to(files[i], dirs.root)}});
  }
  const fs::path index_path = dirs.grids / "index.json";
  write_text(index_path, index.dump(2) + "\n");
  for (const auto& f : files) rec.outputs.push_back(f.string());
  rec.outputs.push_back(index_path.string());
  rec.metrics["samples"] = ids.size();
  log << "voxelized " << ids.size() << " samples (" << voxel::to_string(mode) << ")\n";
}

void cmd_synth_density(const SynthDensityArgs& a, RunRecord& rec, std::ostream& log) {
  rec.config = {{"manifest", a.manifest}, {"task", a.task}, {"sigma", a.sigma}, {"margin", a.margin}};
  if (a.margin < 0) throw ArgumentError("--margin must not be negative");
  const auto task = voxel::parse_task(a.task);
  io::Manifest manifest = io::load_manifest(a.manifest);
  const OutDirs dirs = make_out_dirs(fs::absolute(a.out));
  const fs::path map_dir = dirs.grids / "density";
  fs::create_directories(map_dir);
  io::SynthDensityParams params;
  params.sigma = a.sigma;

  parallel_for(manifest.samples.size(), [&](std::size_t i) {
    io::SampleRecord& r = manifest.samples[i];
    check_file_id(r.id);
    write_synth_maps(r, io::load_structure(r), task, a.margin, params, map_dir);
  });

  for (auto& r : manifest.samples) r.structure = fs::absolute(r.structure);
  manifest.directory = dirs.root;
  const fs::path out_manifest = dirs.root / "manifest.json";
  io::save_manifest(manifest, out_manifest);
  rec.outputs.push_back(out_manifest.string());
  rec.outputs.push_back(map_dir.string());
  rec.metrics["samples"] = manifest.samples.size();
  log << "wrote density maps for " << manifest.samples.size() << " samples\n";
}

void cmd_split(const SplitArgs& a, RunRecord& rec, std::ostream& log) {
  rec.seed = a.seed;
  rec.config = {{"manifest", a.manifest}, {"fractions", a.fractions}, {"seq_hi", a.seq_hi},
                {"seq_lo", a.seq_lo}, {"tanimoto", a.tanimoto}};
  if (a.pinned) rec.config["pinned"] = *a.pinned;
  if (a.fractions.size() != 3) throw ArgumentError("--fractions needs three values (train,val,test)");
  split::LinkageThresholds t{a.seq_hi, a.seq_lo, a.tanimoto};
  t.validate();
  const auto manifest = io::load_manifest(a.manifest);
  const OutDirs dirs = make_out_dirs(a.out);

  // Either every record carries a sequence and fingerprint, or none does
  // (molecule sets), in which case every item is its own cluster.
  std::size_t with_meta = 0;
  for (const auto& r : manifest.samples) with_meta += (r.sequence && r.fingerprint) ? 1 : 0;
  const bool linked = with_meta > 0;
  std::vector<split::ComplexMeta> items;
  for (const auto& r : manifest.samples) {
    if (linked && !(r.sequence && r.fingerprint)) {
      throw DataError("sample '" + r.id + "' lacks " + (r.sequence ? "'fingerprint'" : "'sequence'") +
                      " while other samples carry both");
    }
    split::ComplexMeta m;
    m.id = r.id;
    if (linked) {
      m.receptor_sequence = *r.sequence;
      m.fingerprint = split::Fingerprint::from_hex(*r.fingerprint);
    }
    items.push_back(std::move(m));
  }

  split::Clusters clusters;
  split::IdentityFn identity;
  if (linked) {
    identity = split::memoized_identity(items);
    clusters = split::build_linkage(items, t, identity);
  } else {
    for (std::size_t i = 0; i < items.size(); ++i) clusters.push_back({i});
  }
  std::set<std::string> pins;
  if (a.pinned) pins = read_pins(*a.pinned);
  const auto assignment =
      split::assign_splits(clusters, items, {a.fractions[0], a.fractions[1], a.fractions[2]}, pins, a.seed);
  std::vector<split::Violation> violations;
  if (linked) violations = split::verify_no_leakage(assignment, items, t, identity);

  json doc;
  doc["seed"] = a.seed;
  doc["fractions"] = a.fractions;
  doc["thresholds"] = {{"seq_hi", t.seq_hi}, {"seq_lo", t.seq_lo}, {"tanimoto", t.tanimoto}};
  doc["linkage"] = linked ? "sequence+fingerprint" : "none";
  doc["clusters"] = clusters.size();
  doc["pinned"] = pins;
  doc["counts"] = {{"train", assignment.counts[0]}, {"val", assignment.counts[1]}, {"test", assignment.counts[2]}};
  json achieved = json::array();
  for (double f : assignment.achieved()) achieved.push_back(f);
  doc["achieved"] = achieved;
  doc["assignment"] = json::object();
  for (const auto& [id, s] : assignment.assignment) doc["assignment"][id] = split::to_string(s);

  json leak;
  leak["checked"] = linked;
  leak["violations"] = json::array();
  for (const auto& v : violations) {
    leak["violations"].push_back({{"a", v.a}, {"b", v.b}, {"seq_id", v.seq_id}, {"tanimoto", v.tanimoto}});
  }

  const fs::path split_path = dirs.reports / "split.json";
  const fs::path leak_path = dirs.reports / "leakage.json";
  write_text(split_path, doc.dump(2) + "\n");
  write_text(leak_path, leak.dump(2) + "\n");
  rec.outputs = {split_path.string(), leak_path.string()};
  rec.metrics = {{"train", assignment.counts[0]}, {"val", assignment.counts[1]},
                 {"test", assignment.counts[2]}, {"violations", violations.size()}};
  log << "split " << items.size() << " samples into " << assignment.counts[0] << "/" << assignment.counts[1]
      << "/" << assignment.counts[2] << " (" << clusters.size() << " clusters, " << violations.size()
      << " leakage violations)\n";
}

}  // namespace voxgrid::cli
