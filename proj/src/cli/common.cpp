#include "common.hpp"

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <set>
#include <thread>

#include "voxgrid/errors.hpp"

namespace voxgrid::cli {

OutDirs make_out_dirs(const fs::path& root) {
  OutDirs d{root, root / "checkpoints", root / "grids", root / "reports"};
  for (const auto& p : {d.checkpoints, d.grids, d.reports}) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create output directory '" + p.string() + "': " + ec.message());
  }
  return d;
}

void write_run_record(const RunRecord& rec, const fs::path& reports, const std::string& status,
                      const std::string& error, std::optional<int> epoch) {
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - rec.start).count();
  json j;
  j["command"] = rec.command;
  j["config"] = rec.config;
  j["seed"] = rec.seed;
  j["outputs"] = rec.outputs;
  j["wall_time_s"] = wall;
  j["metrics"] = rec.metrics;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  if (epoch) j["epoch"] = *epoch;
  std::error_code ec;
  fs::create_directories(reports, ec);
  write_text(reports / ("run_" + rec.command + ".json"), j.dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VOXGRID_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= n) return;
            i = next++;
          }
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

bool needs_maps(voxel::ReprMode mode) {
  return mode == voxel::ReprMode::Density || mode == voxel::ReprMode::GradMag;
}

std::vector<std::shared_ptr<const LoadedSample>> load_samples(
    const io::Manifest& manifest, const std::vector<std::string>& ids, voxel::ReprMode mode) {
  std::vector<std::shared_ptr<const LoadedSample>> out(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const io::SampleRecord& rec = manifest.find(ids[i]);
    auto s = std::make_shared<LoadedSample>();
    s->id = rec.id;
    s->structure = io::load_structure(rec);
    if (needs_maps(mode)) {
      if (!rec.density) {
        throw DataError("sample '" + rec.id + "': representation '" +
                        std::string(voxel::to_string(mode)) + "' needs the 'density' field");
      }
      s->ligand_map = io::read_map(*rec.density);
      if (rec.pocket_density) s->pocket_map = io::read_map(*rec.pocket_density);
    }
    out[i] = std::move(s);
  });
  return out;
}

void write_synth_maps(io::SampleRecord& r, const chem::Structure& s, voxel::Task task, int margin,
                      const io::SynthDensityParams& params, const fs::path& dir) {
  const auto ligand_atoms = s.select(chem::Role::Ligand);
  if (ligand_atoms.empty()) throw DataError("sample '" + r.id + "' has no ligand atoms");
  const int edge = voxel::task_geometry(task, {}).dims.nx + margin;
  const auto geo = grid::GridGeometry::centered(chem::center_of_mass(ligand_atoms), edge, 0.25);
  chem::Structure part{s.id, ligand_atoms, {}};
  const fs::path lig = dir / (r.id + "_ligand.voxb");
  io::write_map(io::synth_density(part, geo, params), lig);
  r.density = lig;
  if (task == voxel::Task::Complex) {
    part.atoms = s.select(chem::Role::Pocket);
    if (part.atoms.empty()) throw DataError("sample '" + r.id + "' has no pocket atoms");
    const fs::path pocket = dir / (r.id + "_pocket.voxb");
    io::write_map(io::synth_density(part, geo, params), pocket);
    r.pocket_density = pocket;
  }
}

std::vector<nn::Tensor<float>> to_tensors(std::vector<grid::VoxelGrid> grids) {
  std::vector<nn::Tensor<float>> out;
  for (auto& g : grids) {
    const auto& d = g.dims();
    nn::Shape shape{1, g.channels(), d.nz, d.ny, d.nx};
    out.emplace_back(shape, std::move(g).take_data());
  }
  return out;
}

nn::Dataset make_dataset(std::vector<std::shared_ptr<const LoadedSample>> samples, voxel::Task task,
                         voxel::ReprMode mode, std::vector<double> labels) {
  if (samples.size() != labels.size()) throw ArgumentError("samples and labels differ in length");
  nn::Dataset d;
  d.labels = std::move(labels);
  d.inputs = [samples = std::move(samples), task, mode](std::size_t i, const grid::Rotation* rot) {
    const LoadedSample& s = *samples[i];
    voxel::SampleMaps maps;
    if (s.ligand_map) maps.ligand = &*s.ligand_map;
    if (s.pocket_map) maps.pocket = &*s.pocket_map;
    voxel::VoxelizeOptions opt;
    if (rot != nullptr) opt.rotation = *rot;
    return to_tensors(voxel::voxelize_sample(s.structure, task, mode, maps, opt));
  };
  return d;
}

std::map<std::string, std::string> split_tags(const io::Manifest& manifest,
                                              const std::optional<fs::path>& split_file) {
  std::map<std::string, std::string> tags;
  if (split_file) {
    json doc;
    try {
      doc = json::parse(read_text(*split_file));
    } catch (const json::parse_error& e) {
      throw DataError("split file '" + split_file->string() + "' is not valid JSON: " + e.what());
    }
    if (!doc.contains("assignment") || !doc["assignment"].is_object()) {
      throw DataError("split file '" + split_file->string() + "' has no 'assignment' object");
    }
    for (const auto& [id, tag] : doc["assignment"].items()) {
      if (!tag.is_string()) throw DataError("split of '" + id + "' must be a string");
      tags[id] = tag.get<std::string>();
    }
    for (const auto& r : manifest.samples) {
      if (!tags.count(r.id)) throw DataError("sample '" + r.id + "' is missing from the split file");
    }
    return tags;
  }
  for (const auto& r : manifest.samples) {
    if (r.split) tags[r.id] = *r.split;
  }
  return tags;
}

std::vector<std::string> ids_with_tag(const io::Manifest& manifest,
                                      const std::map<std::string, std::string>& tags,
                                      const std::string& tag) {
  std::vector<std::string> ids;
  for (const auto& r : manifest.samples) {
    auto it = tags.find(r.id);
    if (it != tags.end() && it->second == tag) ids.push_back(r.id);
  }
  return ids;
}

std::string resolve_label(const io::Manifest& manifest, const std::optional<std::string>& requested) {
  if (requested) return *requested;
  std::set<std::string> names;
  for (const auto& r : manifest.samples) {
    for (const auto& [name, value] : r.labels) names.insert(name);
  }
  if (names.size() != 1) {
    throw DataError("manifest has " + std::to_string(names.size()) +
                    " label names; choose one with --label");
  }
  return *names.begin();
}

std::vector<double> label_values(const io::Manifest& manifest, const std::vector<std::string>& ids,
                                 const std::string& label) {
  std::vector<double> out;
  for (const auto& id : ids) {
    const auto& rec = manifest.find(id);
    auto it = rec.labels.find(label);
    if (it == rec.labels.end()) throw DataError("sample '" + id + "' has no label '" + label + "'");
    out.push_back(it->second);
  }
  return out;
}

voxel::Task preset_task(const std::string& preset) {
  if (preset.rfind("pdbbind_", 0) == 0) return voxel::Task::Complex;
  if (preset.rfind("qm9_", 0) == 0) return voxel::Task::Molecule;
  throw ArgumentError("unknown preset '" + preset + "'");
}

nn::ModelConfig build_config(const ModelChoice& choice, voxel::Task task, voxel::ReprMode mode) {
  nn::PresetOptions opt;
  opt.width = choice.width;
  opt.groups = choice.groups;
  opt.grid = task == voxel::Task::Complex ? 64 : 32;
  return nn::make_preset(choice.preset, voxel::sample_channels(task, mode), opt);
}

double compute_metric(const std::string& metric, const std::vector<double>& pred,
                      const std::vector<double>& target) {
  if (metric == "spearman") return metrics::spearman(pred, target);
  if (metric == "mae") return metrics::mae(pred, target);
  throw ArgumentError("unknown metric '" + metric + "' (expected spearman or mae)");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace voxgrid::cli
