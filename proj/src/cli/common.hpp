#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "voxgrid/density_io.hpp"
#include "voxgrid/metrics.hpp"
#include "voxgrid/nn/model.hpp"
#include "voxgrid/nn/train.hpp"
#include "voxgrid/voxelizer.hpp"

namespace voxgrid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- run bookkeeping -------------------------------------------------------

/// Output layout under --out: checkpoints/, grids/, reports/.
struct OutDirs {
  fs::path root, checkpoints, grids, reports;
};
OutDirs make_out_dirs(const fs::path& root);

/// Collects what a command did; serialized to reports/run_<command>.json.
struct RunRecord {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  json metrics = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

void write_run_record(const RunRecord& rec, const fs::path& reports, const std::string& status,
                      const std::string& error = {}, std::optional<int> epoch = std::nullopt);

/// Writes `text` to `path`, replacing the file.
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// ---- parallelism ------------------------------------------------------------

/// Worker count from VOXGRID_THREADS (default: hardware concurrency), >= 1.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. If any call
/// throws, the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ---- samples ----------------------------------------------------------------

/// Structure plus optional density maps of one manifest record.
struct LoadedSample {
  std::string id;
  chem::Structure structure;
  std::optional<io::DensityMap> ligand_map;
  std::optional<io::DensityMap> pocket_map;
};

bool needs_maps(voxel::ReprMode mode);

/// Loads the records with the given ids (manifest order kept for `ids`).
/// Density modes require the 'density' field; its absence is a DataError
/// naming the sample and the field.
std::vector<std::shared_ptr<const LoadedSample>> load_samples(
    const io::Manifest& manifest, const std::vector<std::string>& ids, voxel::ReprMode mode);

/// Writes synthetic density maps for `s` into `dir` (ligand map, plus a
/// pocket map for complexes) on a cube of the task edge plus `margin` voxels
/// centered on the ligand's center of mass, and points `r` at them.
void write_synth_maps(io::SampleRecord& r, const chem::Structure& s, voxel::Task task, int margin,
                      const io::SynthDensityParams& params, const fs::path& dir);

std::vector<nn::Tensor<float>> to_tensors(std::vector<grid::VoxelGrid> grids);

/// Dataset whose inputs are voxelized on demand (augmented draws rotate).
nn::Dataset make_dataset(std::vector<std::shared_ptr<const LoadedSample>> samples, voxel::Task task,
                         voxel::ReprMode mode, std::vector<double> labels);

/// id -> split tag, from a split JSON file when given, else from the manifest.
std::map<std::string, std::string> split_tags(const io::Manifest& manifest,
                                              const std::optional<fs::path>& split_file);

/// Ids carrying `tag`, in manifest order.
std::vector<std::string> ids_with_tag(const io::Manifest& manifest,
                                      const std::map<std::string, std::string>& tags,
                                      const std::string& tag);

/// The label to train on: `requested`, or the only label present.
std::string resolve_label(const io::Manifest& manifest, const std::optional<std::string>& requested);

std::vector<double> label_values(const io::Manifest& manifest, const std::vector<std::string>& ids,
                                 const std::string& label);

// ---- models -------------------------------------------------------------------

voxel::Task preset_task(const std::string& preset);

struct ModelChoice {
  std::string preset;
  int width = 0;
  int groups = 0;
};

nn::ModelConfig build_config(const ModelChoice& choice, voxel::Task task, voxel::ReprMode mode);

double compute_metric(const std::string& metric, const std::vector<double>& pred,
                      const std::vector<double>& target);

/// "%.17g" formatting used for every CSV number.
std::string fmt(double v);

}  // namespace voxgrid::cli
