#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "common.hpp"

namespace voxgrid::cli {

struct VoxelizeArgs {
  std::string manifest;
  std::string repr;
  std::string task;
  std::optional<std::string> split;  // restrict to one split tag
  std::string out;
};

struct SynthDensityArgs {
  std::string manifest;
  std::string task;
  double sigma = 0.4;
  int margin = 16;  // voxels added to the task edge
  std::string out;
};

struct SplitArgs {
  std::string manifest;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  std::optional<std::string> pinned;
  std::uint64_t seed = 0;
  double seq_hi = 0.5;
  double seq_lo = 0.4;
  double tanimoto = 0.9;
  std::string out;
};

struct TrainArgs {
  std::string manifest;
  std::optional<std::string> split_file;
  std::string preset;
  std::string repr;
  std::optional<std::string> label;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  int epochs = 100;
  int patience = 0;
  int batch = 32;
  double lr = 1e-5;
  bool augment = false;
  bool octahedral = false;
  int width = 0;
  int groups = 0;
  std::optional<double> target_loss;
  std::string name = "model";
  std::string out;
};

struct EvalArgs {
  std::string checkpoint;
  std::optional<std::string> manifest;  // defaults to the one recorded at training
  std::optional<std::string> split_file;
  std::string split = "test";
  std::string metric = "spearman";
  int batch = 32;
  std::string out;
};

struct CurveArgs {
  TrainArgs train;
  std::vector<double> fractions{0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string metric = "spearman";
  std::string split = "test";
};

struct SyntheticArgs {
  std::string task;
  int count = 100;
  std::uint64_t seed = 0;
  bool with_density = false;
  std::string out;
};

// Each command fills `rec` (config, outputs, metrics) and writes its files;
// the dispatcher serializes the record and maps exceptions to exit codes.
void cmd_voxelize(const VoxelizeArgs& a, RunRecord& rec, std::ostream& log);
void cmd_synth_density(const SynthDensityArgs& a, RunRecord& rec, std::ostream& log);
void cmd_split(const SplitArgs& a, RunRecord& rec, std::ostream& log);
void cmd_train(const TrainArgs& a, RunRecord& rec, std::ostream& log);
void cmd_eval(const EvalArgs& a, RunRecord& rec, std::ostream& log);
void cmd_curve(const CurveArgs& a, RunRecord& rec, std::ostream& log);
void cmd_gen_synthetic(const SyntheticArgs& a, RunRecord& rec, std::ostream& log);

}  // namespace voxgrid::cli
