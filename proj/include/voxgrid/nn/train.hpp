#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxgrid/grid.hpp"
#include "voxgrid/nn/model.hpp"
#include "voxgrid/nn/optim.hpp"

namespace voxgrid::nn {

/// Indexed training data. inputs(i, rot) returns one (1, C, D, H, W) tensor per
/// model input; rot is null for the unaugmented sample.
struct Dataset {
  std::vector<double> labels;
  std::function<std::vector<Tensor<float>>(std::size_t, const grid::Rotation*)> inputs;

  std::size_t size() const { return labels.size(); }
};

/// Wraps pre-built tensors. Augmented requests are answered with rotated
/// copies when `geometry` is given, otherwise the rotation is ignored.
Dataset tensor_dataset(std::vector<std::vector<Tensor<float>>> inputs, std::vector<double> labels,
                       std::optional<grid::GridGeometry> geometry = std::nullopt);

struct TrainConfig {
  int batch = 32;
  int epochs = 100;
  int patience = 0;  // 0 disables early stopping
  std::uint64_t seed = 0;
  bool augment = false;
  bool octahedral_only = false;
  double lr = 1e-5;
  std::optional<double> target_train_loss;  // stop once an epoch's train loss is below
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<float> params;  // best by validation loss
  AdamState adam;             // optimizer state after the last epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Mini-batch Adam on MSE. Deterministic given cfg.seed. Throws NumericalError
/// carrying the epoch when the loss or a gradient becomes non-finite.
TrainResult train(Model<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

std::vector<double> predict(Model<float>& model, std::span<const float> params, const Dataset& data,
                            int batch = 32);

/// "epoch,train_loss,val_loss" rows with round-trip precision.
std::string history_csv(const std::vector<EpochRecord>& history);

/// Concatenates single-item tensors along the batch axis.
Tensor<float> stack(const std::vector<const Tensor<float>*>& items);

}  // namespace voxgrid::nn
