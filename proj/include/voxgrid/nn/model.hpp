#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxgrid/nn/layers.hpp"

namespace voxgrid::nn {

// Layer graph of a preset. Complex presets have one encoder per input grid
// (ligand, pocket) whose outputs are summed; molecule presets have none.
// body runs on the fused features and ends at the bottleneck; head maps the
// bottleneck to one scalar per item.
struct ModelConfig {
  std::string preset;
  int grid = 32;
  std::vector<int> input_channels;
  std::vector<LayerSpec> encoders;
  LayerSpec body;
  LayerSpec head;
};

struct PresetOptions {
  int width = 0;   // n_ch override (U-Net presets)
  int groups = 0;  // GroupNorm groups override
  int grid = 0;    // input edge length override
};

const std::vector<std::string>& preset_ids();

/// input_channels holds one entry per input grid: {ligand, pocket} for the
/// pdbbind_* presets, {molecule} for qm9_*.
ModelConfig make_preset(std::string_view id, std::vector<int> input_channels,
                        PresetOptions options = {});

Shape bottleneck_shape(const ModelConfig& config, int batch = 1);
std::size_t param_count(const ModelConfig& config);

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::size_t param_count() const { return total_; }

  void init_params(std::span<T> params, std::uint64_t seed) const;
  std::vector<T> init_params(std::uint64_t seed) const;

  /// inputs[i] has shape (N, input_channels[i], grid, grid, grid); returns (N, 1).
  Tensor<T> forward(const std::vector<Tensor<T>>& inputs, std::span<const T> params);
  /// Accumulates parameter gradients of the last forward() into grad.
  void backward(const Tensor<T>& grad_out, std::span<const T> params, std::span<T> grad);

 private:
  ModelConfig config_;
  std::vector<std::unique_ptr<Layer<T>>> encoders_;
  std::unique_ptr<Layer<T>> body_;
  std::unique_ptr<Layer<T>> head_;
  std::vector<std::size_t> offsets_;  // encoders..., body, head
  std::size_t total_ = 0;
};

}  // namespace voxgrid::nn
