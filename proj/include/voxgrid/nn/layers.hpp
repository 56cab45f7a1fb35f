#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxgrid/nn/tensor.hpp"
#include "voxgrid/random.hpp"

namespace voxgrid::nn {

enum class LayerKind {
  Conv3d,         // in, out, kernel (1 or 3, padding kernel/2), stride
  AvgPool3d,      // kernel (non-overlapping)
  ReLU,
  SiLU,
  Tanhshrink,
  GroupNorm,      // groups, in (channels)
  LayerNorm,      // in (features)
  Linear,         // in, out
  ResidualBlock,  // in, out; body + (1x1 conv skip when in != out)
  SelfAttention,  // in (channels); single head over voxel positions
  GlobalAvgPool,  // (N,C,D,H,W) -> (N,C)
  Flatten,        // (N,C,D,H,W) -> (N,C*D*H*W)
  Sequential,     // body
};

std::string_view to_string(LayerKind kind);

/// Plain-data description of a layer; composite kinds carry a body.
struct LayerSpec {
  LayerKind kind = LayerKind::Sequential;
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  int groups = 0;
  std::vector<LayerSpec> body;

  static LayerSpec conv3d(int in, int out, int stride = 1, int kernel = 3);
  static LayerSpec avgpool3d(int kernel);
  static LayerSpec relu();
  static LayerSpec silu();
  static LayerSpec tanhshrink();
  static LayerSpec groupnorm(int groups, int channels);
  static LayerSpec layernorm(int features);
  static LayerSpec linear(int in, int out);
  static LayerSpec residual(int in, int out, std::vector<LayerSpec> body);
  static LayerSpec self_attention(int channels);
  static LayerSpec global_avgpool();
  static LayerSpec flatten();
  static LayerSpec sequential(std::vector<LayerSpec> body);
};

/// Output shape of `spec` for input shape `in`; throws ShapeError on mismatch.
Shape infer_shape(const LayerSpec& spec, const Shape& in);
std::size_t param_count(const LayerSpec& spec);

/// Executable layer. Parameters live in a caller-owned flat span (this layer's
/// slice of the model vector). forward() caches what backward() needs;
/// backward() accumulates parameter gradients into `grad`.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::size_t param_count() const { return 0; }
  /// He-uniform weights, zero biases, unit norm gains.
  virtual void init_params(std::span<T> params, Rng& rng) const { (void)params, (void)rng; }
  virtual Tensor<T> forward(const Tensor<T>& x, std::span<const T> params) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out, std::span<const T> params,
                             std::span<T> grad) = 0;

  const LayerSpec& spec() const { return spec_; }

 protected:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  LayerSpec spec_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

}  // namespace voxgrid::nn
