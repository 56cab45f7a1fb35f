#include "voxgrid/nn/model.hpp"

#include <algorithm>

#include "voxgrid/errors.hpp"

namespace voxgrid::nn {
namespace {

// Ligand/pocket encoder: one residual block of two 16-channel convolutions.
LayerSpec pdbbind_encoder(int in) {
  return LayerSpec::residual(in, 16, {LayerSpec::conv3d(in, 16), LayerSpec::silu(),
                                      LayerSpec::conv3d(16, 16), LayerSpec::silu()});
}

LayerSpec gn_residual(int in, int out, int groups) {
  return LayerSpec::residual(in, out,
                             {LayerSpec::groupnorm(groups, in), LayerSpec::silu(),
                              LayerSpec::conv3d(in, out), LayerSpec::groupnorm(groups, out),
                              LayerSpec::silu(), LayerSpec::conv3d(out, out)});
}

LayerSpec attention_block(int c, int groups) {
  return LayerSpec::residual(c, c, {LayerSpec::groupnorm(groups, c), LayerSpec::self_attention(c)});
}

// Encoder half of a 3D U-Net: projection conv, four levels of two residual
// blocks with cumulative width multipliers [1, 2, 2, 4] (n, 2n, 4n, 16n),
// stride-2 convolutions between levels, and a two-block middle section.
LayerSpec unet_encoder(int in, int n, int groups, bool attention) {
  std::vector<LayerSpec> layers{LayerSpec::conv3d(in, n)};
  const int mult[] = {1, 2, 2, 4};
  int c = n;
  int width = n;
  for (int level = 0; level < 4; ++level) {
    width *= mult[level];
    const bool attn = attention && level >= 2;
    layers.push_back(gn_residual(c, width, groups));
    if (attn) layers.push_back(attention_block(width, groups));
    layers.push_back(gn_residual(width, width, groups));
    if (attn) layers.push_back(attention_block(width, groups));
    c = width;
    if (level < 3) layers.push_back(LayerSpec::conv3d(c, c, 2));
  }
  layers.push_back(gn_residual(c, c, groups));
  layers.push_back(gn_residual(c, c, groups));
  return LayerSpec::sequential(std::move(layers));
}

struct Family {
  bool complex;
  int width;   // 0 for the GNINA-style trunk
  int groups;
};

Family family(std::string_view id) {
  if (id == "pdbbind_tiny") return {true, 0, 0};
  if (id == "pdbbind_small") return {true, 8, 4};
  if (id == "pdbbind_default") return {true, 32, 16};
  if (id == "qm9_tiny") return {false, 8, 4};
  if (id == "qm9_small") return {false, 16, 8};
  if (id == "qm9_default") return {false, 32, 16};
  throw ArgumentError("unknown preset '" + std::string(id) + "'");
}

}  // namespace

const std::vector<std::string>& preset_ids() {
  static const std::vector<std::string> ids{"pdbbind_tiny", "pdbbind_small", "pdbbind_default",
                                            "qm9_tiny",     "qm9_small",     "qm9_default"};
  return ids;
}

ModelConfig make_preset(std::string_view id, std::vector<int> input_channels,
                        PresetOptions options) {
  const Family fam = family(id);
  const std::size_t inputs = fam.complex ? 2 : 1;
  if (input_channels.size() != inputs) {
    throw ArgumentError(std::string(id) + " takes " + std::to_string(inputs) + " input grid(s)");
  }
  for (int c : input_channels) {
    if (c < 1) throw ArgumentError("input channel counts must be positive");
  }
  ModelConfig cfg;
  cfg.preset = std::string(id);
  cfg.grid = options.grid > 0 ? options.grid : (fam.complex ? 64 : 32);
  if (cfg.grid % 8 != 0) throw ArgumentError("grid edge must be a multiple of 8");
  cfg.input_channels = input_channels;
  const int n = options.width > 0 ? options.width : fam.width;
  const int groups = options.groups > 0 ? options.groups : fam.groups;

  int trunk_in = input_channels[0];
  if (fam.complex) {
    for (int c : input_channels) cfg.encoders.push_back(pdbbind_encoder(c));
    trunk_in = 16;
  }

  if (fam.width == 0) {
    // GNINA Default2018-style trunk: five convolutions with interleaved pooling.
    cfg.body = LayerSpec::sequential(
        {LayerSpec::avgpool3d(2), LayerSpec::conv3d(trunk_in, 32), LayerSpec::relu(),
         LayerSpec::avgpool3d(2), LayerSpec::conv3d(32, 32), LayerSpec::relu(),
         LayerSpec::avgpool3d(2), LayerSpec::conv3d(32, 64), LayerSpec::relu(),
         LayerSpec::conv3d(64, 64), LayerSpec::relu(), LayerSpec::conv3d(64, 128),
         LayerSpec::relu()});
    const int edge = cfg.grid / 8;
    cfg.head = LayerSpec::sequential(
        {LayerSpec::flatten(), LayerSpec::linear(128 * edge * edge * edge, 1)});
    return cfg;
  }

  if (n % groups != 0) throw ArgumentError("width must be divisible by groups");
  const int top = 16 * n;
  cfg.body = unet_encoder(trunk_in, n, groups, /*attention=*/!fam.complex);
  if (fam.complex) {
    cfg.head = LayerSpec::sequential(
        {LayerSpec::global_avgpool(), LayerSpec::linear(top, top), LayerSpec::layernorm(top),
         LayerSpec::silu(), LayerSpec::linear(top, 64), LayerSpec::layernorm(64),
         LayerSpec::tanhshrink(), LayerSpec::linear(64, 1)});
  } else {
    cfg.head = LayerSpec::sequential(
        {LayerSpec::global_avgpool(), LayerSpec::linear(top, 64), LayerSpec::layernorm(64),
         LayerSpec::silu(), LayerSpec::linear(64, 32), LayerSpec::layernorm(32),
         LayerSpec::tanhshrink(), LayerSpec::linear(32, 1)});
  }
  return cfg;
}

Shape bottleneck_shape(const ModelConfig& config, int batch) {
  const int g = config.grid;
  Shape fused{batch, config.input_channels[0], g, g, g};
  if (!config.encoders.empty()) {
    fused = infer_shape(config.encoders[0], fused);
    for (std::size_t i = 1; i < config.encoders.size(); ++i) {
      Shape s = infer_shape(config.encoders[i], {batch, config.input_channels[i], g, g, g});
      if (s != fused) throw ShapeError("encoder outputs differ: " + shape_string(s) + " vs " + shape_string(fused));
    }
  }
  return infer_shape(config.body, fused);
}

std::size_t param_count(const ModelConfig& config) {
  std::size_t n = param_count(config.body) + param_count(config.head);
  for (const auto& e : config.encoders) n += param_count(e);
  return n;
}

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  const Shape b = bottleneck_shape(config_);
  const Shape out = infer_shape(config_.head, b);
  if (out != Shape{1, 1}) throw ShapeError("head must produce one scalar, got " + shape_string(out));
  std::size_t off = 0;
  for (const auto& e : config_.encoders) {
    encoders_.push_back(make_layer<T>(e));
    offsets_.push_back(off);
    off += encoders_.back()->param_count();
  }
  body_ = make_layer<T>(config_.body);
  offsets_.push_back(off);
  off += body_->param_count();
  head_ = make_layer<T>(config_.head);
  offsets_.push_back(off);
  off += head_->param_count();
  total_ = off;
}

template <typename T>
void Model<T>::init_params(std::span<T> params, std::uint64_t seed) const {
  if (params.size() != total_) throw ArgumentError("parameter vector has the wrong length");
  Rng rng(seed);
  for (std::size_t i = 0; i < encoders_.size(); ++i) {
    encoders_[i]->init_params(params.subspan(offsets_[i], encoders_[i]->param_count()), rng);
  }
  const std::size_t e = encoders_.size();
  body_->init_params(params.subspan(offsets_[e], body_->param_count()), rng);
  head_->init_params(params.subspan(offsets_[e + 1], head_->param_count()), rng);
}

template <typename T>
std::vector<T> Model<T>::init_params(std::uint64_t seed) const {
  std::vector<T> p(total_);
  init_params(std::span<T>(p), seed);
  return p;
}

template <typename T>
Tensor<T> Model<T>::forward(const std::vector<Tensor<T>>& inputs, std::span<const T> params) {
  if (inputs.size() != config_.input_channels.size()) {
    throw ShapeError(config_.preset + ": expected " + std::to_string(config_.input_channels.size()) +
                     " input grid(s), got " + std::to_string(inputs.size()));
  }
  if (params.size() != total_) throw ArgumentError("parameter vector has the wrong length");
  const std::size_t e = encoders_.size();
  Tensor<T> fused;
  if (e == 0) {
    fused = inputs[0];
  } else {
    fused = encoders_[0]->forward(inputs[0], params.subspan(offsets_[0], encoders_[0]->param_count()));
    for (std::size_t i = 1; i < e; ++i) {
      const Tensor<T> h =
          encoders_[i]->forward(inputs[i], params.subspan(offsets_[i], encoders_[i]->param_count()));
      if (h.shape != fused.shape) throw ShapeError("encoder outputs cannot be summed");
      for (std::size_t k = 0; k < h.size(); ++k) fused.data[k] += h.data[k];
    }
  }
  const Tensor<T> b = body_->forward(fused, params.subspan(offsets_[e], body_->param_count()));
  return head_->forward(b, params.subspan(offsets_[e + 1], head_->param_count()));
}

template <typename T>
void Model<T>::backward(const Tensor<T>& grad_out, std::span<const T> params, std::span<T> grad) {
  const std::size_t e = encoders_.size();
  auto slice = [&](auto span, std::size_t i, std::size_t n) { return span.subspan(offsets_[i], n); };
  const Tensor<T> db = head_->backward(grad_out, slice(params, e + 1, head_->param_count()),
                                       slice(grad, e + 1, head_->param_count()));
  const Tensor<T> dfused =
      body_->backward(db, slice(params, e, body_->param_count()), slice(grad, e, body_->param_count()));
  for (std::size_t i = 0; i < e; ++i) {
    const std::size_t n = encoders_[i]->param_count();
    encoders_[i]->backward(dfused, slice(params, i, n), slice(grad, i, n));
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace voxgrid::nn
