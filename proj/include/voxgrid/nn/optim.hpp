#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace voxgrid::nn {

/// Mean squared error accumulated in double. Writes dL/dpred into grad when
/// it is non-empty.
template <typename T>
double mse_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {});

struct AdamState {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;

  AdamState() = default;
  explicit AdamState(std::size_t n, double learning_rate = 1e-5)
      : lr(learning_rate), m(n, 0.0f), v(n, 0.0f) {}
};

/// Bias-corrected Adam update. Throws NumericalError (epoch -1) when a
/// gradient is not finite; parameters are left untouched in that case.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state);

}  // namespace voxgrid::nn
