#include "voxgrid/nn/optim.hpp"

#include <cmath>
#include <string>

#include "voxgrid/errors.hpp"

namespace voxgrid::nn {

template <typename T>
double mse_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ArgumentError("mse_loss: need equal, non-zero lengths (" + std::to_string(pred.size()) +
                        " vs " + std::to_string(target.size()) + ")");
  }
  if (!grad.empty() && grad.size() != pred.size()) throw ArgumentError("mse_loss: gradient length");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    if (!grad.empty()) grad[i] = static_cast<T>(2.0 * d / n);
  }
  return acc / n;
}

template double mse_loss<float>(std::span<const float>, std::span<const float>, std::span<float>);
template double mse_loss<double>(std::span<const double>, std::span<const double>, std::span<double>);

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& s) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw ArgumentError("adam_step: parameter, gradient and moment lengths differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("non-finite gradient at parameter " + std::to_string(i), -1);
    }
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    const double v = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    s.m[i] = static_cast<float>(m);
    s.v[i] = static_cast<float>(v);
    const double mhat = m / c1;
    const double vhat = v / c2;
    params[i] = static_cast<float>(params[i] - s.lr * mhat / (std::sqrt(vhat) + s.eps));
  }
}

}  // namespace voxgrid::nn
