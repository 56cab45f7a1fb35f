#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace voxgrid::nn {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::string shape_string(const Shape& s);

/// Dense row-major tensor: (N, C, D, H, W) for volumes or (N, F) for features.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {}

  int dim(std::size_t i) const { return shape[i]; }
  std::size_t size() const { return data.size(); }
  int batch() const { return shape.empty() ? 0 : shape[0]; }
  /// Elements per batch item.
  std::size_t item_size() const { return shape.empty() ? 0 : data.size() / shape[0]; }
  T* item(int n) { return data.data() + static_cast<std::size_t>(n) * item_size(); }
  const T* item(int n) const { return data.data() + static_cast<std::size_t>(n) * item_size(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

}  // namespace voxgrid::nn
