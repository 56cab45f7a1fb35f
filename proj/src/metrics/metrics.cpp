#include "voxgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxgrid/errors.hpp"

namespace voxgrid::metrics {
namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) {
    throw ArgumentError("length mismatch: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (a.size() < min_len) {
    throw ArgumentError("need at least " + std::to_string(min_len) + " values");
  }
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) hold ranks i+1..j+1.
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target, 2);
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(target);
  const double n = static_cast<double>(rp.size());
  const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
  const double mt = std::accumulate(rt.begin(), rt.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    const double dx = rp[i] - mp, dy = rt[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("spearman is undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mae(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

LabelStats fit_labels(std::span<const double> values, std::string name) {
  if (values.empty()) throw ArgumentError("fit_labels needs at least one value");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {std::move(name), mean, std::sqrt(ss / n)};
}

std::vector<double> normalize(std::span<const double> values, const LabelStats& stats) {
  if (!(stats.std > 0.0)) {
    throw UndefinedMetric("label '" + stats.name + "' has zero spread; cannot normalize");
  }
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - stats.mean) / stats.std;
  return out;
}

std::vector<double> denormalize(std::span<const double> values, const LabelStats& stats) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * stats.std + stats.mean;
  return out;
}

ResidualStats residual_stats(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target, 1);
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  std::size_t over = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    sum += e;
    if (e > 0.0) ++over;
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i] - mean;
    ss += e * e;
  }
  return {mean, std::sqrt(ss / n), static_cast<double>(over) / n};
}

}  // namespace voxgrid::metrics
