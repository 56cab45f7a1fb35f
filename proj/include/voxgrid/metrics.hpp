#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxgrid::metrics {

/// Raised when a metric is undefined for the input (constant ranks, zero std).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 1-based ranks; ties share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws ArgumentError on length
/// mismatch or fewer than two points, UndefinedMetric when either side is constant.
double spearman(std::span<const double> pred, std::span<const double> target);

double mae(std::span<const double> pred, std::span<const double> target);

struct LabelStats {
  std::string name;
  double mean = 0.0;
  double std = 1.0;  // population
};

LabelStats fit_labels(std::span<const double> values, std::string name = {});
/// (v - mean) / std. Throws UndefinedMetric when std is not positive.
std::vector<double> normalize(std::span<const double> values, const LabelStats& stats);
std::vector<double> denormalize(std::span<const double> values, const LabelStats& stats);

struct ResidualStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double overprediction = 0.0;  // fraction of pred - target > 0
};

ResidualStats residual_stats(std::span<const double> pred, std::span<const double> target);

}  // namespace voxgrid::metrics
