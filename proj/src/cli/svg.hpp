#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace voxgrid::cli {

struct CurvePoint {
  double fraction = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds (0 for one seed)
  std::size_t runs = 0;
};

/// Line chart of mean metric against training fraction (log-scaled x axis)
/// with +-std error bars. Every point carries data-fraction, data-mean and
/// data-std attributes holding the exact values. Points must be sorted by
/// fraction.
std::string render_curve_svg(const std::vector<CurvePoint>& points, const std::string& metric,
                             const std::string& series);

}  // namespace voxgrid::cli
