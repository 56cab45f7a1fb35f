#include <vector>

#include "voxgrid/errors.hpp"
#include "voxgrid/splitter.hpp"

namespace voxgrid::split {
namespace {

// Alignment prefix state; compared by score, then matches, then shorter length.
struct Cell {
  double score;
  int matches;
  int length;

  bool better_than(const Cell& o) const {
    if (score != o.score) return score > o.score;
    if (matches != o.matches) return matches > o.matches;
    return length < o.length;
  }
};

}  // namespace

AlignmentSummary global_align(std::string_view a, std::string_view b,
                              const AlignmentScoring& scoring) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    prev[j] = {scoring.gap * static_cast<double>(j), 0, static_cast<int>(j)};
  }
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {scoring.gap * static_cast<double>(i), 0, static_cast<int>(i)};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = a[i - 1] == b[j - 1];
      Cell best{prev[j - 1].score + (same ? scoring.match : scoring.mismatch),
                prev[j - 1].matches + (same ? 1 : 0), prev[j - 1].length + 1};
      const Cell up{prev[j].score + scoring.gap, prev[j].matches, prev[j].length + 1};
      const Cell left{cur[j - 1].score + scoring.gap, cur[j - 1].matches, cur[j - 1].length + 1};
      if (up.better_than(best)) best = up;
      if (left.better_than(best)) best = left;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m];
  return {end.score, end.matches, end.length};
}

double sequence_identity(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) throw ArgumentError("sequence_identity needs non-empty sequences");
  if (a == b) return 1.0;
  const AlignmentSummary s = global_align(a, b);
  return static_cast<double>(s.matches) / static_cast<double>(s.length);
}

}  // namespace voxgrid::split
