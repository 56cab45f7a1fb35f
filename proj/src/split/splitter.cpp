#include "voxgrid/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <unordered_map>

#include "voxgrid/errors.hpp"
#include "voxgrid/random.hpp"

namespace voxgrid::split {
namespace {

// Identity can never exceed min(len)/max(len): matches <= shorter length and
// the alignment is at least as long as the longer sequence.
double identity_upper_bound(const std::string& a, const std::string& b) {
  const double la = static_cast<double>(a.size()), lb = static_cast<double>(b.size());
  return std::min(la, lb) / std::max(la, lb);
}

struct PairTest {
  const std::vector<ComplexMeta>& items;
  const LinkageThresholds& t;
  const IdentityFn& identity;

  // Returns true and fills seq/tani when i and j must share a split.
  bool linked(std::size_t i, std::size_t j, double& seq, double& tani) const {
    tani = tanimoto(items[i].fingerprint, items[j].fingerprint);
    const double needed = tani > t.tanimoto ? t.seq_lo : t.seq_hi;
    if (identity_upper_bound(items[i].receptor_sequence, items[j].receptor_sequence) <= needed) {
      return false;
    }
    seq = identity(i, j);
    return t.linked(seq, tani);
  }
};

IdentityFn default_identity(const std::vector<ComplexMeta>& items, const IdentityFn& identity) {
  for (const auto& it : items) {
    if (it.receptor_sequence.empty()) {
      throw ArgumentError("item '" + it.id + "' has an empty receptor sequence");
    }
  }
  return identity ? identity : memoized_identity(items);
}

}  // namespace

void LinkageThresholds::validate() const {
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(seq_hi) || !unit(seq_lo) || !unit(tanimoto)) {
    throw ArgumentError("linkage thresholds must lie in [0, 1]");
  }
  if (seq_lo > seq_hi) throw ArgumentError("seq_lo must not exceed seq_hi");
}

DisjointSet::DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) {
  std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t DisjointSet::find(std::size_t x) {
  std::size_t root = x;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[x] != root) {
    const std::size_t next = parent_[x];
    parent_[x] = root;
    x = next;
  }
  return root;
}

bool DisjointSet::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

IdentityFn memoized_identity(const std::vector<ComplexMeta>& items) {
  // Distinct sequences get dense ids; the cache is keyed on the id pair.
  auto seq_id = std::make_shared<std::vector<std::size_t>>(items.size());
  auto distinct = std::make_shared<std::vector<std::string>>();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, inserted] = index.emplace(items[i].receptor_sequence, distinct->size());
    if (inserted) distinct->push_back(items[i].receptor_sequence);
    (*seq_id)[i] = it->second;
  }
  auto cache = std::make_shared<std::unordered_map<std::uint64_t, double>>();
  return [seq_id, distinct, cache](std::size_t i, std::size_t j) {
    std::size_t a = (*seq_id)[i], b = (*seq_id)[j];
    if (a == b) return 1.0;
    if (a > b) std::swap(a, b);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
    if (auto it = cache->find(key); it != cache->end()) return it->second;
    const double v = sequence_identity((*distinct)[a], (*distinct)[b]);
    cache->emplace(key, v);
    return v;
  };
}

Clusters build_linkage(const std::vector<ComplexMeta>& items, const LinkageThresholds& t,
                       const IdentityFn& identity) {
  t.validate();
  const IdentityFn id = default_identity(items, identity);
  const PairTest test{items, t, id};
  DisjointSet ds(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (ds.find(i) == ds.find(j)) continue;
      double seq = 0.0, tani = 0.0;
      if (test.linked(i, j, seq, tani)) ds.unite(i, j);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < items.size(); ++i) by_root[ds.find(i)].push_back(i);
  Clusters out;
  for (auto& [root, members] : by_root) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::Test: return "test";
  }
  return "?";
}

std::array<double, 3> SplitAssignment::achieved() const {
  const double n = static_cast<double>(counts[0] + counts[1] + counts[2]);
  if (n == 0) return {0, 0, 0};
  return {counts[0] / n, counts[1] / n, counts[2] / n};
}

std::vector<std::string> SplitAssignment::ids(SplitName s) const {
  std::vector<std::string> out;
  for (const auto& [id, split] : assignment) {
    if (split == s) out.push_back(id);
  }
  return out;
}

SplitAssignment assign_splits(const Clusters& clusters, const std::vector<ComplexMeta>& items,
                              std::array<double, 3> fractions, const std::set<std::string>& pinned,
                              std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ArgumentError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("split fractions must sum to 1");
  std::set<std::string> known;
  for (const auto& it : items) known.insert(it.id);
  for (const auto& p : pinned) {
    if (!known.count(p)) throw ArgumentError("pinned id '" + p + "' is not in the dataset");
  }

  SplitAssignment out;
  out.target = fractions;
  out.seed = seed;
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.size();

  const auto place = [&](const std::vector<std::size_t>& cluster, SplitName s) {
    for (std::size_t idx : cluster) out.assignment[items.at(idx).id] = s;
    out.counts[static_cast<int>(s)] += cluster.size();
  };

  std::vector<std::size_t> free;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const bool is_pinned = std::any_of(clusters[c].begin(), clusters[c].end(),
                                       [&](std::size_t idx) { return pinned.count(items.at(idx).id) > 0; });
    if (is_pinned) {
      place(clusters[c], SplitName::Test);
    } else {
      free.push_back(c);
    }
  }
  Rng rng(seed);
  rng.shuffle(free);
  std::stable_sort(free.begin(), free.end(), [&](std::size_t a, std::size_t b) {
    return clusters[a].size() > clusters[b].size();
  });
  for (std::size_t c : free) {
    int best = 0;
    double best_deficit = -INFINITY;
    for (int s = 0; s < 3; ++s) {
      const double deficit = fractions[s] * static_cast<double>(n) - static_cast<double>(out.counts[s]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    place(clusters[c], static_cast<SplitName>(best));
  }
  return out;
}

std::vector<Violation> verify_no_leakage(const SplitAssignment& assignment,
                                         const std::vector<ComplexMeta>& items,
                                         const LinkageThresholds& t, const IdentityFn& identity) {
  t.validate();
  const IdentityFn id = default_identity(items, identity);
  const PairTest test{items, t, id};
  std::vector<SplitName> where(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto it = assignment.assignment.find(items[i].id);
    if (it == assignment.assignment.end()) {
      throw ArgumentError("item '" + items[i].id + "' has no split assignment");
    }
    where[i] = it->second;
  }
  std::vector<Violation> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (where[i] == where[j]) continue;
      double seq = 0.0, tani = 0.0;
      if (test.linked(i, j, seq, tani)) out.push_back({items[i].id, items[j].id, seq, tani});
    }
  }
  return out;
}

std::vector<std::string> subset(const std::vector<std::string>& ids, double fraction,
                                std::uint64_t seed) {
  if (ids.empty()) throw ArgumentError("subset of an empty id list");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("subset fraction must be in (0, 1]");
  std::vector<std::string> order = ids;
  Rng rng(seed);
  rng.shuffle(order);
  const auto k = std::max<long>(1, std::lround(fraction * static_cast<double>(ids.size())));
  order.resize(static_cast<std::size_t>(k));
  return order;
}

}  // namespace voxgrid::split
