#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace voxgrid::split {

/// Fixed-width bitset used for ligand fingerprints.
class Fingerprint {
 public:
  Fingerprint() = default;
  explicit Fingerprint(std::size_t width) : width_(width), words_((width + 63) / 64, 0) {}
  /// Parses a hex string, most significant nibble first; width = 4 * length.
  static Fingerprint from_hex(std::string_view hex);
  static Fingerprint from_bits(std::size_t width, std::initializer_list<std::size_t> bits);

  std::size_t width() const { return width_; }
  void set(std::size_t bit);
  bool test(std::size_t bit) const;
  std::size_t count() const;
  std::string to_hex() const;
  const std::vector<std::uint64_t>& words() const { return words_; }

 private:
  std::size_t width_ = 0;
  std::vector<std::uint64_t> words_;
};

/// |a & b| / |a | b|; 1.0 when both are empty. Throws ArgumentError on width mismatch.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

struct AlignmentScoring {
  double match = 1.0;
  double mismatch = 0.0;
  double gap = -0.5;
};

struct AlignmentSummary {
  double score = 0.0;
  int matches = 0;
  int length = 0;
};

/// Global alignment maximizing score, ties broken toward more matches.
AlignmentSummary global_align(std::string_view a, std::string_view b,
                              const AlignmentScoring& scoring = {});

/// matches / alignment length of the optimal global alignment (match +1,
/// mismatch 0, gap -0.5). Throws ArgumentError when either input is empty.
double sequence_identity(std::string_view a, std::string_view b);

struct ComplexMeta {
  std::string id;
  std::string receptor_sequence;
  Fingerprint fingerprint;
  double label = 0.0;
};

struct LinkageThresholds {
  double seq_hi = 0.5;
  double seq_lo = 0.4;
  double tanimoto = 0.9;

  void validate() const;
  /// The co-assignment rule: seq > hi, or seq > lo and tanimoto > t.
  bool linked(double seq_id, double tani) const {
    return seq_id > seq_hi || (seq_id > seq_lo && tani > tanimoto);
  }
};

/// Pairwise receptor identity source. The default aligns sequences (memoized
/// per distinct sequence pair); a precomputed matrix can be plugged in.
using IdentityFn = std::function<double(std::size_t, std::size_t)>;

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n);
  std::size_t find(std::size_t x);
  bool unite(std::size_t a, std::size_t b);
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

/// Clusters as sorted lists of item indices, ordered by smallest member.
using Clusters = std::vector<std::vector<std::size_t>>;

/// Connected components of the linkage graph.
Clusters build_linkage(const std::vector<ComplexMeta>& items, const LinkageThresholds& t = {},
                       const IdentityFn& identity = {});

enum class SplitName { Train, Val, Test };
std::string_view to_string(SplitName s);

struct SplitAssignment {
  std::map<std::string, SplitName> assignment;
  std::array<double, 3> target{};
  std::array<std::size_t, 3> counts{};
  std::uint64_t seed = 0;
  LinkageThresholds thresholds;

  std::array<double, 3> achieved() const;
  std::vector<std::string> ids(SplitName s) const;
};

/// Pinned clusters go to test; the rest are shuffled by seed, ordered largest
/// first and each placed into the split furthest below its target fraction.
SplitAssignment assign_splits(const Clusters& clusters, const std::vector<ComplexMeta>& items,
                              std::array<double, 3> fractions, const std::set<std::string>& pinned,
                              std::uint64_t seed);

struct Violation {
  std::string a;
  std::string b;
  double seq_id;
  double tanimoto;
};

/// Every cross-split pair that satisfies the co-assignment rule.
std::vector<Violation> verify_no_leakage(const SplitAssignment& assignment,
                                         const std::vector<ComplexMeta>& items,
                                         const LinkageThresholds& t = {},
                                         const IdentityFn& identity = {});

/// Uniform sample without replacement of max(1, round(fraction * n)) ids. Prefixes
/// of one seeded permutation, so smaller fractions nest inside larger ones.
std::vector<std::string> subset(const std::vector<std::string>& ids, double fraction,
                                std::uint64_t seed);

/// Identity function that aligns each distinct sequence pair once.
IdentityFn memoized_identity(const std::vector<ComplexMeta>& items);

}  // namespace voxgrid::split
