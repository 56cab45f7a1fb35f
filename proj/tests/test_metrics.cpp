#include <gtest/gtest.h>

#include <cmath>

#include "voxgrid/errors.hpp"
#include "voxgrid/metrics.hpp"
#include "voxgrid/random.hpp"

using namespace voxgrid;
using namespace voxgrid::metrics;

namespace {

// Rank by counting: (#less) + (#equal + 1) / 2, the mean of the tied span.
std::vector<long double> counted_ranks(const std::vector<double>& v) {
  std::vector<long double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    long double less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

double oracle_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = counted_ranks(a), rb = counted_ranks(b);
  const long double n = a.size();
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

std::vector<double> tied_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.below(n / 3 + 2));
  return v;
}

}  // namespace

TEST(AverageRanks, TiesShareMeanRank) {
  const std::vector<double> v{10, 20, 20, 5};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, Examples) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 6, 8, 100};
  const std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, down), -1.0);
  // Ranks (1,2,3,4,5) vs (1,3,2,4,5): 1 - 6*2/(5*24) = 0.9.
  EXPECT_DOUBLE_EQ(spearman(a, std::vector<double>{1, 3, 2, 4, 5}), 0.9);
  // With a tie: ranks (1, 2.5, 2.5, 4) vs (1,2,3,4) -> 4.5 / sqrt(4.5 * 5).
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}),
              std::sqrt(0.9), 1e-15);
  EXPECT_NEAR(std::sqrt(0.9), 0.9487, 1e-4);
}

TEST(Spearman, Errors) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_THROW(spearman(a, std::vector<double>{1, 2}), ArgumentError);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), ArgumentError);
  EXPECT_THROW(spearman(a, std::vector<double>{4, 4, 4}), UndefinedMetric);
}

TEST(Spearman, AgreesWithCountingOracleOnTiedData) {
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(60);
    const auto a = tied_vector(rng, n), b = tied_vector(rng, n);
    const auto ra = counted_ranks(a), rb = counted_ranks(b);
    if (std::all_of(ra.begin(), ra.end(), [&](auto x) { return x == ra[0]; }) ||
        std::all_of(rb.begin(), rb.end(), [&](auto x) { return x == rb[0]; })) {
      continue;
    }
    EXPECT_NEAR(spearman(a, b), oracle_spearman(a, b), 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(30), b(30);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.normal();
      b[i] = a[i] + rng.normal();
    }
    std::vector<double> fa(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) fa[i] = std::exp(a[i]) * 3 + 1;
    EXPECT_NEAR(spearman(fa, b), spearman(a, b), 1e-12);
    EXPECT_NEAR(spearman(b, a), spearman(a, b), 1e-12);
    std::vector<double> neg(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
    EXPECT_NEAR(spearman(neg, b), -spearman(a, b), 1e-12);
  }
}

TEST(Mae, Examples) {
  EXPECT_DOUBLE_EQ(mae(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 5}), 1.0);
  EXPECT_EQ(mae(std::vector<double>{1.5}, std::vector<double>{1.5}), 0.0);
  EXPECT_THROW(mae(std::vector<double>{1}, std::vector<double>{}), ArgumentError);
}

TEST(Labels, FitUsesPopulationStd) {
  const std::vector<double> v{1, 2, 3};
  const auto s = fit_labels(v, "pK");
  EXPECT_EQ(s.name, "pK");
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(2.0 / 3.0));
  const auto z = normalize(v, s);
  EXPECT_NEAR(z[0], -std::sqrt(1.5), 1e-15);
  EXPECT_EQ(z[1], 0.0);
}

TEST(Labels, ConstantLabelsCannotBeNormalized) {
  const std::vector<double> v{4, 4, 4};
  EXPECT_THROW(normalize(v, fit_labels(v)), UndefinedMetric);
}

TEST(Labels, RoundTrip) {
  Rng rng(23);
  std::vector<double> v(200);
  for (auto& x : v) x = rng.uniform(-50, 80);
  const auto s = fit_labels(v);
  const auto back = denormalize(normalize(v, s), s);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back[i], v[i], 1e-6);
}

TEST(Residuals, Examples) {
  const auto r = residual_stats(std::vector<double>{2, 2, 5, 4}, std::vector<double>{1, 3, 3, 4});
  // Residuals pred - target: 1, -1, 2, 0.
  EXPECT_DOUBLE_EQ(r.mean, 0.5);
  EXPECT_DOUBLE_EQ(r.std, std::sqrt((0.25 + 2.25 + 2.25 + 0.25) / 4));
  EXPECT_DOUBLE_EQ(r.overprediction, 0.5);
}
