#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "voxgrid/nn/layers.hpp"
#include "voxgrid/random.hpp"

namespace voxgrid::testutil {

struct GradCheckCase {
  nn::LayerSpec spec;
  nn::Shape input;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Relative error with the denominator floored, so coordinates whose true
// derivative is ~0 are judged on absolute error instead.
inline double rel_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares backward() in double against central differences of the scalar
// loss sum(w * forward(x)) with random w. At most `max_coords` input and
// parameter coordinates are probed (all of them when fewer exist).
inline GradCheckResult grad_check(const GradCheckCase& c, std::uint64_t seed, std::size_t max_coords = 400,
                                  double h = 1e-6) {
  Rng rng(seed);
  auto layer = nn::make_layer<double>(c.spec);
  std::vector<double> params(layer->param_count());
  layer->init_params(params, rng);
  for (auto& p : params) p += rng.uniform(-0.3, 0.3);  // non-trivial biases and gains

  nn::Tensor<double> x(c.input);
  for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
  const nn::Shape out_shape = nn::infer_shape(c.spec, c.input);
  std::vector<double> w(nn::shape_size(out_shape));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);

  auto loss = [&](const nn::Tensor<double>& in, const std::vector<double>& p) {
    const auto y = layer->forward(in, p);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y.data[i];
    return s;
  };

  layer->forward(x, params);
  nn::Tensor<double> dy(out_shape, w);
  std::vector<double> dparams(params.size(), 0.0);
  const auto dx = layer->backward(dy, params, dparams);

  GradCheckResult r;
  auto probe = [&](std::size_t n, auto&& value_at, const std::vector<double>& analytic) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > max_coords) {
      rng.shuffle(idx);
      idx.resize(max_coords);
    }
    for (std::size_t i : idx) {
      double& v = value_at(i);
      const double saved = v;
      v = saved + h;
      const double up = loss(x, params);
      v = saved - h;
      const double down = loss(x, params);
      v = saved;
      r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic[i], (up - down) / (2 * h)));
      ++r.checked;
    }
  };
  probe(x.size(), [&](std::size_t i) -> double& { return x.data[i]; }, dx.data);
  probe(params.size(), [&](std::size_t i) -> double& { return params[i]; }, dparams);
  return r;
}

// Randomized small cases covering every layer kind, composites included.
inline std::vector<GradCheckCase> grad_check_cases(std::uint64_t seed, int per_kind = 2) {
  using nn::LayerSpec;
  Rng rng(seed);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(hi - lo + 1)); };
  auto vol = [&](int n, int c, int lo, int hi) {
    return nn::Shape{n, c, pick(lo, hi), pick(lo, hi), pick(lo, hi)};
  };
  std::vector<GradCheckCase> cases;
  for (int k = 0; k < per_kind; ++k) {
    const int n = pick(1, 2);
    const int ci = pick(1, 3), co = pick(1, 3);
    cases.push_back({LayerSpec::conv3d(ci, co, 1, 3), vol(n, ci, 2, 6)});
    cases.push_back({LayerSpec::conv3d(ci, co, 2, 3), vol(n, ci, 3, 6)});
    cases.push_back({LayerSpec::conv3d(ci, co, 1, 1), vol(n, ci, 1, 3)});
    const int e = 2 * pick(1, 3);
    cases.push_back({LayerSpec::avgpool3d(2), {n, ci, e, 2, e}});
    cases.push_back({LayerSpec::relu(), vol(n, ci, 2, 6)});
    cases.push_back({LayerSpec::silu(), vol(n, ci, 2, 6)});
    cases.push_back({LayerSpec::tanhshrink(), {n, pick(2, 6)}});
    const int g = pick(1, 2);
    const int gc = g * pick(1, 3);
    cases.push_back({LayerSpec::groupnorm(g, gc), vol(n, gc, 2, 6)});
    const int f = pick(2, 6);
    cases.push_back({LayerSpec::layernorm(f), {n, f}});
    cases.push_back({LayerSpec::linear(f, pick(1, 4)), {n, f}});
    const int ac = pick(1, 4);
    cases.push_back({LayerSpec::self_attention(ac), vol(n, ac, 1, 4)});
    cases.push_back({LayerSpec::global_avgpool(), vol(n, ci, 1, 3)});
    cases.push_back({LayerSpec::flatten(), vol(n, ci, 1, 3)});
    cases.push_back({LayerSpec::residual(ci, co, {LayerSpec::conv3d(ci, co), LayerSpec::silu(),
                                                  LayerSpec::conv3d(co, co)}),
                     vol(n, ci, 2, 3)});
    cases.push_back({LayerSpec::residual(2, 2, {LayerSpec::groupnorm(2, 2), LayerSpec::self_attention(2)}),
                     vol(n, 2, 1, 3)});
    cases.push_back({LayerSpec::sequential({LayerSpec::global_avgpool(), LayerSpec::linear(ci, 3),
                                            LayerSpec::layernorm(3), LayerSpec::tanhshrink(),
                                            LayerSpec::linear(3, 1)}),
                     vol(n, ci, 1, 2)});
  }
  return cases;
}

}  // namespace voxgrid::testutil
