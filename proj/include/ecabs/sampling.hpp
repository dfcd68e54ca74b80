// Copyright 2026 The ecabs Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ecabs/core.hpp"
#include "ecabs/problem.hpp"

namespace ecabs {

enum class SamplingKind { Uniform, Importance, FullBatch };

inline std::string to_string(SamplingKind k) {
  switch (k) {
    case SamplingKind::Uniform: return "uniform";
    case SamplingKind::Importance: return "importance";
    case SamplingKind::FullBatch: return "full";
  }
  return "?";
}

/// Single-index sampling distributions D_i, one table per worker: drawing j
/// with probability prob[i][j] yields the estimator weight[i][j] * grad f_ij.
/// Unbiasedness: prob * weight = 1/m for every sample with nonzero smoothness.
struct SamplingScheme {
  SamplingKind kind = SamplingKind::Uniform;
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<std::vector<double>> prob;
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> cdf;  // cdf[i].back() == 1 exactly
};

struct SampleDraw {
  static constexpr std::size_t full_batch = std::numeric_limits<std::size_t>::max();
  std::size_t index = full_batch;
  double weight = 1.0;

  bool is_full_batch() const noexcept { return index == full_batch; }
};

/// Uniform: p = 1/m, w = 1. Importance: p_ij = L_ij/(m Lbar_i),
/// w_ij = Lbar_i/L_ij. A sample with L_ij = 0 is constant for the supported
/// losses, so it gets p = 0 (and w = 0); a worker whose samples are all
/// constant falls back to uniform.
inline SamplingScheme make_scheme(SamplingKind kind, const SmoothnessConstants& k) {
  SamplingScheme s;
  s.kind = kind;
  s.n = static_cast<std::size_t>(k.sample.rows());
  s.m = static_cast<std::size_t>(k.sample.cols());
  require(s.n > 0 && s.m > 0, "make_scheme: empty smoothness table");
  const double inv_m = 1.0 / static_cast<double>(s.m);
  s.prob.assign(s.n, std::vector<double>(s.m, inv_m));
  s.weight.assign(s.n, std::vector<double>(s.m, 1.0));

  if (kind == SamplingKind::Importance) {
    for (std::size_t i = 0; i < s.n; ++i) {
      const double lbar = k.worker_mean[static_cast<Eigen::Index>(i)];
      for (std::size_t j = 0; j < s.m; ++j) {
        const double lij = k.sample(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (!std::isfinite(lij) || lij < 0.0)
          throw UsageError("make_scheme: per-sample smoothness must be finite and >= 0");
      }
      if (lbar == 0.0) continue;
      for (std::size_t j = 0; j < s.m; ++j) {
        const double lij = k.sample(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        s.prob[i][j] = lij / (static_cast<double>(s.m) * lbar);
        s.weight[i][j] = lij > 0.0 ? lbar / lij : 0.0;
      }
    }
  }

  s.cdf.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    auto& c = s.cdf[i];
    c.resize(s.m);
    double acc = 0.0;
    for (std::size_t j = 0; j < s.m; ++j) c[j] = (acc += s.prob[i][j]);
    // Pin the last positive-probability bucket to 1 so u in [0, 1) always lands.
    std::size_t last = s.m;
    while (last > 0 && s.prob[i][last - 1] == 0.0) --last;
    for (std::size_t j = last == 0 ? 0 : last - 1; j < s.m; ++j) c[j] = 1.0;
  }
  return s;
}

/// Inverse-CDF draw for worker i. FullBatch returns the full-batch marker.
inline SampleDraw draw(const SamplingScheme& s, std::size_t i, Rng& rng) {
  require(i < s.n, "draw: worker index out of range");
  if (s.kind == SamplingKind::FullBatch) return {};
  const double u = rng.uniform();
  const auto& c = s.cdf[i];
  const auto it = std::upper_bound(c.begin(), c.end(), u);
  const auto j = static_cast<std::size_t>(it - c.begin());
  return {j, s.weight[i][j]};
}

/// Expected-smoothness constant: max_ij L_ij (uniform), max_i Lbar_i
/// (importance), max_i L_i (full batch).
inline double expected_smoothness(const SamplingScheme& s, const SmoothnessConstants& k) {
  switch (s.kind) {
    case SamplingKind::Uniform: return k.max_sample();
    case SamplingKind::Importance: return k.max_worker_mean();
    case SamplingKind::FullBatch: return k.max_worker();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// sigma_*^2 = 1/n sum_i E||w grad f_ij(x*) - grad f_i(x*)||^2, computed by
/// exact summation over the sampling tables.
template <class Loss>
double sigma_star_sq(const SamplingScheme& s, const FiniteSumObjective<Loss>& obj, const Vector& x_star) {
  require(s.n == obj.n() && s.m == static_cast<std::size_t>(obj.m()), "sigma_star_sq: scheme/objective mismatch");
  if (s.kind == SamplingKind::FullBatch) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    const Vector gi = obj.worker_grad(i, x_star);
    double acc = 0.0;
    for (std::size_t j = 0; j < s.m; ++j) {
      if (s.prob[i][j] == 0.0) continue;
      const Vector gij = obj.sample_grad(i, static_cast<Eigen::Index>(j), x_star);
      acc += s.prob[i][j] * (s.weight[i][j] * gij - gi).squaredNorm();
    }
    total += acc;
  }
  return total / static_cast<double>(s.n);
}

}  // namespace ecabs
