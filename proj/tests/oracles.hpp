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

#include <functional>
#include <vector>

#include "ecabs/ecabs.hpp"

namespace ecabs::oracle {

/// g_i for sample j written out from the estimator definitions, without going
/// through ecabs::estimate.
template <class Loss>
Vector worker_estimate(EstimatorKind kind, const FiniteSumObjective<Loss>& obj, const SamplingScheme& s,
                       std::size_t i, std::size_t j, const Vector& x, const Vector& w) {
  const auto jj = static_cast<Eigen::Index>(j);
  const double wt = s.weight[i][j];
  if (kind == EstimatorKind::SgdAs) return wt * obj.sample_grad(i, jj, x);
  return wt * obj.sample_grad(i, jj, x) - wt * obj.sample_grad(i, jj, w) + obj.worker_grad(i, w);
}

struct Moments {
  Vector mean;
  double second = 0.0;  // E||g||^2
  double total_prob = 0.0;
};

/// Exact E[g] and E||g||^2 for g = 1/n sum_i g_i by enumerating all m^n joint
/// draws (j_1, ..., j_n).
template <class Loss>
Moments enumerate(EstimatorKind kind, const FiniteSumObjective<Loss>& obj, const SamplingScheme& s, const Vector& x,
                  const Vector& w) {
  const std::size_t n = obj.n();
  const auto m = static_cast<std::size_t>(obj.m());
  std::vector<std::vector<Vector>> gij(n, std::vector<Vector>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) gij[i][j] = worker_estimate(kind, obj, s, i, j, x, w);

  Moments out;
  out.mean = Vector::Zero(obj.d());
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    double p = 1.0;
    Vector g = Vector::Zero(obj.d());
    for (std::size_t i = 0; i < n; ++i) {
      p *= s.prob[i][idx[i]];
      g += gij[i][idx[i]];
    }
    g /= static_cast<double>(n);
    out.mean += p * g;
    out.second += p * g.squaredNorm();
    out.total_prob += p;
    std::size_t pos = 0;
    while (pos < n && ++idx[pos] == m) idx[pos++] = 0;
    if (pos == n) break;
  }
  return out;
}

}  // namespace ecabs::oracle
