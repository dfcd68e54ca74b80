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

#include <cstdint>
#include <string>
#include <vector>

#include "ecabs/core.hpp"
#include "ecabs/problem.hpp"
#include "ecabs/sampling.hpp"

namespace ecabs {

enum class EstimatorKind {
  SgdAs,  // g_i = grad f_{xi_i}(x)
  Lsvrg,  // g_i = grad f_{xi_i}(x) - grad f_{xi_i}(w) + grad f_i(w)
};

inline std::string to_string(EstimatorKind k) { return k == EstimatorKind::SgdAs ? "ec-sgd" : "ec-lsvrg"; }

/// Mutable per-run estimator state. For LSVRG, `w_ref` is the global
/// reference point and `cached_full_grads[i]` = grad f_i(w_ref).
struct EstimatorState {
  EstimatorKind kind = EstimatorKind::SgdAs;
  double p = 0.0;             // reference refresh probability (LSVRG)
  double expected_smoothness = 0.0;
  Vector w_ref;
  std::vector<Vector> cached_full_grads;
  std::vector<std::uint64_t> cache_checksums;
  std::uint64_t ref_checksum = 0;
  std::uint64_t full_grad_evals = 0;  // worker full-gradient evaluations
  std::uint64_t reference_updates = 0;
};

template <class Loss>
void refresh_reference(EstimatorState& s, const FiniteSumObjective<Loss>& obj, const Vector& w) {
  s.w_ref = w;
  s.ref_checksum = checksum(s.w_ref);
  s.cached_full_grads.resize(obj.n());
  s.cache_checksums.resize(obj.n());
  for (std::size_t i = 0; i < obj.n(); ++i) {
    s.cached_full_grads[i] = obj.worker_grad(i, s.w_ref);
    s.cache_checksums[i] = checksum(s.cached_full_grads[i]);
  }
  s.full_grad_evals += obj.n();
}

/// Builds the state with w^0 = x^0. `lexp` is the expected-smoothness constant
/// used by sigma_k_sq.
template <class Loss>
EstimatorState make_estimator(EstimatorKind kind, double p, double lexp, const FiniteSumObjective<Loss>& obj,
                              const Vector& x0) {
  EstimatorState s;
  s.kind = kind;
  s.p = p;
  s.expected_smoothness = lexp;
  if (kind == EstimatorKind::Lsvrg) {
    require(p >= 0.0 && p <= 1.0, "lsvrg: p must lie in [0, 1]");
    refresh_reference(s, obj, x0);
  }
  return s;
}

inline void verify_cache(const EstimatorState& s, std::size_t i) {
  if (checksum(s.w_ref) != s.ref_checksum || checksum(s.cached_full_grads[i]) != s.cache_checksums[i])
    throw InternalError("lsvrg: stale reference cache for worker " + std::to_string(i));
}

/// Per-worker stochastic gradient g_i^k. Read-only on the state, so workers
/// can call it concurrently; each worker must pass its own rng stream. The
/// same drawn sample is used at x and at w_ref.
template <class Loss>
Vector estimate(const EstimatorState& s, const FiniteSumObjective<Loss>& obj, const SamplingScheme& scheme,
                std::size_t i, const Vector& x, Rng& rng) {
  const SampleDraw dr = draw(scheme, i, rng);
  if (s.kind == EstimatorKind::SgdAs) {
    if (dr.is_full_batch()) return obj.worker_grad(i, x);
    return dr.weight * obj.sample_grad(i, static_cast<Eigen::Index>(dr.index), x);
  }
  verify_cache(s, i);
  if (dr.is_full_batch()) return obj.worker_grad(i, x) - obj.worker_grad(i, s.w_ref) + s.cached_full_grads[i];
  const auto j = static_cast<Eigen::Index>(dr.index);
  return dr.weight * (obj.sample_grad(i, j, x) - obj.sample_grad(i, j, s.w_ref)) + s.cached_full_grads[i];
}

/// One shared Bernoulli(p) coin for all workers: on success w_ref <- x (the
/// current iterate x^k) and every cached local full gradient is recomputed.
template <class Loss>
bool maybe_update_reference(EstimatorState& s, const FiniteSumObjective<Loss>& obj, const Vector& x, Rng& coin) {
  require(s.kind == EstimatorKind::Lsvrg, "maybe_update_reference: only defined for lsvrg");
  if (!coin.bernoulli(s.p)) return false;
  refresh_reference(s, obj, x);
  ++s.reference_updates;
  return true;
}

/// sigma_k^2 = 2 Lexp (f(w^k) - f*) for LSVRG; identically 0 for SGD-AS.
template <class Loss>
double sigma_k_sq(const EstimatorState& s, const FiniteSumObjective<Loss>& obj, double f_star) {
  if (s.kind == EstimatorKind::SgdAs) return 0.0;
  return 2.0 * s.expected_smoothness * (obj.value(s.w_ref) - f_star);
}

}  // namespace ecabs
