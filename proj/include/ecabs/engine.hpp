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
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ecabs/compressors.hpp"
#include "ecabs/core.hpp"
#include "ecabs/estimators.hpp"
#include "ecabs/problem.hpp"
#include "ecabs/sampling.hpp"

namespace ecabs {

struct RunConfig {
  double gamma = 0.0;
  std::size_t iterations = 1;  // K
  CompressorSpec compressor = IdentityCompressor{};
  EstimatorKind estimator = EstimatorKind::SgdAs;
  double p = 0.0;  // LSVRG refresh probability
  SamplingKind sampling = SamplingKind::Uniform;
  std::uint64_t seed = 0;
  std::optional<double> eta_override;  // weight decay of the averaged point
  std::size_t record_every = 1;
  bool parallel = false;
  int threads = 4;  // worker threads when `parallel` is set
  std::optional<Vector> x0;  // defaults to zero
};

struct TraceRecord {
  std::size_t k = 0;
  double f_gap_x = 0.0;    // f(x^k) - f*
  double f_gap_avg = 0.0;  // f(xbar^k) - f*
  double bits_cum = 0.0;   // cumulative bits sent, averaged over workers
  std::uint64_t bits_total = 0;
  double err_norm_sq = 0.0;       // ||e^k||^2, e^k the worker-mean error
  double virtual_residual = 0.0;  // ||xtilde^k - (x^k - e^k)||
  double sigma_k_sq = 0.0;
};

// ---------------------------------------------------------------------------
// Weighted average  xbar^K = 1/W_K sum_k w_k x^k,  w_k = (1 - eta)^-(k+1)
// ---------------------------------------------------------------------------

/// Maintains xbar incrementally as xbar <- xbar + r_k (x^k - xbar) with
/// r_k = w_k / W_k = eta / (1 - (1 - eta)^(k+1)), evaluated in log space.
/// Raw weights are never formed, so any K is safe.
class WeightedAverage {
 public:
  explicit WeightedAverage(double eta = 0.0) : eta_(eta) {
    require(eta >= 0.0 && eta < 1.0, "weighted average: eta must lie in [0, 1)");
  }

  double eta() const noexcept { return eta_; }
  std::size_t count() const noexcept { return count_; }
  const Vector& value() const { return mean_; }

  /// Weight of the k-th point relative to the total, k = 0, 1, ...
  double ratio(std::size_t k) const {
    if (eta_ == 0.0) return 1.0 / static_cast<double>(k + 1);
    const double denom = -std::expm1(static_cast<double>(k + 1) * std::log1p(-eta_));
    return eta_ / denom;
  }

  void push(const Vector& x) {
    if (count_ == 0) {
      mean_ = x;
    } else {
      mean_ += ratio(count_) * (x - mean_);
    }
    ++count_;
  }

 private:
  double eta_;
  std::size_t count_ = 0;
  Vector mean_;
};

// ---------------------------------------------------------------------------
// One worker's error-compensated step
// ---------------------------------------------------------------------------

struct WorkerStep {
  CompressedMessage message;  // C((e + gamma g) / gamma)
  Vector v;                   // gamma C(...), what the server receives
  Vector e_next;              // e + gamma g - v
};

/// v = gamma C((e + gamma g)/gamma), e' = e + gamma g - v. The residual is
/// formed as gamma (u - C(u)) with u = (e + gamma g)/gamma, which equals
/// e + gamma g - v in exact arithmetic and keeps e' exactly zero on every
/// coordinate the compressor transmits unchanged.
inline WorkerStep error_compensated_step(const Vector& e, const Vector& g, double gamma,
                                         const CompressorSpec& spec, Rng& rng) {
  const Vector u = (e + gamma * g) / gamma;
  WorkerStep out;
  out.message = compress(spec, u, rng);
  const Vector c = reconstruct(out.message);
  out.v = gamma * c;
  out.e_next = gamma * (u - c);
  return out;
}

/// Floating-point check of ||e||^2 <= (gamma * b)^2 d for a per-coordinate bound
/// b. The right side is accumulated term by term in the same order as the
/// left; rounding is monotone, so a coordinatewise bound |e_j| <= fl(gamma b)
/// carries over to the sums without slack.
inline bool within_error_bound(const Vector& e, double gamma, double coordinate_bound) {
  const double cap = gamma * coordinate_bound;
  const double cap_sq = cap * cap;
  double lhs = 0.0, rhs = 0.0;
  for (Eigen::Index j = 0; j < e.size(); ++j) {
    lhs += e[j] * e[j];
    rhs += cap_sq;
  }
  return lhs <= rhs;
}

// ---------------------------------------------------------------------------
// Round state
// ---------------------------------------------------------------------------

struct RoundState {
  Vector x;                    // x^k
  std::vector<Vector> errors;  // e_i^k
  Vector virtual_x;            // xtilde^k
  WeightedAverage average;
  std::vector<std::uint64_t> bits_sent;

  RoundState(const Vector& x0, std::size_t n, double eta)
      : x(x0),
        errors(n, Vector::Zero(x0.size())),
        virtual_x(x0),
        average(eta),
        bits_sent(n, 0) {
    average.push(x0);
  }

  Vector mean_error() const { return pairwise_mean(errors); }

  /// Advances xtilde by -gamma g and returns ||xtilde - (x - e)||. Call after
  /// x and the errors have been updated for the round.
  double advance_virtual(double gamma, const Vector& g) {
    virtual_x -= gamma * g;
    return (virtual_x - (x - mean_error())).norm();
  }
};

/// Snapshot handed to an optional per-round observer after round k completes
/// (so `state.x` is x^{k+1}).
struct RoundView {
  std::size_t k;
  const RoundState& state;
  const std::vector<Vector>& worker_grads;
  const std::vector<WorkerStep>& steps;
  const Vector& g;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  Vector x_final;
  Vector x_avg;
  bool diverged = false;
  std::string diagnostic;
  std::size_t rounds_completed = 0;
  double eta = 0.0;
  double max_residual_ratio = 0.0;  // max of residual / (1 + ||x||)
  std::size_t error_bound_violations = 0;
  std::uint64_t sample_grad_evals = 0;
  std::uint64_t full_grad_evals = 0;
};

/// Stream layout: worker i samples from split(2i) and compresses with
/// split(2i+1); the LSVRG coin uses split(2n). Fixed so results do not depend
/// on worker scheduling.
struct RunStreams {
  std::vector<Rng> sample;
  std::vector<Rng> compress;
  Rng coin;

  RunStreams(std::uint64_t seed, std::size_t n) : coin(Rng(seed).split(2 * n)) {
    const Rng root(seed);
    for (std::size_t i = 0; i < n; ++i) {
      sample.push_back(root.split(2 * i));
      compress.push_back(root.split(2 * i + 1));
    }
  }
};

inline constexpr double kDivergenceNorm = 1e12;
inline constexpr double kVirtualResidualTol = 1e-9;

/// Executes K rounds of error-compensated SGD:
///   workers:  g_i = estimate(...), v_i = gamma C((e_i + gamma g_i)/gamma),
///             e_i <- e_i + gamma g_i - v_i
///   server:   v = mean v_i,  x <- x - v
/// Traces are recorded at k = 0, every `record_every` rounds, and at k = K.
template <class Loss>
RunResult run(const RunConfig& cfg, const FiniteSumObjective<Loss>& obj, const SmoothnessConstants& constants,
              double f_star, const std::function<void(const RoundView&)>& observer = {}) {
  require(cfg.gamma > 0.0 && std::isfinite(cfg.gamma), "run: gamma must be positive");
  require(cfg.iterations >= 1, "run: K must be >= 1");
  require(cfg.record_every >= 1, "run: record_every must be >= 1");
  const std::size_t n = obj.n();
  const auto d = static_cast<std::size_t>(obj.d());
  validate(cfg.compressor, d);

  const SamplingScheme scheme = make_scheme(cfg.sampling, constants);
  const double lexp = expected_smoothness(scheme, constants);
  const Vector x0 = cfg.x0 ? *cfg.x0 : Vector::Zero(obj.d());
  require(static_cast<std::size_t>(x0.size()) == d, "run: x0 has wrong dimension");
  require_finite(x0, "run: x0");

  EstimatorState est = make_estimator(cfg.estimator, cfg.p, lexp, obj, x0);
  const double rho = cfg.estimator == EstimatorKind::Lsvrg ? cfg.p : 1.0;
  const double eta = cfg.eta_override ? *cfg.eta_override : std::min(cfg.gamma * obj.mu() / 2.0, rho / 4.0);

  RoundState st(x0, n, eta);
  RunStreams streams(cfg.seed, n);
  const auto coord_bound = absolute_coordinate_bound(cfg.compressor);

  RunResult res;
  res.eta = eta;
  const std::uint64_t per_estimate =
      cfg.sampling == SamplingKind::FullBatch ? static_cast<std::uint64_t>(obj.m()) : 1;
  const std::uint64_t estimate_cost = cfg.estimator == EstimatorKind::Lsvrg ? 2 * per_estimate : per_estimate;

  auto record = [&](std::size_t k) {
    TraceRecord r;
    r.k = k;
    r.f_gap_x = obj.value(st.x) - f_star;
    r.f_gap_avg = obj.value(st.average.value()) - f_star;
    std::uint64_t total = 0;
    for (auto b : st.bits_sent) total += b;
    r.bits_total = total;
    r.bits_cum = static_cast<double>(total) / static_cast<double>(n);
    r.err_norm_sq = st.mean_error().squaredNorm();
    r.virtual_residual = (st.virtual_x - (st.x - st.mean_error())).norm();
    r.sigma_k_sq = sigma_k_sq(est, obj, f_star);
    res.trace.push_back(r);
  };
  record(0);

  std::vector<Vector> grads(n);
  std::vector<WorkerStep> steps(n);
  std::vector<std::exception_ptr> failures(n);
  auto worker = [&](std::size_t i) {
    try {
      grads[i] = estimate(est, obj, scheme, i, st.x, streams.sample[i]);
      steps[i] = error_compensated_step(st.errors[i], grads[i], cfg.gamma, cfg.compressor, streams.compress[i]);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };

  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    if (cfg.parallel) {
      const auto count = static_cast<long long>(n);
      const int threads = std::max(1, cfg.threads);
#pragma omp parallel for schedule(static) num_threads(threads)
      for (long long i = 0; i < count; ++i) worker(static_cast<std::size_t>(i));
      (void)threads;
    } else {
      for (std::size_t i = 0; i < n; ++i) worker(i);
    }
    for (auto& f : failures)
      if (f) std::rethrow_exception(f);

    // Barrier: aggregate in fixed worker order.
    std::vector<Vector> vs(n);
    for (std::size_t i = 0; i < n; ++i) {
      st.errors[i] = steps[i].e_next;
      st.bits_sent[i] += payload_bits(steps[i].message);
      vs[i] = steps[i].v;
      if (coord_bound && !within_error_bound(st.errors[i], cfg.gamma, *coord_bound)) ++res.error_bound_violations;
    }
    const Vector g = pairwise_mean(grads);
    const Vector x_prev = st.x;
    st.x -= pairwise_mean(vs);
    res.sample_grad_evals += n * estimate_cost;

    if (!st.x.allFinite() || st.x.norm() > kDivergenceNorm) {
      res.diverged = true;
      res.diagnostic = "divergence at round " + std::to_string(k) + ": ||x|| = " + std::to_string(st.x.norm()) +
                       " (stepsize too large?)";
      TraceRecord r;
      r.k = k + 1;
      r.f_gap_x = r.f_gap_avg = std::numeric_limits<double>::quiet_NaN();
      res.trace.push_back(r);
      res.rounds_completed = k + 1;
      break;
    }

    const double residual = st.advance_virtual(cfg.gamma, g);
    const double ratio = residual / (1.0 + st.x.norm());
    res.max_residual_ratio = std::max(res.max_residual_ratio, ratio);
    if (ratio > kVirtualResidualTol)
      throw InternalError("virtual iterate identity violated at round " + std::to_string(k));

    if (est.kind == EstimatorKind::Lsvrg) maybe_update_reference(est, obj, x_prev, streams.coin);
    st.average.push(st.x);
    res.rounds_completed = k + 1;

    if (observer) observer(RoundView{k, st, grads, steps, g});
    if ((k + 1) % cfg.record_every == 0 || k + 1 == cfg.iterations) record(k + 1);
  }

  res.full_grad_evals = est.full_grad_evals;
  res.x_final = st.x;
  res.x_avg = st.average.value();
  return res;
}

}  // namespace ecabs
