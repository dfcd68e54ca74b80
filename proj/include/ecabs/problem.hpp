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
#include <functional>
#include <string>
#include <vector>

#include "ecabs/core.hpp"
#include "ecabs/data.hpp"

namespace ecabs {

/// ln(1 + exp(-y t)) for labels y in {-1, +1}.
struct LogisticLoss {
  static constexpr double curvature = 0.25;  // sup of the second derivative
  static constexpr const char* name = "logistic";

  static double value(double t, double y) {
    const double z = -y * t;
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

  /// d/dt of value(t, y) = -y * sigmoid(-y t).
  static double derivative(double t, double y) {
    const double z = -y * t;
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return -y * s;
  }

  static bool valid_label(double y) { return y == 1.0 || y == -1.0; }
};

/// 0.5 (t - y)^2 with real-valued targets. Test objective.
struct SquaredLoss {
  static constexpr double curvature = 1.0;
  static constexpr const char* name = "squared";

  static double value(double t, double y) { return 0.5 * (t - y) * (t - y); }
  static double derivative(double t, double y) { return t - y; }
  static bool valid_label(double y) { return std::isfinite(y); }
};

/// f(x) = 1/n sum_i f_i(x),  f_i(x) = 1/m sum_j [loss(<a_ij, x>, y_ij) + l2/2 ||x||^2].
///
/// Immutable after construction and safe to share between threads.
template <class Loss>
class FiniteSumObjective {
 public:
  using loss_type = Loss;

  FiniteSumObjective(std::vector<WorkerShard> shards, double l2) : shards_(std::move(shards)), l2_(l2) {
    require(!shards_.empty(), "objective: need at least one worker");
    require(std::isfinite(l2_) && l2_ >= 0.0, "objective: l2 must be finite and >= 0");
    m_ = shards_.front().m();
    d_ = shards_.front().d();
    require(m_ > 0 && d_ > 0, "objective: empty shard");
    for (const auto& s : shards_) {
      require(s.m() == m_, "objective: every shard must hold the same number of samples");
      require(s.d() == d_, "objective: every shard must have dimension d");
      require(s.labels.size() == m_, "objective: label count mismatch");
      for (Eigen::Index j = 0; j < m_; ++j)
        require(Loss::valid_label(s.labels[j]), std::string("objective: invalid label for ") + Loss::name);
    }
  }

  std::size_t n() const noexcept { return shards_.size(); }
  Eigen::Index m() const noexcept { return m_; }
  Eigen::Index d() const noexcept { return d_; }
  double l2() const noexcept { return l2_; }
  /// Quasi-strong convexity modulus guaranteed by the regularizer.
  double mu() const noexcept { return l2_; }
  const WorkerShard& shard(std::size_t i) const { return shards_.at(i); }
  const std::vector<WorkerShard>& shards() const noexcept { return shards_; }

  double sample_value(std::size_t i, Eigen::Index j, const Vector& x) const {
    check(i, j, x);
    const auto& s = shards_[i];
    return Loss::value(row_dot(s, j, x), s.labels[j]) + 0.5 * l2_ * x.squaredNorm();
  }

  Vector sample_grad(std::size_t i, Eigen::Index j, const Vector& x) const {
    check(i, j, x);
    Vector g = l2_ * x;
    add_loss_grad(i, j, x, 1.0, g);
    return g;
  }

  double worker_value(std::size_t i, const Vector& x) const {
    check(i, 0, x);
    const auto& s = shards_[i];
    const Vector t = s.features * x;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m_; ++j) acc += Loss::value(t[j], s.labels[j]);
    return acc / static_cast<double>(m_) + 0.5 * l2_ * x.squaredNorm();
  }

  Vector worker_grad(std::size_t i, const Vector& x) const {
    check(i, 0, x);
    const auto& s = shards_[i];
    const Vector t = s.features * x;
    Vector coef(m_);
    for (Eigen::Index j = 0; j < m_; ++j) coef[j] = Loss::derivative(t[j], s.labels[j]);
    Vector g = s.features.transpose() * coef;
    g /= static_cast<double>(m_);
    g += l2_ * x;
    return g;
  }

  double value(const Vector& x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < n(); ++i) acc += worker_value(i, x);
    return acc / static_cast<double>(n());
  }

  Vector full_grad(const Vector& x) const {
    Vector g = Vector::Zero(d_);
    for (std::size_t i = 0; i < n(); ++i) g += worker_grad(i, x);
    return g / static_cast<double>(n());
  }

 private:
  void check(std::size_t i, Eigen::Index j, const Vector& x) const {
    require(i < shards_.size(), "worker index out of range");
    require(j >= 0 && j < m_, "sample index out of range");
    require(x.size() == d_, "vector length does not match problem dimension");
    require_finite(x, "objective");
  }

  static double row_dot(const WorkerShard& s, Eigen::Index j, const Vector& x) {
    double t = 0.0;
    for (SparseRowMatrix::InnerIterator it(s.features, j); it; ++it) t += it.value() * x[it.col()];
    return t;
  }

  void add_loss_grad(std::size_t i, Eigen::Index j, const Vector& x, double scale, Vector& out) const {
    const auto& s = shards_[i];
    const double c = scale * Loss::derivative(row_dot(s, j, x), s.labels[j]);
    for (SparseRowMatrix::InnerIterator it(s.features, j); it; ++it) out[it.col()] += c * it.value();
  }

  std::vector<WorkerShard> shards_;
  double l2_;
  Eigen::Index m_ = 0;
  Eigen::Index d_ = 0;
};

using LogisticObjective = FiniteSumObjective<LogisticLoss>;
using LeastSquaresObjective = FiniteSumObjective<SquaredLoss>;

// ---------------------------------------------------------------------------
// Smoothness constants
// ---------------------------------------------------------------------------

struct EigenEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest eigenvalue of A^T A for a stack of row blocks A = [A_0; A_1; ...]
/// by power iteration on v -> A^T (A v). Stops when the Rayleigh quotient
/// changes by less than `rel_tol` relative, or after `max_iter` steps.
inline EigenEstimate lambda_max_gram(std::span<const SparseRowMatrix* const> blocks, Eigen::Index d,
                                     double rel_tol = 1e-8, int max_iter = 10000) {
  Rng rng(0x5eed);
  Vector v = rng.normal_vector(d).cwiseAbs() + Vector::Constant(d, 1e-3);
  v.normalize();
  auto apply = [&](const Vector& u) {
    Vector out = Vector::Zero(d);
    for (const auto* b : blocks) out += b->transpose() * (*b * u);
    return out;
  };
  EigenEstimate est;
  double prev = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector w = apply(v);
    const double rq = v.dot(w);
    const double norm = w.norm();
    est.iterations = it;
    est.value = rq;
    if (norm == 0.0) {  // all-zero data
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    if (it > 1 && std::abs(rq - prev) <= rel_tol * std::abs(rq)) {
      est.converged = true;
      return est;
    }
    prev = rq;
    v = w / norm;
  }
  return est;
}

struct SmoothnessConstants {
  Eigen::MatrixXd sample;  // n x m, L_ij
  Vector worker_mean;      // n, Lbar_i = 1/m sum_j L_ij
  Vector worker;           // n, smoothness of f_i (power iteration per worker)
  double global = 0.0;     // L, smoothness of f

  double max_sample() const { return sample.maxCoeff(); }
  double max_worker_mean() const { return worker_mean.maxCoeff(); }
  double max_worker() const { return worker.maxCoeff(); }
};

/// L_ij = l2 + c ||a_ij||^2, L_i = l2 + c lambda_max(A_i^T A_i)/m and
/// L = l2 + c lambda_max(A^T A)/(nm), with c the loss curvature bound.
template <class Loss>
SmoothnessConstants smoothness_constants(const FiniteSumObjective<Loss>& obj) {
  const auto n = static_cast<Eigen::Index>(obj.n());
  const auto m = obj.m();
  const double c = Loss::curvature;
  SmoothnessConstants out;
  out.sample.resize(n, m);
  out.worker_mean.resize(n);
  out.worker.resize(n);
  std::vector<const SparseRowMatrix*> all;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& A = obj.shard(static_cast<std::size_t>(i)).features;
    for (Eigen::Index j = 0; j < m; ++j) out.sample(i, j) = obj.l2() + c * A.row(j).squaredNorm();
    out.worker_mean[i] = out.sample.row(i).mean();
    const SparseRowMatrix* one[] = {&A};
    out.worker[i] = obj.l2() + c * lambda_max_gram(one, obj.d()).value / static_cast<double>(m);
    all.push_back(&A);
  }
  out.global = obj.l2() + c * lambda_max_gram(all, obj.d()).value / static_cast<double>(n * m);
  return out;
}

// ---------------------------------------------------------------------------
// Reference solution
// ---------------------------------------------------------------------------

struct ReferenceSolution {
  Vector x_star;
  double f_star = 0.0;
  double grad_norm = 0.0;
  long long iterations = 0;
  bool converged = false;  // false: iteration cap hit before the tolerance
};

/// Full-gradient descent with stepsize 1/L from x = 0 until ||grad f|| <= tol.
/// An unconverged result is returned with converged = false and the best
/// (last) iterate; callers decide whether that is acceptable.
template <class Loss>
ReferenceSolution solve_reference(const FiniteSumObjective<Loss>& obj, double tol,
                                  long long max_iter = 10'000'000,
                                  std::optional<double> smoothness = std::nullopt,
                                  const std::function<void(long long, double)>& observer = {}) {
  require(tol > 0.0, "solve_reference: tol must be positive");
  const double L = smoothness ? *smoothness : smoothness_constants(obj).global;
  require(L > 0.0, "solve_reference: smoothness constant must be positive");
  ReferenceSolution out;
  Vector x = Vector::Zero(obj.d());
  Vector g = obj.full_grad(x);
  long long it = 0;
  for (; it < max_iter; ++it) {
    const double gn = g.norm();
    if (observer) observer(it, obj.value(x));
    if (gn <= tol) break;
    x -= g / L;
    g = obj.full_grad(x);
  }
  out.iterations = it;
  out.grad_norm = g.norm();
  out.converged = out.grad_norm <= tol;
  out.f_star = obj.value(x);
  out.x_star = std::move(x);
  return out;
}

}  // namespace ecabs
