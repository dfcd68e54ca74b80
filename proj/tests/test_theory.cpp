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


#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ecabs::theory {
namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

TEST(Params, EcSgdSubstitution) {
  const auto p = params_ecsgd_as(1.0, 2.0, 4, 0.0);
  EXPECT_EQ(p.A, 2.0);
  EXPECT_EQ(p.D1, 0.0);
  EXPECT_EQ(p.F, 0.0);
  EXPECT_EQ(p.rho, 1.0);
  EXPECT_EQ(params_ecsgd_as(1.0, 2.0, 6, 3.0).D1, 1.0);
  EXPECT_EQ(params_ecsgd_as(0.3, 7.0, 9, 2.0).rho, 1.0);
  EXPECT_THROW(params_ecsgd_as(-1.0, 1.0, 1, 0.0), UsageError);
  EXPECT_THROW(params_ecsgd_as(1.0, 1.0, 0, 0.0), UsageError);
}

TEST(Params, EcLsvrgSubstitution) {
  const auto p = params_eclsvrg(1.5, 4.0, 5, 0.2);
  EXPECT_DOUBLE_EQ(p.F, 8.0 / (3.0 * 5 * 0.2));
  EXPECT_EQ(p.B, 2.0 / 5);
  EXPECT_EQ(p.C, 0.2 * 4.0);
  EXPECT_EQ(p.rho, 0.2);
  EXPECT_EQ(p.D1, 0.0);
  EXPECT_EQ(p.D2, 0.0);
  EXPECT_LT(rel(p.A + p.C * p.F, 1.5 + 14.0 * 4.0 / 15.0), 1e-15);
  const auto q = params_eclsvrg(3.0, 3.0, 1, 1.0);
  EXPECT_LT(rel(q.A + q.C * q.F, 17.0 * 3.0 / 3.0), 1e-15);
  EXPECT_THROW(params_eclsvrg(1.0, 1.0, 2, 0.0), UsageError);
  EXPECT_THROW(params_eclsvrg(1.0, 1.0, 2, 1.5), UsageError);
}

TEST(Params, EcLsvrgCapVersusQuotedCap) {
  // The parameter set gives 1/h = (4L + 56 Lexp/(3n))^-1, so the quoted cap
  // is the more conservative of the two.
  ecabs::Rng r(3);
  for (int t = 0; t < 100; ++t) {
    const double L = r.uniform() * 10, lexp = L + r.uniform() * 10;
    const auto n = static_cast<std::size_t>(1 + r.below(50));
    const auto p = params_eclsvrg(L, lexp, n, 0.01 + 0.99 * r.uniform());
    EXPECT_LE(eclsvrg_quoted_cap(L, lexp, n), p.stepsize_cap() * (1 + 1e-15));
    EXPECT_LT(rel(p.stepsize_cap(), 1.0 / (4 * L + 56 * lexp / (3.0 * n))), 1e-13);
  }
}

TEST(Params, MSigmaSubstitution) {
  auto p = params_msigma(2.0, 5.0, 0.0, 3.0, 7.0, 3);
  EXPECT_EQ(p.A, 2.0);
  EXPECT_EQ(p.D1, 1.0);
  EXPECT_EQ(params_msigma(2.0, 5.0, 4.0, 0.0, 0.0, 3).D1, 0.0);
  p = params_msigma(2.0, 5.0, 4.0, 1.0, 0.5, 2);
  EXPECT_EQ(p.A, 2.0 + 4.0 * 5.0 / 2.0);
  EXPECT_EQ(p.D1, (2 * 4.0 * 0.5 + 1.0) / 2.0);
  EXPECT_EQ(p.F, 0.0);
}

TEST(Params, DerivedFieldsRecompute) {
  ecabs::Rng r(4);
  for (int t = 0; t < 200; ++t) {
    const double L = r.uniform() * 5, lexp = L + r.uniform() * 5;
    const auto n = static_cast<std::size_t>(1 + r.below(30));
    for (const auto& p : {params_eclsvrg(L, lexp, n, 0.01 + 0.99 * r.uniform()),
                          params_ecsgd_as(L, lexp, n, r.uniform())}) {
      EXPECT_EQ(p.F, 4.0 * p.B / (3.0 * p.rho));
      EXPECT_EQ(p.h(), 4.0 * (p.A + p.C * p.F));
      if (L > 0) {
        EXPECT_GT(p.h(), 0.0);
      }
    }
  }
}

// Re-typed lemma formulas with all constants positive.
double lemma1(double h, double mu, double K, double a, double c1, double c2) {
  const double t1 = a * std::pow(mu, 2) * std::pow(K, 2) / (4 * c1);
  const double t2 = a * std::pow(mu, 3) * std::pow(K, 3) / (8 * c2);
  return std::fmin(1 / h, std::log(std::fmax(2.0, std::fmin(t1, t2))) / (mu * K));
}
double lemma2(double h, double K, double a, double b, double c1, double c2) {
  return std::fmin(std::fmin(1 / h, std::pow(a / b, 0.5)),
                   std::fmin(std::pow(a / (c1 * K), 0.5), std::pow(a / (c2 * K), 1.0 / 3.0)));
}

TEST(Stepsize, StronglyConvexMatchesRetypedFormula) {
  ecabs::Rng r(5);
  for (int t = 0; t < 100; ++t) {
    const auto p = params_eclsvrg(0.1 + r.uniform(), 1 + r.uniform(), 1 + r.below(10), 0.05 + 0.9 * r.uniform());
    const double mu = std::pow(10.0, -3 + 3 * r.uniform()), K = std::floor(std::pow(10.0, 1 + 5 * r.uniform()));
    const double a = std::pow(10.0, -2 + 4 * r.uniform()), c1 = std::pow(10.0, -4 + 6 * r.uniform()),
                 c2 = std::pow(10.0, -4 + 6 * r.uniform());
    EXPECT_LT(rel(stepsize_strongly_convex(p, mu, K, a, c1, c2), lemma1(p.h(), mu, K, a, c1, c2)), 1e-12);
  }
}

TEST(Stepsize, ConvexMatchesRetypedFormula) {
  ecabs::Rng r(6);
  for (int t = 0; t < 100; ++t) {
    const auto p = params_ecsgd_as(0.1 + r.uniform(), 1 + r.uniform(), 1 + r.below(10), r.uniform());
    const double K = std::floor(std::pow(10.0, 1 + 5 * r.uniform()));
    const double a = std::pow(10.0, -2 + 4 * r.uniform()), b = std::pow(10.0, -4 + 6 * r.uniform()),
                 c1 = std::pow(10.0, -4 + 6 * r.uniform()), c2 = std::pow(10.0, -4 + 6 * r.uniform());
    EXPECT_LT(rel(stepsize_convex(p, K, a, b, c1, c2), lemma2(p.h(), K, a, b, c1, c2)), 1e-12);
  }
}

TEST(Stepsize, Examples) {
  TheoryParams p;
  p.A = 2.5;  // h = 10
  EXPECT_EQ(stepsize_strongly_convex(p, 1.0, 1e6, 1.0, 0.0, 0.0), std::min(0.1, std::log(2.0) / 1e6));
  const double K = 1e6;
  EXPECT_DOUBLE_EQ(stepsize_strongly_convex(p, 1.0, K, 1.0, 1.0, 0.0), std::min(0.1, std::log(K * K / 4) / K));
  EXPECT_EQ(stepsize_convex(p, 100, 1.0, 0.0, 0.0, 0.0), 0.1);
  p.A = 0.025;  // h = 0.1
  EXPECT_EQ(stepsize_convex(p, 100, 1.0, 4.0, 1e-9, 1e-9), 0.5);
  EXPECT_THROW(stepsize_strongly_convex(p, 0.0, 10, 1, 1, 1), UsageError);
  EXPECT_THROW(stepsize_convex(p, 0.5, 1, 1, 1, 1), UsageError);
}

TEST(Stepsize, NeverAboveCap) {
  ecabs::Rng r(7);
  for (int t = 0; t < 1000; ++t) {
    const auto p = params_ecsgd_as(r.uniform(), 1 + r.uniform(), 1 + r.below(10), r.uniform());
    const double cap = 1 / p.h();
    EXPECT_LE(stepsize_strongly_convex(p, 1e-3 + r.uniform(), 1 + r.below(1000), r.uniform(), r.uniform(),
                                       r.uniform()),
              cap);
    EXPECT_LE(stepsize_convex(p, 1 + r.below(1000), r.uniform(), r.uniform(), r.uniform(), r.uniform()), cap);
  }
}

TEST(Bound, GeometricTermOnly) {
  auto p = params_ecsgd_as(1.0, 2.0, 2, 0.0);
  const double gamma = p.stepsize_cap(), mu = 0.5;
  const double eta = std::min(gamma * mu / 2, 0.25);
  EXPECT_LT(rel(bound_rhs(p, gamma, 10, 3.0, mu), std::pow(1 - eta, 11) * 2 * 3.0 / gamma), 1e-13);
}

TEST(Bound, ConvexCase) {
  auto p = params_ecsgd_as(1.0, 2.0, 2, 0.5).with_compression(0.3);
  const double gamma = 0.5 * p.stepsize_cap();
  const double noise = 2 * gamma * (p.D1 + 3 * 1.0 * gamma * 0.09);
  EXPECT_LT(rel(bound_rhs(p, gamma, 99, 4.0, 0.0), 2 * 4.0 / (gamma * 100) + noise), 1e-14);
}

TEST(Bound, MonotoneInKWithNoiseFloor) {
  auto p = params_eclsvrg(1.0, 3.0, 4, 0.1).with_compression(0.2);
  const double gamma = p.stepsize_cap();
  const double floor = 2 * gamma * 3 * gamma * 0.04;
  double prev = std::numeric_limits<double>::infinity();
  for (double K = 0; K < 1e7; K = 2 * K + 1) {
    const double b = bound_rhs(p, gamma, K, 1.0, 0.01);
    EXPECT_LE(b, prev);
    EXPECT_GE(b, floor * (1 - 1e-15));
    prev = b;
  }
  EXPECT_LT(rel(bound_rhs(p, gamma, 1e12, 1.0, 0.01), floor), 1e-12);
}

TEST(Bound, RejectsStepAboveCap) {
  auto p = params_ecsgd_as(1.0, 1.0, 1, 0.0);
  EXPECT_THROW(bound_rhs(p, 1.01 * p.stepsize_cap(), 10, 1, 0.1), UsageError);
  EXPECT_THROW(bound_rhs(p, 0.0, 10, 1, 0.1), UsageError);
}

TEST(LambdaRule, Examples) {
  const double d = 123, gamma = 1.0 / 3.7;
  EXPECT_LT(rel(ht_lambda_rule(1e-3, d, gamma), 5000.0 * std::sqrt(1e-3 * 3.7) / 123.0), 1e-15);
  EXPECT_EQ(ht_lambda_rule(1e-3, d, gamma, 10000), 2 * ht_lambda_rule(1e-3, d, gamma, 5000));
  EXPECT_EQ(ht_lambda_rule(0.0, d, gamma), 0.0);
  EXPECT_THROW(ht_lambda_rule(1e-3, d, 0.0), UsageError);
}

TEST(Bound, EmpiricalDominance) {
  // Mean over seeds of f(xbar^K) - f* stays below twice the bound.
  const auto obj = ecabs::testing::synth_objective(4, 20, 6, 31, 0.1, 1.0);
  const auto k = ecabs::smoothness_constants(obj);
  const auto ref = ecabs::solve_reference(obj, 1e-13, 10'000'000, k.global);
  const auto scheme = ecabs::make_scheme(ecabs::SamplingKind::Uniform, k);
  const double lexp = ecabs::expected_smoothness(scheme, k);
  const double lambda = 0.02;
  auto p = params_ecsgd_as(k.global, lexp, 4, ecabs::sigma_star_sq(scheme, obj, ref.x_star))
               .with_compression(lambda * std::sqrt(6.0))
               .with_mu(0.1);
  const double gamma = p.stepsize_cap();
  const std::size_t K = 3000;
  double mean_gap = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    ecabs::RunConfig cfg;
    cfg.gamma = gamma;
    cfg.iterations = K;
    cfg.record_every = K;
    cfg.compressor = ecabs::HardThreshold{lambda};
    cfg.seed = 100 + s;
    mean_gap += ecabs::run(cfg, obj, k, ref.f_star).trace.back().f_gap_avg / seeds;
  }
  const double bound = bound_rhs(p, gamma, K, ref.x_star.squaredNorm(), 0.1);
  EXPECT_LE(mean_gap, 2 * bound) << "bound " << bound;
}

}  // namespace
}  // namespace ecabs::theory
