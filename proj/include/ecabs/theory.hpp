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

#include "ecabs/core.hpp"

namespace ecabs::theory {

/// Parameters of the second-moment / variance-reduction assumption
///   E||g^k||^2        <= 2A (f(x^k) - f*) + B sigma_k^2 + D1
///   E[sigma_{k+1}^2]  <= (1 - rho) sigma_k^2 + 2C (f(x^k) - f*) + D2
/// together with the problem constants the convergence bound needs.
struct TheoryParams {
  double A = 0.0, B = 0.0, C = 0.0, D1 = 0.0, D2 = 0.0;
  double rho = 1.0;
  double F = 0.0;      // 4B / (3 rho)
  double Delta = 0.0;  // absolute compressor constant
  double mu = 0.0;
  double L = 0.0;
  double Lexp = 0.0;   // expected smoothness

  /// h = 4(A + CF); admissible stepsizes are 0 < gamma <= 1/h.
  double h() const { return 4.0 * (A + C * F); }
  double stepsize_cap() const { return 1.0 / h(); }

  TheoryParams with_compression(double delta) const {
    TheoryParams p = *this;
    p.Delta = delta;
    return p;
  }
  TheoryParams with_mu(double m) const {
    TheoryParams p = *this;
    p.mu = m;
    return p;
  }
};

inline double compute_F(double B, double rho) { return 4.0 * B / (3.0 * rho); }

/// EC-SGD with arbitrary sampling: A = L + 2 Lexp/n, B = 0, D1 = 2 sigma*^2/n,
/// rho = 1, C = D2 = 0.
inline TheoryParams params_ecsgd_as(double L, double lexp, std::size_t n, double sigma_star_sq) {
  require(L >= 0.0 && lexp >= 0.0 && sigma_star_sq >= 0.0, "params_ecsgd_as: inputs must be >= 0");
  require(n >= 1, "params_ecsgd_as: n must be >= 1");
  TheoryParams p;
  const double nn = static_cast<double>(n);
  p.A = L + 2.0 * lexp / nn;
  p.B = 0.0;
  p.D1 = 2.0 * sigma_star_sq / nn;
  p.rho = 1.0;
  p.C = 0.0;
  p.D2 = 0.0;
  p.F = compute_F(p.B, p.rho);
  p.L = L;
  p.Lexp = lexp;
  return p;
}

/// EC-LSVRG: A = L + 2 Lexp/n, B = 2/n, D1 = 0, rho = p, C = p Lexp, D2 = 0.
inline TheoryParams params_eclsvrg(double L, double lexp, std::size_t n, double prob) {
  require(L >= 0.0 && lexp >= 0.0, "params_eclsvrg: inputs must be >= 0");
  require(n >= 1, "params_eclsvrg: n must be >= 1");
  require(prob > 0.0 && prob <= 1.0, "params_eclsvrg: p must lie in (0, 1]");
  TheoryParams p;
  const double nn = static_cast<double>(n);
  p.A = L + 2.0 * lexp / nn;
  p.B = 2.0 / nn;
  p.D1 = 0.0;
  p.rho = prob;
  p.C = prob * lexp;
  p.D2 = 0.0;
  p.F = compute_F(p.B, p.rho);
  p.L = L;
  p.Lexp = lexp;
  return p;
}

/// Stepsize cap quoted for EC-LSVRG with absolute compression,
/// gamma_0 = (4L + 152 Lexp/(3n))^-1.
inline double eclsvrg_quoted_cap(double L, double lexp, std::size_t n) {
  return 1.0 / (4.0 * L + 152.0 * lexp / (3.0 * static_cast<double>(n)));
}

/// (M, sigma^2)-bounded noise preset: A = L + M max_i L_i / n, B = 0,
/// D1 = (2 M zeta*^2 + sigma^2)/n, rho = 1, C = D2 = 0.
inline TheoryParams params_msigma(double L, double max_li, double M, double sigma_sq, double zeta_star_sq,
                                  std::size_t n) {
  require(L >= 0.0 && max_li >= 0.0 && M >= 0.0 && sigma_sq >= 0.0 && zeta_star_sq >= 0.0,
          "params_msigma: inputs must be >= 0");
  require(n >= 1, "params_msigma: n must be >= 1");
  TheoryParams p;
  const double nn = static_cast<double>(n);
  p.A = L + M * max_li / nn;
  p.B = 0.0;
  p.D1 = (2.0 * M * zeta_star_sq + sigma_sq) / nn;
  p.rho = 1.0;
  p.C = 0.0;
  p.D2 = 0.0;
  p.F = compute_F(p.B, p.rho);
  p.L = L;
  p.Lexp = L;
  return p;
}

/// T_0 = ||x^0 - x*||^2 + F gamma^2 sigma_0^2.
inline double initial_potential(const TheoryParams& p, double gamma, double r0_sq, double sigma0_sq) {
  return r0_sq + p.F * gamma * gamma * sigma0_sq;
}

/// R_0^2 + F sigma_0^2 / (16 (A + CF)^2). Diagnostic only.
inline double initial_potential_hat(const TheoryParams& p, double r0_sq, double sigma0_sq) {
  const double acf = p.A + p.C * p.F;
  return r0_sq + p.F * sigma0_sq / (16.0 * acf * acf);
}

/// Constants of the stepsize lemmas: a = 2 T_0, c1 = 2(D1 + F D2), c2 = 6 L Delta^2.
struct LemmaConstants {
  double a = 0.0, b = 0.0, c1 = 0.0, c2 = 0.0;
};

inline LemmaConstants lemma_constants(const TheoryParams& p, double t0) {
  return {2.0 * t0, 0.0, 2.0 * (p.D1 + p.F * p.D2), 6.0 * p.L * p.Delta * p.Delta};
}

/// Convex case: with T_0 = R_0^2 + F gamma^2 sigma_0^2 the bound reads
/// a/(gamma K) + b gamma/K + ..., so a = 2 R_0^2 and b = 2 F sigma_0^2.
inline LemmaConstants convex_lemma_constants(const TheoryParams& p, double r0_sq, double sigma0_sq) {
  return {2.0 * r0_sq, 2.0 * p.F * sigma0_sq, 2.0 * (p.D1 + p.F * p.D2), 6.0 * p.L * p.Delta * p.Delta};
}

/// gamma = min{1/h, ln(max{2, min{a mu^2 K^2/(4 c1), a mu^3 K^3/(8 c2)}})/(mu K)}.
/// A term with a zero denominator is dropped; with both dropped the inner
/// maximum is 2.
inline double stepsize_strongly_convex(const TheoryParams& p, double mu, double K, double a, double c1,
                                       double c2) {
  require(mu > 0.0, "stepsize_strongly_convex: mu must be positive");
  require(K >= 1.0, "stepsize_strongly_convex: K must be >= 1");
  require(a >= 0.0 && c1 >= 0.0 && c2 >= 0.0, "stepsize_strongly_convex: constants must be >= 0");
  double inner = std::numeric_limits<double>::infinity();
  if (c1 > 0.0) inner = std::min(inner, a * mu * mu * K * K / (4.0 * c1));
  if (c2 > 0.0) inner = std::min(inner, a * mu * mu * mu * K * K * K / (8.0 * c2));
  const double arg = std::isinf(inner) ? 2.0 : std::max(2.0, inner);
  return std::min(1.0 / p.h(), std::log(arg) / (mu * K));
}

/// gamma = min{1/h, sqrt(a/b), sqrt(a/(c1 K)), cbrt(a/(c2 K))}, zero-denominator
/// terms dropped.
inline double stepsize_convex(const TheoryParams& p, double K, double a, double b, double c1, double c2) {
  require(K >= 1.0, "stepsize_convex: K must be >= 1");
  require(a >= 0.0 && b >= 0.0 && c1 >= 0.0 && c2 >= 0.0, "stepsize_convex: constants must be >= 0");
  double g = 1.0 / p.h();
  if (b > 0.0) g = std::min(g, std::sqrt(a / b));
  if (c1 > 0.0) g = std::min(g, std::sqrt(a / (c1 * K)));
  if (c2 > 0.0) g = std::min(g, std::cbrt(a / (c2 * K)));
  return g;
}

inline double eta_of(const TheoryParams& p, double gamma, double mu) {
  return std::min(gamma * mu / 2.0, p.rho / 4.0);
}

/// Right-hand side of the convergence bound for E[f(xbar^K) - f*]:
///   mu > 0:  (1 - eta)^(K+1) 2 T_0 / gamma + 2 gamma (D1 + F D2 + 3 L gamma Delta^2)
///   mu = 0:  2 T_0 / (gamma (K+1))      + 2 gamma (D1 + F D2 + 3 L gamma Delta^2)
inline double bound_rhs(const TheoryParams& p, double gamma, double K, double t0, double mu) {
  require(gamma > 0.0, "bound_rhs: gamma must be positive");
  require(gamma <= p.stepsize_cap() * (1.0 + 1e-12), "bound_rhs: gamma exceeds 1/(4(A + CF)); bound invalid");
  require(K >= 0.0 && t0 >= 0.0 && mu >= 0.0, "bound_rhs: K, T0, mu must be >= 0");
  const double noise = 2.0 * gamma * (p.D1 + p.F * p.D2 + 3.0 * p.L * gamma * p.Delta * p.Delta);
  if (mu == 0.0) return 2.0 * t0 / (gamma * (K + 1.0)) + noise;
  const double eta = eta_of(p, gamma, mu);
  const double decay = std::exp((K + 1.0) * std::log1p(-eta));
  return decay * 2.0 * t0 / gamma + noise;
}

/// lambda = alpha sqrt(eps / (d^2 gamma)).
inline double ht_lambda_rule(double epsilon, double d, double gamma, double alpha = 5000.0) {
  require(epsilon >= 0.0 && d > 0.0 && gamma > 0.0 && alpha >= 0.0, "ht_lambda_rule: invalid inputs");
  return alpha * std::sqrt(epsilon / (d * d * gamma));
}

}  // namespace ecabs::theory
