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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ecabs {

/// Dense d-dimensional vector used for iterates, gradients and error vectors.
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

/// Caller violated a precondition (bad index, bad parameter range).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain (non-finite vectors and similar).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed text input. Carries a 1-based line number and, when known, a
/// 1-based column.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) +
                           (column ? ", column " + std::to_string(column) : std::string()) +
                           ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// An internal consistency check failed; always indicates a bug.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

inline void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite entry");
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Reproducible 64-bit random stream.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// performs every conversion to doubles and bounded integers itself, so that
/// draws agree across standard library implementations. `split(id)` derives
/// a child stream whose seed depends only on this stream's seed and `id`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Rng split(std::uint64_t stream_id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound), unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw UsageError("Rng::below: bound must be positive");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second variate).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vector normal_vector(Eigen::Index d) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Numerics helpers
// ---------------------------------------------------------------------------

namespace detail {
inline Vector pairwise_sum(std::span<const Vector> xs) {
  if (xs.size() == 1) return xs[0];
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}
}  // namespace detail

/// Sum of vectors in fixed pairwise order (0..n-1), independent of how the
/// summands were produced.
inline Vector pairwise_sum(std::span<const Vector> xs) {
  if (xs.empty()) throw UsageError("pairwise_sum: empty input");
  return detail::pairwise_sum(xs);
}

inline Vector pairwise_mean(std::span<const Vector> xs) {
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

/// FNV-1a over the raw bytes of a vector. Used to detect stale caches.
inline std::uint64_t checksum(const Vector& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(x.data());
  const std::size_t len = static_cast<std::size_t>(x.size()) * sizeof(double);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ecabs
