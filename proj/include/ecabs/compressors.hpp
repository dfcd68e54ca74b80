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
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ecabs/core.hpp"

namespace ecabs {

// ---------------------------------------------------------------------------
// Compressor descriptions
// ---------------------------------------------------------------------------

struct IdentityCompressor {};

/// Keeps coordinates with |x_i| >= lambda.
struct HardThreshold {
  double lambda = 0.0;
};

/// Keeps the k largest-magnitude coordinates, ties broken by lower index.
struct TopK {
  std::size_t k = 1;
};

/// Keeps k uniformly chosen coordinates; scaled by d/k when `unbiased`.
struct RandK {
  std::size_t k = 1;
  bool unbiased = true;
};

/// Rounds every coordinate to a multiple of `step`, stochastically (to one of
/// the two neighbouring grid points, with probability proportional to
/// proximity) or to the nearest grid point.
struct ScaledIntegerRounding {
  double step = 1.0;
  bool stochastic = true;
};

using CompressorSpec = std::variant<IdentityCompressor, HardThreshold, TopK, RandK, ScaledIntegerRounding>;

inline std::string describe(const CompressorSpec& spec) {
  struct V {
    std::string operator()(const IdentityCompressor&) const { return "identity"; }
    std::string operator()(const HardThreshold& c) const { return "ht(lambda=" + fmt(c.lambda) + ")"; }
    std::string operator()(const TopK& c) const { return "topk(k=" + std::to_string(c.k) + ")"; }
    std::string operator()(const RandK& c) const {
      return "randk(k=" + std::to_string(c.k) + (c.unbiased ? ",scaled)" : ",unscaled)");
    }
    std::string operator()(const ScaledIntegerRounding& c) const {
      return std::string(c.stochastic ? "round-stochastic" : "round-nearest") + "(step=" + fmt(c.step) + ")";
    }
    static std::string fmt(double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return buf;
    }
  };
  return std::visit(V{}, spec);
}

/// Throws UsageError if the spec cannot be applied to vectors of length d.
inline void validate(const CompressorSpec& spec, std::size_t d) {
  struct V {
    std::size_t d;
    void operator()(const IdentityCompressor&) const {}
    void operator()(const HardThreshold& c) const {
      require(std::isfinite(c.lambda) && c.lambda >= 0.0, "hard threshold: lambda must be finite and >= 0");
    }
    void operator()(const TopK& c) const {
      require(c.k >= 1, "topk: k must be >= 1");
      require(c.k <= d, "topk: k exceeds dimension");
    }
    void operator()(const RandK& c) const {
      require(c.k >= 1, "randk: k must be >= 1");
      require(c.k <= d, "randk: k exceeds dimension");
    }
    void operator()(const ScaledIntegerRounding& c) const {
      require(std::isfinite(c.step) && c.step > 0.0, "rounding: step must be finite and > 0");
    }
  };
  std::visit(V{d}, spec);
}

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

struct MessageEntry {
  std::uint32_t index;
  double value;

  friend bool operator==(const MessageEntry&, const MessageEntry&) = default;
};

/// Sparse wire representation: strictly increasing indices, each < d.
struct CompressedMessage {
  std::vector<MessageEntry> entries;
  std::size_t d = 0;
};

inline Vector reconstruct(const CompressedMessage& msg) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(msg.d));
  for (const auto& e : msg.entries) out[e.index] = e.value;
  return out;
}

inline CompressedMessage compress(const CompressorSpec& spec, const Vector& x, Rng& rng) {
  require_finite(x, "compress");
  const auto d = static_cast<std::size_t>(x.size());
  validate(spec, d);
  CompressedMessage msg;
  msg.d = d;
  auto& out = msg.entries;

  struct V {
    const Vector& x;
    std::size_t d;
    Rng& rng;
    std::vector<MessageEntry>& out;

    void operator()(const IdentityCompressor&) const {
      out.reserve(d);
      for (std::size_t i = 0; i < d; ++i) out.push_back({static_cast<std::uint32_t>(i), x[i]});
    }
    void operator()(const HardThreshold& c) const {
      for (std::size_t i = 0; i < d; ++i)
        if (std::abs(x[i]) >= c.lambda) out.push_back({static_cast<std::uint32_t>(i), x[i]});
    }
    void operator()(const TopK& c) const {
      std::vector<std::uint32_t> idx(d);
      std::iota(idx.begin(), idx.end(), 0u);
      auto by_magnitude = [&](std::uint32_t a, std::uint32_t b) {
        const double fa = std::abs(x[a]), fb = std::abs(x[b]);
        return fa != fb ? fa > fb : a < b;
      };
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(c.k), idx.end(), by_magnitude);
      idx.resize(c.k);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx)
        if (x[i] != 0.0) out.push_back({i, x[i]});
    }
    void operator()(const RandK& c) const {
      std::vector<std::uint32_t> idx(d);
      std::iota(idx.begin(), idx.end(), 0u);
      for (std::size_t s = 0; s < c.k; ++s) {
        const std::size_t j = s + static_cast<std::size_t>(rng.below(d - s));
        std::swap(idx[s], idx[j]);
      }
      idx.resize(c.k);
      std::sort(idx.begin(), idx.end());
      const double scale = c.unbiased ? static_cast<double>(d) / static_cast<double>(c.k) : 1.0;
      for (auto i : idx) out.push_back({i, c.unbiased ? x[i] * scale : x[i]});
    }
    void operator()(const ScaledIntegerRounding& c) const {
      for (std::size_t i = 0; i < d; ++i) {
        const double t = x[i] / c.step;
        double q;
        if (c.stochastic) {
          const double lo = std::floor(t);
          q = rng.uniform() < (t - lo) ? lo + 1.0 : lo;
        } else {
          q = std::floor(t + 0.5);
        }
        const double v = q * c.step;
        if (v != 0.0) out.push_back({static_cast<std::uint32_t>(i), v});
      }
    }
  };
  std::visit(V{x, d, rng, out}, spec);
  return msg;
}

/// Per-coordinate bound on |C(x)_i - x_i| for absolute compressors.
inline std::optional<double> absolute_coordinate_bound(const CompressorSpec& spec) {
  if (std::holds_alternative<IdentityCompressor>(spec)) return 0.0;
  if (const auto* ht = std::get_if<HardThreshold>(&spec)) return ht->lambda;
  if (const auto* r = std::get_if<ScaledIntegerRounding>(&spec)) return r->stochastic ? r->step : 0.5 * r->step;
  return std::nullopt;
}

/// Delta with ||C(x) - x|| <= Delta for every x in R^d, or nullopt if the
/// compressor is not absolute (TopK, RandK). Hard threshold: lambda sqrt(d).
/// Rounding: step sqrt(d) (stochastic, pointwise) or step/2 sqrt(d) (nearest).
inline std::optional<double> absolute_delta(const CompressorSpec& spec, std::size_t d) {
  validate(spec, d);
  const auto b = absolute_coordinate_bound(spec);
  if (!b) return std::nullopt;
  return *b * std::sqrt(static_cast<double>(d));
}

/// delta with E||C(x) - x||^2 <= (1 - delta) ||x||^2, or nullopt if not
/// contractive. Scaled RandK is unbiased rather than contractive.
inline std::optional<double> contractive_delta(const CompressorSpec& spec, std::size_t d) {
  validate(spec, d);
  if (std::holds_alternative<IdentityCompressor>(spec)) return 1.0;
  if (const auto* t = std::get_if<TopK>(&spec)) return static_cast<double>(t->k) / static_cast<double>(d);
  if (const auto* r = std::get_if<RandK>(&spec); r && !r->unbiased)
    return static_cast<double>(r->k) / static_cast<double>(d);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Payload accounting and binary layout
//
// Sparse: u32 count, then count x (u32 index, f32 value)  -> 32 + 64 nnz bits
// Dense:  u32 count (= d), then d x f32 value               -> 32 + 32 d bits
// The dense layout is used only when strictly smaller; a tie goes to sparse.
// A sparse message never has count == d under this rule, which makes the
// count field sufficient to tell the two layouts apart. All little-endian.
// ---------------------------------------------------------------------------

inline std::uint64_t sparse_bits(const CompressedMessage& msg) { return 32 + 64 * msg.entries.size(); }
inline std::uint64_t dense_bits(const CompressedMessage& msg) { return 32 + 32 * msg.d; }

inline bool uses_dense_layout(const CompressedMessage& msg) { return dense_bits(msg) < sparse_bits(msg); }

inline std::uint64_t payload_bits(const CompressedMessage& msg) {
  return std::min(sparse_bits(msg), dense_bits(msg));
}

namespace detail {
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
inline void put_f32(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}
inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}
inline float get_f32(std::span<const std::uint8_t> in, std::size_t at) {
  const std::uint32_t bits = get_u32(in, at);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}
}  // namespace detail

/// Serializes with the layout above. Values are narrowed to f32.
inline std::vector<std::uint8_t> encode_message(const CompressedMessage& msg) {
  std::vector<std::uint8_t> out;
  if (uses_dense_layout(msg)) {
    out.reserve(4 + 4 * msg.d);
    detail::put_u32(out, static_cast<std::uint32_t>(msg.d));
    const Vector dense = reconstruct(msg);
    for (Eigen::Index i = 0; i < dense.size(); ++i) detail::put_f32(out, dense[i]);
  } else {
    out.reserve(4 + 8 * msg.entries.size());
    detail::put_u32(out, static_cast<std::uint32_t>(msg.entries.size()));
    for (const auto& e : msg.entries) {
      detail::put_u32(out, e.index);
      detail::put_f32(out, e.value);
    }
  }
  return out;
}

/// Inverse of encode_message for a known dimension d. Dense payloads come back
/// with every coordinate listed.
inline CompressedMessage decode_message(std::span<const std::uint8_t> bytes, std::size_t d) {
  require(bytes.size() >= 4, "decode_message: truncated header");
  const std::uint32_t count = detail::get_u32(bytes, 0);
  CompressedMessage msg;
  msg.d = d;
  if (count == d && bytes.size() == 4 + 4 * static_cast<std::size_t>(d) && d > 0) {
    for (std::uint32_t i = 0; i < count; ++i) msg.entries.push_back({i, detail::get_f32(bytes, 4 + 4 * i)});
    return msg;
  }
  require(bytes.size() == 4 + 8 * static_cast<std::size_t>(count), "decode_message: size mismatch");
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t idx = detail::get_u32(bytes, 4 + 8 * e);
    require(idx < d, "decode_message: index out of range");
    require(msg.entries.empty() || idx > msg.entries.back().index, "decode_message: indices not increasing");
    msg.entries.push_back({idx, detail::get_f32(bytes, 8 + 8 * e)});
  }
  return msg;
}

// ---------------------------------------------------------------------------
// Second-moment estimation
// ---------------------------------------------------------------------------

enum class MomentNormalization {
  Absolute,  // ||C(x) - x||^2
  Relative,  // ||C(x) - x||^2 / ||x||^2
};

struct MomentEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // standard error of the mean
  std::size_t trials = 0;
};

/// Monte-Carlo estimate of E||C(x) - x||^2 (or its ratio to ||x||^2) with x
/// drawn from `sample_x`. Compressor randomness and x draws share `rng`.
inline MomentEstimate estimate_second_moment(const CompressorSpec& spec,
                                             const std::function<Vector(Rng&)>& sample_x,
                                             std::size_t trials, Rng& rng,
                                             MomentNormalization norm = MomentNormalization::Absolute) {
  require(trials >= 1, "estimate_second_moment: trials must be >= 1");
  double mean = 0.0, m2 = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector x = sample_x(rng);
    const Vector cx = reconstruct(compress(spec, x, rng));
    double val = (cx - x).squaredNorm();
    if (norm == MomentNormalization::Relative) {
      const double xx = x.squaredNorm();
      if (xx == 0.0) continue;
      val /= xx;
    }
    ++used;
    const double delta = val - mean;
    mean += delta / static_cast<double>(used);
    m2 += delta * (val - mean);
  }
  MomentEstimate est;
  est.mean = mean;
  est.trials = used;
  est.std_error = used > 1 ? std::sqrt(m2 / static_cast<double>(used - 1) / static_cast<double>(used)) : 0.0;
  return est;
}

}  // namespace ecabs
