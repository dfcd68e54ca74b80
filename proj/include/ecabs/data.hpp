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
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>
#include <zlib.h>

#include "ecabs/core.hpp"

namespace ecabs {

struct SparseEntry {
  std::uint32_t index;  // 0-based
  double value;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

using SparseRow = std::vector<SparseEntry>;

/// Row-oriented labelled dataset as read from disk or generated.
struct Dataset {
  std::vector<SparseRow> rows;
  std::vector<double> labels;
  std::size_t d = 0;

  std::size_t size() const noexcept { return rows.size(); }
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One worker's local data: m feature rows and their labels.
struct WorkerShard {
  SparseRowMatrix features;  // m x d
  Vector labels;             // m

  Eigen::Index m() const noexcept { return features.rows(); }
  Eigen::Index d() const noexcept { return features.cols(); }
};

struct DatasetManifest {
  std::string name;
  std::size_t total_samples = 0;
  std::size_t d = 0;
  std::size_t truncation = 0;  // samples kept; a multiple of the worker count
};

struct Partition {
  std::vector<WorkerShard> shards;
  DatasetManifest manifest;
};

inline WorkerShard make_shard(std::span<const SparseRow> rows, std::span<const double> labels,
                              std::size_t d) {
  require(rows.size() == labels.size(), "make_shard: rows/labels size mismatch");
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& e : rows[r]) {
      require(e.index < d, "make_shard: feature index exceeds dimension");
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(e.index), e.value);
    }
  }
  WorkerShard shard;
  shard.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  shard.features.setFromTriplets(triplets.begin(), triplets.end());
  shard.features.makeCompressed();
  shard.labels = Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  return shard;
}

// ---------------------------------------------------------------------------
// LIBSVM text format:  <label> <index>:<value> ...   (1-based ascending)
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_real(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return false;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline bool parse_index(std::string_view tok, std::uint64_t& out) {
  if (tok.empty()) return false;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

/// Maps a raw label to {-1, +1}: positive values become +1, everything else
/// (0 in 0/1-labelled files, negative values) becomes -1.
inline double map_label(double raw) { return raw > 0.0 ? 1.0 : -1.0; }

/// Parses LIBSVM text. `dimension`, when given, fixes d (it must cover every
/// index seen); otherwise d is the largest index present. Blank lines and
/// trailing `#` comments are ignored.
inline Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> dimension = std::nullopt) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);

    std::size_t pos = 0;
    auto next_token = [&](std::size_t& column) -> std::string_view {
      while (pos < view.size() && std::isspace(static_cast<unsigned char>(view[pos]))) ++pos;
      const std::size_t start = pos;
      while (pos < view.size() && !std::isspace(static_cast<unsigned char>(view[pos]))) ++pos;
      column = start + 1;
      return view.substr(start, pos - start);
    };

    std::size_t column = 0;
    const std::string_view label_tok = next_token(column);
    if (label_tok.empty()) continue;
    double raw_label = 0.0;
    if (!detail::parse_real(label_tok, raw_label))
      throw ParseError(line_no, column, "invalid label '" + std::string(label_tok) + "'");

    SparseRow row;
    std::uint64_t last_index = 0;
    for (std::string_view tok = next_token(column); !tok.empty(); tok = next_token(column)) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(line_no, column, "expected <index>:<value>, got '" + std::string(tok) + "'");
      std::uint64_t index = 0;
      if (!detail::parse_index(tok.substr(0, colon), index) || index == 0 ||
          index > std::numeric_limits<std::uint32_t>::max())
        throw ParseError(line_no, column, "invalid feature index '" + std::string(tok.substr(0, colon)) + "'");
      if (index <= last_index)
        throw ParseError(line_no, column, "feature indices must be strictly ascending");
      double value = 0.0;
      if (!detail::parse_real(tok.substr(colon + 1), value))
        throw ParseError(line_no, column + colon + 1,
                         "invalid feature value '" + std::string(tok.substr(colon + 1)) + "'");
      last_index = index;
      row.push_back({static_cast<std::uint32_t>(index - 1), value});
    }
    max_index = std::max<std::size_t>(max_index, last_index);
    if (dimension && last_index > *dimension)
      throw ParseError(line_no, 0,
                       "feature index " + std::to_string(last_index) + " exceeds dimension " +
                           std::to_string(*dimension));
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(map_label(raw_label));
  }
  ds.d = dimension.value_or(max_index);
  return ds;
}

inline Dataset parse_libsvm(const std::string& text, std::optional<std::size_t> dimension = std::nullopt) {
  std::istringstream in(text);
  return parse_libsvm(in, dimension);
}

/// Writes LIBSVM text with round-trip exact values.
inline void write_libsvm(std::ostream& out, const Dataset& ds) {
  char buf[64];
  for (std::size_t r = 0; r < ds.rows.size(); ++r) {
    out << (ds.labels[r] > 0 ? "+1" : "-1");
    for (const auto& e : ds.rows[r]) {
      std::snprintf(buf, sizeof buf, " %u:%.17g", e.index + 1, e.value);
      out << buf;
    }
    out << '\n';
  }
}

/// Reads a whole file, transparently inflating gzip input (detected by magic
/// bytes, not by extension).
inline std::string read_file_contents(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw UsageError("cannot open '" + path + "'");
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  const bool gzipped = probe.gcount() == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
  probe.close();

  if (!gzipped) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  gzFile gz = gzopen(path.c_str(), "rb");
  if (!gz) throw UsageError("cannot open gzip stream '" + path + "'");
  std::string out;
  char buf[1 << 16];
  int got;
  while ((got = gzread(gz, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
  const bool failed = got < 0;
  gzclose(gz);
  if (failed) throw UsageError("corrupt gzip stream '" + path + "'");
  return out;
}

inline Dataset load_libsvm(const std::string& path, std::optional<std::size_t> dimension = std::nullopt) {
  return parse_libsvm(read_file_contents(path), dimension);
}

/// Scales every non-zero row to unit Euclidean norm.
inline void normalize_rows(Dataset& ds) {
  for (auto& row : ds.rows) {
    double sq = 0.0;
    for (const auto& e : row) sq += e.value * e.value;
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& e : row) e.value *= inv;
  }
}

/// Shuffles samples (Fisher-Yates driven by `seed`), truncates to the largest
/// multiple of n, and splits into n contiguous shards of equal size.
inline Partition partition(const Dataset& ds, std::size_t n, std::uint64_t seed,
                           std::string name = "dataset") {
  require(n > 0, "partition: worker count must be positive");
  require(ds.size() >= n, "partition: fewer samples than workers");

  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }

  const std::size_t m = ds.size() / n;
  Partition out;
  out.manifest = {std::move(name), ds.size(), ds.d, m * n};
  out.shards.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    std::vector<SparseRow> rows;
    std::vector<double> labels;
    rows.reserve(m);
    labels.reserve(m);
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t src = order[w * m + s];
      rows.push_back(ds.rows[src]);
      labels.push_back(ds.labels[src]);
    }
    out.shards.push_back(make_shard(rows, labels, ds.d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic logistic-regression instances
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::size_t n = 4;  // workers
  std::size_t m = 50; // samples per worker
  std::size_t d = 10;
  std::uint64_t seed = 0;
  // Label noise has standard deviation 1/separation; infinity means none.
  double separation = std::numeric_limits<double>::infinity();
  // Each row is independently "heavy" with this probability and then scaled
  // by heavy_scale. Creates spread in per-sample smoothness.
  double heavy_fraction = 0.0;
  double heavy_scale = 1.0;
};

struct SynthDataset {
  Dataset data;  // rows in generation order; worker i owns rows [i*m, (i+1)*m)
  std::vector<WorkerShard> shards;
  Vector true_direction;  // unit vector u
};

/// Standard-normal feature rows with labels sign(<a, u> + noise) for a hidden
/// unit direction u. Deterministic in `seed`.
inline SynthDataset synth_logreg(const SynthOptions& opt) {
  require(opt.n >= 1 && opt.m >= 1 && opt.d >= 1, "synth_logreg: n, m, d must be >= 1");
  require(opt.separation > 0.0, "synth_logreg: separation must be positive");
  require(opt.heavy_fraction >= 0.0 && opt.heavy_fraction <= 1.0,
          "synth_logreg: heavy_fraction must lie in [0, 1]");
  Rng root(opt.seed);
  Rng dir_rng = root.split(0);
  Rng row_rng = root.split(1);
  Rng noise_rng = root.split(2);
  Rng heavy_rng = root.split(3);

  SynthDataset out;
  const auto d = static_cast<Eigen::Index>(opt.d);
  out.true_direction = dir_rng.normal_vector(d);
  out.true_direction.normalize();

  const double noise_scale = std::isinf(opt.separation) ? 0.0 : 1.0 / opt.separation;
  out.data.d = opt.d;
  const std::size_t total = opt.n * opt.m;
  out.data.rows.reserve(total);
  out.data.labels.reserve(total);
  for (std::size_t s = 0; s < total; ++s) {
    Vector a = row_rng.normal_vector(d);
    const double noise = noise_rng.normal();
    const bool heavy = heavy_rng.uniform() < opt.heavy_fraction;
    if (heavy) a *= opt.heavy_scale;
    const double score = a.dot(out.true_direction) + noise_scale * noise;
    SparseRow row;
    row.reserve(opt.d);
    for (Eigen::Index j = 0; j < d; ++j) row.push_back({static_cast<std::uint32_t>(j), a[j]});
    out.data.rows.push_back(std::move(row));
    out.data.labels.push_back(score >= 0.0 ? 1.0 : -1.0);
  }
  for (std::size_t w = 0; w < opt.n; ++w) {
    const std::span<const SparseRow> rows(out.data.rows.data() + w * opt.m, opt.m);
    const std::span<const double> labels(out.data.labels.data() + w * opt.m, opt.m);
    out.shards.push_back(make_shard(rows, labels, opt.d));
  }
  return out;
}

}  // namespace ecabs
