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
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "ecabs/compressors.hpp"
#include "ecabs/core.hpp"
#include "ecabs/data.hpp"
#include "ecabs/engine.hpp"
#include "ecabs/estimators.hpp"
#include "ecabs/problem.hpp"
#include "ecabs/sampling.hpp"
#include "ecabs/theory.hpp"

namespace ecabs::report {

inline constexpr const char* kDataDirEnv = "ECABS_DATA_DIR";
inline constexpr const char* kCsvColumns = "k,f_gap_x,f_gap_avg,bits_cum,err_norm_sq,sigma_k_sq";

inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Git-style blob hash: SHA-1 over "blob <size>\0" followed by the content.
inline std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha1: out of memory");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

enum class CompressorKind { HardThreshold, TopK, RandK, RandKUnscaled, Round, RoundNearest, Identity };

/// "<estimator>:<sampling>:<compressor>", e.g. "ec-lsvrg:is:ht" or
/// "ec-sgd:us:topk=5". The compressor parameter is optional for ht and topk
/// (derived from the config), required for randk and round.
struct MethodSpec {
  EstimatorKind estimator = EstimatorKind::SgdAs;
  SamplingKind sampling = SamplingKind::Uniform;
  CompressorKind compressor = CompressorKind::HardThreshold;
  std::optional<double> param;
  std::string label;
};

inline MethodSpec parse_method(std::string_view text) {
  auto fail = [&](const std::string& why) { throw UsageError("method '" + std::string(text) + "': " + why); };
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 3) fail("expected <estimator>:<sampling>:<compressor>");

  MethodSpec m;
  m.label = std::string(text);
  if (parts[0] == "ec-sgd") m.estimator = EstimatorKind::SgdAs;
  else if (parts[0] == "ec-lsvrg") m.estimator = EstimatorKind::Lsvrg;
  else fail("unknown estimator '" + parts[0] + "' (ec-sgd, ec-lsvrg)");

  if (parts[1] == "us") m.sampling = SamplingKind::Uniform;
  else if (parts[1] == "is") m.sampling = SamplingKind::Importance;
  else if (parts[1] == "full") m.sampling = SamplingKind::FullBatch;
  else fail("unknown sampling '" + parts[1] + "' (us, is, full)");

  std::string name = parts[2];
  if (auto eq = name.find('='); eq != std::string::npos) {
    double v = 0.0;
    if (!detail::parse_real(name.substr(eq + 1), v)) fail("bad compressor parameter");
    m.param = v;
    name = name.substr(0, eq);
  }
  if (name == "ht") m.compressor = CompressorKind::HardThreshold;
  else if (name == "topk") m.compressor = CompressorKind::TopK;
  else if (name == "randk") m.compressor = CompressorKind::RandK;
  else if (name == "randk-unscaled") m.compressor = CompressorKind::RandKUnscaled;
  else if (name == "round") m.compressor = CompressorKind::Round;
  else if (name == "round-nearest") m.compressor = CompressorKind::RoundNearest;
  else if (name == "identity") m.compressor = CompressorKind::Identity;
  else fail("unknown compressor '" + name + "'");

  const bool needs_param = m.compressor == CompressorKind::RandK || m.compressor == CompressorKind::RandKUnscaled ||
                           m.compressor == CompressorKind::Round || m.compressor == CompressorKind::RoundNearest;
  if (needs_param && !m.param) fail("compressor requires a parameter, e.g. " + name + "=4");
  if (m.compressor == CompressorKind::Identity && m.param) fail("identity takes no parameter");
  if (m.param && (*m.param < 0.0 || !std::isfinite(*m.param))) fail("parameter must be >= 0");
  return m;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Preset { Exp1Sampling, Exp2Vr, Exp3HtVsTopk, Custom };

inline std::string to_string(Preset p) {
  switch (p) {
    case Preset::Exp1Sampling: return "exp1_sampling";
    case Preset::Exp2Vr: return "exp2_vr";
    case Preset::Exp3HtVsTopk: return "exp3_ht_vs_topk";
    case Preset::Custom: return "custom";
  }
  return "?";
}

/// auto: 1/(L + max_ij L_ij/n) for uniform sampling, 1/(L + max_i Lbar_i/n)
/// for importance sampling, 1/(L + max_i L_i/n) for full batches.
/// max_lij: 1/max_ij L_ij.  theory: 1/(4(A + CF)) for the method's parameters.
enum class GammaRule { Auto, MaxLij, Theory };
/// Which stepsize enters lambda = alpha sqrt(eps/(d^2 gamma)): the uniform-
/// sampling stepsize (shared by all methods) or each method's own.
enum class LambdaGamma { Uniform, Method };

struct ExperimentConfig {
  Preset preset = Preset::Custom;
  std::string dataset;
  std::size_t workers = 20;
  std::optional<std::size_t> epochs;
  std::vector<std::uint64_t> seeds{1};
  std::vector<MethodSpec> methods;
  std::optional<double> l2;
  double l2_rel = 1e-4;
  double epsilon = 1e-3;
  double alpha = 5000.0;
  std::optional<double> gamma;
  GammaRule gamma_rule = GammaRule::Auto;
  LambdaGamma lambda_gamma = LambdaGamma::Method;
  std::optional<double> lambda;
  std::optional<std::size_t> topk;
  std::optional<double> p;
  std::optional<std::size_t> record_every;
  std::string output_dir = "results";
  bool parallel = false;
  int threads = 4;
  bool normalize = false;
  std::optional<std::size_t> dimension;
  std::uint64_t data_seed = 0;
  std::size_t max_samples = 5000;
  bool full_scale = false;
  double reference_tol = 1e-9;
  long long reference_max_iter = 10'000'000;
  double target_gap = 1e-3;
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "preset",       "dataset",     "workers",   "epochs",      "seeds",         "methods",
      "l2",           "l2_rel",      "epsilon",   "alpha",       "gamma",         "gamma_rule",
      "lambda_gamma", "lambda",      "topk",      "p",           "record_every",  "output_dir",
      "parallel",     "threads",     "normalize", "dimension",   "data_seed",     "max_samples",
      "full_scale",   "reference_tol", "reference_max_iter", "target_gap"};
  return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

struct RawValue {
  std::string value;
  std::size_t line = 0;
  std::size_t column = 0;
};

}  // namespace detail

/// Parses the key = value configuration format. `#` starts a comment; blank
/// lines are ignored; keys may appear once. `overrides` ("key=value" strings)
/// replace file values and are reported as line 0 on error.
inline ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {}) {
  std::map<std::string, detail::RawValue> raw;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (detail::trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, 1, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ParseError(line_no, 1, "unknown key '" + key + "'");
    if (raw.count(key)) throw ParseError(line_no, 1, "duplicate key '" + key + "'");
    std::size_t col = eq + 2;
    while (col - 1 < line.size() && std::isspace(static_cast<unsigned char>(line[col - 1]))) ++col;
    raw[key] = {value, line_no, col};
    if (end == text.size()) break;
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ParseError(0, 0, "override '" + o + "' is not key=value");
    const std::string key = detail::trim(std::string_view(o).substr(0, eq));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ParseError(0, 0, "unknown key '" + key + "' in override");
    raw[key] = {detail::trim(std::string_view(o).substr(eq + 1)), 0, 0};
  }

  auto bad = [](const detail::RawValue& v, const std::string& why) -> ParseError {
    return ParseError(v.line, v.column, why + " (got '" + v.value + "')");
  };
  auto get_real = [&](const std::string& key, auto check, const char* what) -> std::optional<double> {
    auto it = raw.find(key);
    if (it == raw.end()) return std::nullopt;
    double v = 0.0;
    if (!ecabs::detail::parse_real(it->second.value, v)) throw bad(it->second, key + ": expected a number");
    if (!check(v)) throw bad(it->second, key + ": " + what);
    return v;
  };
  auto get_uint = [&](const std::string& key, std::uint64_t min_value) -> std::optional<std::uint64_t> {
    auto it = raw.find(key);
    if (it == raw.end()) return std::nullopt;
    std::uint64_t v = 0;
    if (!ecabs::detail::parse_index(it->second.value, v)) throw bad(it->second, key + ": expected an integer");
    if (v < min_value) throw bad(it->second, key + ": must be >= " + std::to_string(min_value));
    return v;
  };
  auto get_bool = [&](const std::string& key) -> std::optional<bool> {
    auto it = raw.find(key);
    if (it == raw.end()) return std::nullopt;
    const auto& v = it->second.value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw bad(it->second, key + ": expected true/false");
  };
  auto positive = [](double v) { return v > 0.0; };
  auto nonneg = [](double v) { return v >= 0.0; };

  ExperimentConfig cfg;
  if (auto it = raw.find("preset"); it != raw.end()) {
    const auto& v = it->second.value;
    if (v == "exp1_sampling") cfg.preset = Preset::Exp1Sampling;
    else if (v == "exp2_vr") cfg.preset = Preset::Exp2Vr;
    else if (v == "exp3_ht_vs_topk") cfg.preset = Preset::Exp3HtVsTopk;
    else if (v == "custom") cfg.preset = Preset::Custom;
    else throw bad(it->second, "preset: expected exp1_sampling, exp2_vr, exp3_ht_vs_topk or custom");
  }

  // Preset defaults; explicit keys below override them.
  switch (cfg.preset) {
    case Preset::Exp1Sampling:
      cfg.methods = {parse_method("ec-sgd:us:ht"), parse_method("ec-sgd:is:ht")};
      cfg.gamma_rule = GammaRule::Auto;
      cfg.lambda_gamma = LambdaGamma::Uniform;
      break;
    case Preset::Exp2Vr:
      cfg.methods = {parse_method("ec-sgd:us:ht"), parse_method("ec-lsvrg:us:ht")};
      cfg.gamma_rule = GammaRule::MaxLij;
      cfg.lambda_gamma = LambdaGamma::Method;
      break;
    case Preset::Exp3HtVsTopk:
      cfg.methods = {parse_method("ec-lsvrg:us:ht"), parse_method("ec-lsvrg:us:topk")};
      cfg.gamma_rule = GammaRule::MaxLij;
      cfg.lambda_gamma = LambdaGamma::Method;
      break;
    case Preset::Custom:
      break;
  }

  if (auto it = raw.find("dataset"); it != raw.end()) {
    if (it->second.value.empty()) throw bad(it->second, "dataset: must not be empty");
    cfg.dataset = it->second.value;
  }
  if (auto v = get_uint("workers", 1)) cfg.workers = *v;
  if (auto v = get_uint("epochs", 1)) cfg.epochs = *v;
  if (auto it = raw.find("seeds"); it != raw.end()) {
    cfg.seeds.clear();
    for (const auto& s : detail::split_list(it->second.value)) {
      std::uint64_t v = 0;
      if (!ecabs::detail::parse_index(s, v)) throw bad(it->second, "seeds: expected comma-separated integers");
      cfg.seeds.push_back(v);
    }
    if (cfg.seeds.empty()) throw bad(it->second, "seeds: must list at least one seed");
  }
  if (auto it = raw.find("methods"); it != raw.end()) {
    cfg.methods.clear();
    for (const auto& s : detail::split_list(it->second.value)) {
      try {
        cfg.methods.push_back(parse_method(s));
      } catch (const UsageError& e) {
        throw ParseError(it->second.line, it->second.column, e.what());
      }
    }
  }
  cfg.l2 = get_real("l2", nonneg, "must be >= 0");
  if (auto v = get_real("l2_rel", nonneg, "must be >= 0")) cfg.l2_rel = *v;
  if (auto v = get_real("epsilon", nonneg, "must be >= 0")) cfg.epsilon = *v;
  if (auto v = get_real("alpha", nonneg, "must be >= 0")) cfg.alpha = *v;
  cfg.gamma = get_real("gamma", positive, "must be > 0");
  if (auto it = raw.find("gamma_rule"); it != raw.end()) {
    const auto& v = it->second.value;
    if (v == "auto") cfg.gamma_rule = GammaRule::Auto;
    else if (v == "max_lij") cfg.gamma_rule = GammaRule::MaxLij;
    else if (v == "theory") cfg.gamma_rule = GammaRule::Theory;
    else throw bad(it->second, "gamma_rule: expected auto, max_lij or theory");
  }
  if (auto it = raw.find("lambda_gamma"); it != raw.end()) {
    const auto& v = it->second.value;
    if (v == "us") cfg.lambda_gamma = LambdaGamma::Uniform;
    else if (v == "method") cfg.lambda_gamma = LambdaGamma::Method;
    else throw bad(it->second, "lambda_gamma: expected us or method");
  }
  cfg.lambda = get_real("lambda", nonneg, "must be >= 0");
  if (auto v = get_uint("topk", 1)) cfg.topk = *v;
  cfg.p = get_real("p", [](double v) { return v > 0.0 && v <= 1.0; }, "must lie in (0, 1]");
  if (auto v = get_uint("record_every", 1)) cfg.record_every = *v;
  if (auto it = raw.find("output_dir"); it != raw.end()) cfg.output_dir = it->second.value;
  if (auto v = get_bool("parallel")) cfg.parallel = *v;
  if (auto v = get_uint("threads", 1)) cfg.threads = static_cast<int>(*v);
  if (auto v = get_bool("normalize")) cfg.normalize = *v;
  if (auto v = get_uint("dimension", 1)) cfg.dimension = *v;
  if (auto v = get_uint("data_seed", 0)) cfg.data_seed = *v;
  if (auto v = get_uint("max_samples", 0)) cfg.max_samples = *v;
  if (auto v = get_bool("full_scale")) cfg.full_scale = *v;
  if (auto v = get_real("reference_tol", positive, "must be > 0")) cfg.reference_tol = *v;
  if (auto v = get_uint("reference_max_iter", 1)) cfg.reference_max_iter = static_cast<long long>(*v);
  if (auto v = get_real("target_gap", positive, "must be > 0")) cfg.target_gap = *v;

  if (cfg.methods.empty()) {
    auto it = raw.find("methods");
    throw ParseError(it == raw.end() ? 0 : it->second.line, 0, "no methods: set 'methods' or a preset");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

// ---------------------------------------------------------------------------
// Problem preparation
// ---------------------------------------------------------------------------

/// "synth:m=50,d=20,seed=1,sep=4,heavy=0.02,scale=10"; the worker count comes
/// from the experiment config.
inline SynthOptions parse_synth_descriptor(std::string_view desc, std::size_t workers) {
  require(desc.rfind("synth:", 0) == 0, "synthetic descriptor must start with 'synth:'");
  SynthOptions opt;
  opt.n = workers;
  for (const auto& item : detail::split_list(desc.substr(6))) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    require(eq != std::string::npos, "synth descriptor: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    double v = 0.0;
    std::uint64_t u = 0;
    if (key == "m" || key == "d" || key == "seed") {
      require(ecabs::detail::parse_index(val, u), "synth descriptor: " + key + " must be an integer");
      if (key == "m") opt.m = u;
      else if (key == "d") opt.d = u;
      else opt.seed = u;
    } else if (key == "sep" || key == "heavy" || key == "scale") {
      if (val == "inf") v = std::numeric_limits<double>::infinity();
      else require(ecabs::detail::parse_real(val, v), "synth descriptor: " + key + " must be a number");
      if (key == "sep") opt.separation = v;
      else if (key == "heavy") opt.heavy_fraction = v;
      else opt.heavy_scale = v;
    } else {
      throw UsageError("synth descriptor: unknown key '" + key + "'");
    }
  }
  return opt;
}

/// Resolves a dataset path, falling back to $ECABS_DATA_DIR/<path>.
inline std::string resolve_dataset_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv(kDataDirEnv); dir && *dir) {
    const fs::path alt = fs::path(dir) / path;
    if (fs::exists(alt)) return alt.string();
  }
  throw UsageError("dataset '" + path + "' not found (also looked in $" + kDataDirEnv + ")");
}

struct PreparedProblem {
  std::optional<LogisticObjective> objective;
  SmoothnessConstants constants;
  ReferenceSolution reference;
  DatasetManifest manifest;
  std::string content_hash;
  double l2 = 0.0;
  std::string l2_source;
};

inline std::vector<WorkerShard> contiguous_shards(const Dataset& ds, std::size_t n) {
  const std::size_t m = ds.size() / n;
  std::vector<WorkerShard> shards;
  for (std::size_t w = 0; w < n; ++w)
    shards.push_back(make_shard(std::span(ds.rows).subspan(w * m, m), std::span(ds.labels).subspan(w * m, m), ds.d));
  return shards;
}

inline PreparedProblem prepare_problem(const ExperimentConfig& cfg) {
  require(!cfg.dataset.empty(), "config: 'dataset' is required");
  PreparedProblem prep;
  std::vector<WorkerShard> shards;
  if (cfg.dataset.rfind("synth:", 0) == 0) {
    const SynthOptions opt = parse_synth_descriptor(cfg.dataset, cfg.workers);
    SynthDataset syn = synth_logreg(opt);
    if (cfg.normalize) normalize_rows(syn.data);
    std::ostringstream text;
    write_libsvm(text, syn.data);
    prep.content_hash = git_blob_hash(text.str());
    shards = cfg.normalize ? contiguous_shards(syn.data, opt.n) : std::move(syn.shards);
    prep.manifest = {cfg.dataset, syn.data.size(), syn.data.d, syn.data.size()};
  } else {
    const std::string path = resolve_dataset_path(cfg.dataset);
    const std::string content = read_file_contents(path);
    prep.content_hash = git_blob_hash(content);
    Dataset ds = parse_libsvm(content, cfg.dimension);
    if (!cfg.full_scale && cfg.max_samples > 0 && ds.size() > cfg.max_samples) {
      ds.rows.resize(cfg.max_samples);
      ds.labels.resize(cfg.max_samples);
    }
    if (cfg.normalize) normalize_rows(ds);
    Partition part = partition(ds, cfg.workers, cfg.data_seed, std::filesystem::path(path).filename().string());
    shards = std::move(part.shards);
    prep.manifest = part.manifest;
  }

  if (cfg.l2) {
    prep.l2 = *cfg.l2;
    prep.l2_source = "explicit";
  } else {
    // Relative to max_i Lbar_i of the unregularized loss.
    double max_mean = 0.0;
    for (const auto& s : shards) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < s.m(); ++j) acc += LogisticLoss::curvature * s.features.row(j).squaredNorm();
      max_mean = std::max(max_mean, acc / static_cast<double>(s.m()));
    }
    prep.l2 = cfg.l2_rel * max_mean;
    prep.l2_source = "l2_rel * max_i Lbar_i(l2=0) = " + fmt_real(cfg.l2_rel) + " * " + fmt_real(max_mean);
  }
  prep.objective.emplace(std::move(shards), prep.l2);
  prep.constants = smoothness_constants(*prep.objective);
  prep.reference = solve_reference(*prep.objective, cfg.reference_tol, cfg.reference_max_iter, prep.constants.global);
  return prep;
}

// ---------------------------------------------------------------------------
// Method resolution
// ---------------------------------------------------------------------------

struct ResolvedMethod {
  MethodSpec spec;
  RunConfig run;  // without seed
  double gamma_rule_value = 0.0;
  std::string gamma_source;
  double lambda_gamma_value = 0.0;
  theory::TheoryParams params;
  double sigma_star_sq = 0.0;
  double expected_smoothness = 0.0;
  std::size_t epochs = 0;
};

inline double gamma_for_sampling(SamplingKind s, const SmoothnessConstants& k, std::size_t n) {
  const double nn = static_cast<double>(n);
  switch (s) {
    case SamplingKind::Uniform: return 1.0 / (k.global + k.max_sample() / nn);
    case SamplingKind::Importance: return 1.0 / (k.global + k.max_worker_mean() / nn);
    case SamplingKind::FullBatch: return 1.0 / (k.global + k.max_worker() / nn);
  }
  return 0.0;
}

inline ResolvedMethod resolve_method(const ExperimentConfig& cfg, const PreparedProblem& prep, const MethodSpec& ms) {
  require(cfg.epochs.has_value(), "config: 'epochs' is required to run an experiment");
  const auto& obj = *prep.objective;
  const auto& k = prep.constants;
  const std::size_t n = obj.n();
  const auto m = static_cast<std::size_t>(obj.m());
  const auto d = static_cast<std::size_t>(obj.d());

  ResolvedMethod r;
  r.spec = ms;
  r.epochs = *cfg.epochs;
  const SamplingScheme scheme = make_scheme(ms.sampling, k);
  r.expected_smoothness = expected_smoothness(scheme, k);
  r.sigma_star_sq = sigma_star_sq(scheme, obj, prep.reference.x_star);
  const double p = cfg.p.value_or(1.0 / static_cast<double>(m));
  r.params = ms.estimator == EstimatorKind::Lsvrg
                 ? theory::params_eclsvrg(k.global, r.expected_smoothness, n, p)
                 : theory::params_ecsgd_as(k.global, r.expected_smoothness, n, r.sigma_star_sq);
  r.params = r.params.with_mu(obj.mu());

  switch (cfg.gamma_rule) {
    case GammaRule::Auto:
      r.gamma_rule_value = gamma_for_sampling(ms.sampling, k, n);
      r.gamma_source = "auto (sampling-specific 1/(L + Lexp/n))";
      break;
    case GammaRule::MaxLij:
      r.gamma_rule_value = 1.0 / k.max_sample();
      r.gamma_source = "1/max_ij L_ij";
      break;
    case GammaRule::Theory:
      r.gamma_rule_value = r.params.stepsize_cap();
      r.gamma_source = "1/(4(A + CF))";
      break;
  }
  const double gamma = cfg.gamma.value_or(r.gamma_rule_value);
  if (cfg.gamma) r.gamma_source = "explicit (rule value " + fmt_real(r.gamma_rule_value) + ")";

  r.lambda_gamma_value = cfg.lambda_gamma == LambdaGamma::Uniform ? gamma_for_sampling(SamplingKind::Uniform, k, n) : gamma;
  const double lambda_rule = theory::ht_lambda_rule(cfg.epsilon, static_cast<double>(d), r.lambda_gamma_value, cfg.alpha);

  CompressorSpec comp;
  switch (ms.compressor) {
    case CompressorKind::HardThreshold: comp = HardThreshold{ms.param.value_or(cfg.lambda.value_or(lambda_rule))}; break;
    case CompressorKind::TopK: {
      const std::size_t def = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(d) / 100.0)));
      comp = TopK{ms.param ? static_cast<std::size_t>(*ms.param) : cfg.topk.value_or(def)};
      break;
    }
    case CompressorKind::RandK: comp = RandK{static_cast<std::size_t>(*ms.param), true}; break;
    case CompressorKind::RandKUnscaled: comp = RandK{static_cast<std::size_t>(*ms.param), false}; break;
    case CompressorKind::Round: comp = ScaledIntegerRounding{*ms.param, true}; break;
    case CompressorKind::RoundNearest: comp = ScaledIntegerRounding{*ms.param, false}; break;
    case CompressorKind::Identity: comp = IdentityCompressor{}; break;
  }
  validate(comp, d);
  r.params = r.params.with_compression(absolute_delta(comp, d).value_or(0.0));

  r.run.gamma = gamma;
  r.run.iterations = r.epochs * m;
  r.run.compressor = comp;
  r.run.estimator = ms.estimator;
  r.run.p = p;
  r.run.sampling = ms.sampling;
  r.run.record_every = cfg.record_every.value_or(std::max<std::size_t>(1, m / 10));
  r.run.parallel = cfg.parallel;
  r.run.threads = cfg.threads;
  return r;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> audit_header(const ExperimentConfig& cfg,
                                                                      const PreparedProblem& prep,
                                                                      const ResolvedMethod& rm, std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> h;
  auto add = [&](std::string k, std::string v) { h.emplace_back(std::move(k), std::move(v)); };
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(cfg.seeds[i]);
  std::string methods;
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) methods += (i ? "," : "") + cfg.methods[i].label;
  const auto& obj = *prep.objective;

  add("preset", to_string(cfg.preset));
  add("dataset", cfg.dataset);
  add("dataset_hash", prep.content_hash);
  add("dataset_total_samples", std::to_string(prep.manifest.total_samples));
  add("dataset_kept_samples", std::to_string(prep.manifest.truncation));
  add("workers", std::to_string(obj.n()));
  add("samples_per_worker", std::to_string(obj.m()));
  add("dimension", std::to_string(obj.d()));
  add("normalize", cfg.normalize ? "true" : "false");
  add("data_seed", std::to_string(cfg.data_seed));
  add("max_samples", cfg.full_scale ? "all" : std::to_string(cfg.max_samples));
  add("l2", fmt_real(prep.l2));
  add("l2_source", prep.l2_source);
  add("L", fmt_real(prep.constants.global));
  add("max_Lij", fmt_real(prep.constants.max_sample()));
  add("max_Lbar_i", fmt_real(prep.constants.max_worker_mean()));
  add("max_L_i", fmt_real(prep.constants.max_worker()));
  add("f_star", fmt_real(prep.reference.f_star));
  add("reference_grad_norm", fmt_real(prep.reference.grad_norm));
  add("reference_converged", prep.reference.converged ? "true" : "false");
  add("reference_tol", fmt_real(cfg.reference_tol));
  add("epochs", std::to_string(rm.epochs));
  add("seeds", seeds);
  add("methods", methods);
  add("method", rm.spec.label);
  add("seed", std::to_string(seed));
  add("estimator", to_string(rm.run.estimator));
  add("sampling", to_string(rm.run.sampling));
  add("compressor", describe(rm.run.compressor));
  add("gamma", fmt_real(rm.run.gamma));
  add("gamma_rule", rm.gamma_source);
  add("gamma_rule_value", fmt_real(rm.gamma_rule_value));
  add("lambda_rule", "alpha sqrt(epsilon/(d^2 gamma_lambda))");
  add("lambda_gamma", fmt_real(rm.lambda_gamma_value));
  add("epsilon", fmt_real(cfg.epsilon));
  add("alpha", fmt_real(cfg.alpha));
  add("p", fmt_real(rm.run.p));
  add("iterations", std::to_string(rm.run.iterations));
  add("record_every", std::to_string(rm.run.record_every));
  add("expected_smoothness", fmt_real(rm.expected_smoothness));
  add("sigma_star_sq", fmt_real(rm.sigma_star_sq));
  add("theory_A", fmt_real(rm.params.A));
  add("theory_B", fmt_real(rm.params.B));
  add("theory_C", fmt_real(rm.params.C));
  add("theory_D1", fmt_real(rm.params.D1));
  add("theory_rho", fmt_real(rm.params.rho));
  add("theory_F", fmt_real(rm.params.F));
  add("theory_Delta", fmt_real(rm.params.Delta));
  add("theory_stepsize_cap", fmt_real(rm.params.stepsize_cap()));
  add("epoch_accounting",
      rm.run.estimator == EstimatorKind::Lsvrg
          ? "one epoch = m rounds; each round costs 2 sample gradients per worker plus, in expectation, p*m "
            "sample-gradient equivalents for the reference refresh"
          : "one epoch = m rounds; each round costs 1 sample gradient per worker (m for full batches)");
  add("bits_encoding", "32-bit count + 64 bits per (index, value) entry; dense 32 + 32 d when strictly smaller");
  add("target_gap", fmt_real(cfg.target_gap));
  return h;
}

inline void write_trace_csv(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& header,
                            const std::vector<TraceRecord>& trace) {
  for (const auto& [k, v] : header) out << "# " << k << " = " << v << '\n';
  out << kCsvColumns << '\n';
  for (const auto& r : trace) {
    out << r.k << ',' << fmt_real(r.f_gap_x) << ',' << fmt_real(r.f_gap_avg) << ',' << fmt_real(r.bits_cum) << ','
        << fmt_real(r.err_norm_sq) << ',' << fmt_real(r.sigma_k_sq) << '\n';
  }
}

/// Reads the numeric rows back from a trace CSV (comment header skipped).
inline std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      seen_header = true;
      continue;
    }
    std::istringstream ls(line);
    TraceRecord r;
    char comma;
    ls >> r.k >> comma >> r.f_gap_x >> comma >> r.f_gap_avg >> comma >> r.bits_cum >> comma >> r.err_norm_sq >>
        comma >> r.sigma_k_sq;
    out.push_back(r);
  }
  return out;
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line plot with a log-scale y axis. Output depends only on the data.
inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
  const double W = 800, H = 500, ml = 80, mr = 200, mt = 40, mb = 60;
  const double pw = W - ml - mr, ph = H - mt - mb;
  double xmax = 0.0, ymin = std::numeric_limits<double>::infinity(), ymax = 0.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmax = std::max(xmax, s.x[i]);
      const double y = std::max(s.y[i], 1e-16);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmax > 0.0)) xmax = 1.0;
  if (!std::isfinite(ymin)) ymin = 1e-16, ymax = 1.0;
  const double lo = std::floor(std::log10(ymin));
  double hi = std::ceil(std::log10(ymax));
  if (hi <= lo) hi = lo + 1.0;
  auto px = [&](double x) { return ml + pw * x / xmax; };
  auto py = [&](double y) { return mt + ph * (hi - std::log10(std::max(y, 1e-16))) / (hi - lo); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(ml + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  o << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = lo; e <= hi + 0.5; e += 1.0) {
    const double y = mt + ph * (hi - e) / (hi - lo);
    o << "<line x1=\"" << num(ml) << "\" y1=\"" << num(y) << "\" x2=\"" << num(ml + pw) << "\" y2=\"" << num(y)
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << num(ml - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">1e" << static_cast<int>(e)
      << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double xv = xmax * t / 5.0;
    const double x = px(xv);
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(mt + ph) << "\" x2=\"" << num(x) << "\" y2=\""
      << num(mt + ph + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(x) << "\" y=\"" << num(mt + ph + 20) << "\" text-anchor=\"middle\">" << fmt_short(xv)
      << "</text>\n";
  }
  o << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(H - 15) << "\" text-anchor=\"middle\">" << xml_escape(x_label)
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << num(mt + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << num(mt + ph / 2) << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % (sizeof palette / sizeof *palette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
      o << (first ? "" : " ") << num(px(series[s].x[i])) << ',' << num(py(series[s].y[i]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = mt + 10 + 20.0 * static_cast<double>(s);
    o << "<line x1=\"" << num(ml + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(ml + pw + 30) << "\" y2=\""
      << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(ml + pw + 35) << "\" y=\"" << num(ly + 4) << "\">" << xml_escape(series[s].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct MethodOutcome {
  ResolvedMethod method;
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> runs;  // one per seed
  std::vector<std::string> csv_paths;
};

struct ExperimentReport {
  std::vector<MethodOutcome> methods;
  std::string svg_path;
  std::string summary_path;
};

/// Cumulative bits per worker at the first record whose f(x^k) - f* is at
/// or below `target`.
inline std::optional<double> bits_to_reach(const std::vector<TraceRecord>& trace, double target) {
  for (const auto& r : trace)
    if (r.f_gap_x <= target) return r.bits_cum;
  return std::nullopt;
}

/// Per-record mean across runs (runs share the record cadence).
inline Series mean_series(const std::string& label, const std::vector<RunResult>& runs) {
  Series s;
  s.label = label;
  if (runs.empty()) return s;
  std::size_t len = runs.front().trace.size();
  for (const auto& r : runs) len = std::min(len, r.trace.size());
  for (std::size_t i = 0; i < len; ++i) {
    double x = 0.0, y = 0.0;
    for (const auto& r : runs) {
      x += r.trace[i].bits_cum;
      y += r.trace[i].f_gap_x;
    }
    s.x.push_back(x / static_cast<double>(runs.size()));
    s.y.push_back(y / static_cast<double>(runs.size()));
  }
  return s;
}

inline std::string sanitize(std::string s) {
  for (auto& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  return s;
}

/// Runs every (method, seed) pair, writes one CSV per run, a summary CSV and
/// one SVG. All inputs are resolved before the first run starts, so a missing
/// dataset or bad parameter fails early. `write_files = false` keeps results
/// in memory only.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, bool write_files = true) {
  require(cfg.epochs.has_value(), "config: 'epochs' is required to run an experiment");
  const PreparedProblem prep = prepare_problem(cfg);
  std::vector<ResolvedMethod> resolved;
  for (const auto& ms : cfg.methods) resolved.push_back(resolve_method(cfg, prep, ms));

  namespace fs = std::filesystem;
  if (write_files) fs::create_directories(cfg.output_dir);
  const std::string stem = to_string(cfg.preset);

  ExperimentReport rep;
  std::vector<Series> series;
  for (const auto& rm : resolved) {
    MethodOutcome mo;
    mo.method = rm;
    for (auto seed : cfg.seeds) {
      RunConfig rc = rm.run;
      rc.seed = seed;
      RunResult res = run(rc, *prep.objective, prep.constants, prep.reference.f_star);
      if (write_files) {
        const fs::path path =
            fs::path(cfg.output_dir) / (stem + "__" + sanitize(rm.spec.label) + "__seed" + std::to_string(seed) + ".csv");
        std::ofstream out(path, std::ios::binary);
        write_trace_csv(out, audit_header(cfg, prep, rm, seed), res.trace);
        if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
        mo.csv_paths.push_back(path.string());
      }
      mo.seeds.push_back(seed);
      mo.runs.push_back(std::move(res));
    }
    series.push_back(mean_series(rm.spec.label, mo.runs));
    rep.methods.push_back(std::move(mo));
  }

  if (write_files) {
    const std::string title = stem + " on " + prep.manifest.name + " (mean over " + std::to_string(cfg.seeds.size()) +
                              " seeds)";
    const fs::path svg = fs::path(cfg.output_dir) / (stem + "__" + sanitize(prep.manifest.name) + ".svg");
    std::ofstream(svg, std::ios::binary) << render_svg(title, "bits sent per worker", "f(x^k) - f*", series);
    rep.svg_path = svg.string();

    const fs::path summary = fs::path(cfg.output_dir) / (stem + "__summary.csv");
    std::ofstream out(summary, std::ios::binary);
    out << "# dataset = " << cfg.dataset << "\n# dataset_hash = " << prep.content_hash << "\n# target_gap = "
        << fmt_real(cfg.target_gap) << '\n';
    out << "method,seed,gamma,final_f_gap_x,final_f_gap_avg,final_bits_cum,bits_to_target,diverged\n";
    for (const auto& mo : rep.methods) {
      for (std::size_t s = 0; s < mo.runs.size(); ++s) {
        const auto& tr = mo.runs[s].trace;
        const auto hit = bits_to_reach(tr, cfg.target_gap);
        out << mo.method.spec.label << ',' << mo.seeds[s] << ',' << fmt_real(mo.method.run.gamma) << ','
            << fmt_real(tr.back().f_gap_x) << ',' << fmt_real(tr.back().f_gap_avg) << ','
            << fmt_real(tr.back().bits_cum) << ',' << (hit ? fmt_real(*hit) : std::string("nan")) << ','
            << (mo.runs[s].diverged ? "true" : "false") << '\n';
      }
    }
    rep.summary_path = summary.string();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Theory calculator table
// ---------------------------------------------------------------------------

struct CalcInputs {
  double L = 1.0;
  double lexp = 1.0;
  std::size_t n = 1;
  double p = 1.0;
  double sigma_star_sq = 0.0;
  double max_li = 1.0;
  double M = 0.0;
  double sigma_sq = 0.0;
  double zeta_star_sq = 0.0;
  double mu = 0.0;
  double delta = 0.0;  // Delta of the compressor
  double r0_sq = 1.0;
  double sigma0_sq = 0.0;
  double K = 1000.0;
};

struct CalcRow {
  std::string method;
  theory::TheoryParams params;
  double gamma = 0.0;
  double bound = 0.0;
  double t0 = 0.0;
  double t0_hat = 0.0;
};

inline std::vector<CalcRow> theory_table(const CalcInputs& in) {
  std::vector<std::pair<std::string, theory::TheoryParams>> presets = {
      {"ec-sgd-as", theory::params_ecsgd_as(in.L, in.lexp, in.n, in.sigma_star_sq)},
      {"ec-lsvrg", theory::params_eclsvrg(in.L, in.lexp, in.n, in.p)},
      {"m-sigma", theory::params_msigma(in.L, in.max_li, in.M, in.sigma_sq, in.zeta_star_sq, in.n)},
  };
  std::vector<CalcRow> rows;
  for (auto& [name, base] : presets) {
    CalcRow r;
    r.method = name;
    r.params = base.with_compression(in.delta).with_mu(in.mu);
    const double sigma0 = r.params.B > 0.0 ? in.sigma0_sq : 0.0;
    // Stepsize from the lemmas with T_0 evaluated at the cap (an upper bound
    // on T_0 for any admissible gamma), then the bound at that stepsize.
    const double t0_cap = theory::initial_potential(r.params, r.params.stepsize_cap(), in.r0_sq, sigma0);
    if (in.mu > 0.0) {
      const auto c = theory::lemma_constants(r.params, t0_cap);
      r.gamma = theory::stepsize_strongly_convex(r.params, in.mu, in.K, c.a, c.c1, c.c2);
    } else {
      const auto c = theory::convex_lemma_constants(r.params, in.r0_sq, sigma0);
      r.gamma = theory::stepsize_convex(r.params, in.K, c.a, c.b, c.c1, c.c2);
    }
    r.t0 = theory::initial_potential(r.params, r.gamma, in.r0_sq, sigma0);
    r.t0_hat = theory::initial_potential_hat(r.params, in.r0_sq, sigma0);
    r.bound = theory::bound_rhs(r.params, r.gamma, in.K, r.t0, in.mu);
    rows.push_back(r);
  }
  return rows;
}

inline std::string format_theory_table(const std::vector<CalcRow>& rows, bool csv) {
  std::ostringstream o;
  const char* cols[] = {"method", "A", "B", "C", "D1", "D2", "rho", "F", "Delta", "h", "gamma_cap", "gamma", "T0",
                        "T0_hat", "bound"};
  if (csv) {
    for (std::size_t i = 0; i < std::size(cols); ++i) o << (i ? "," : "") << cols[i];
    o << '\n';
    for (const auto& r : rows) {
      const auto& p = r.params;
      o << r.method;
      for (double v : {p.A, p.B, p.C, p.D1, p.D2, p.rho, p.F, p.Delta, p.h(), p.stepsize_cap(), r.gamma, r.t0,
                       r.t0_hat, r.bound})
        o << ',' << fmt_real(v);
      o << '\n';
    }
    return o.str();
  }
  char buf[64];
  for (const char* c : cols) {
    std::snprintf(buf, sizeof buf, "%-12s", c);
    o << buf;
  }
  o << '\n';
  for (const auto& r : rows) {
    const auto& p = r.params;
    std::snprintf(buf, sizeof buf, "%-12s", r.method.c_str());
    o << buf;
    for (double v : {p.A, p.B, p.C, p.D1, p.D2, p.rho, p.F, p.Delta, p.h(), p.stepsize_cap(), r.gamma, r.t0,
                     r.t0_hat, r.bound}) {
      std::snprintf(buf, sizeof buf, "%-12.5g", v);
      o << buf;
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace ecabs::report
