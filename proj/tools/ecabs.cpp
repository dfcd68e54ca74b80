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


// Command-line front end: run experiments, compute theory tables, solve for
// reference optima and validate LIBSVM files.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecabs/ecabs.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_dir,
            bool parallel) {
  std::vector<std::string> ov = overrides;
  if (!out_dir.empty()) ov.push_back("output_dir=" + out_dir);
  if (parallel) ov.push_back("parallel=true");
  const ecabs::report::ExperimentConfig cfg = ecabs::report::load_config(config_path, ov);
  const auto rep = ecabs::report::run_experiment(cfg);
  for (const auto& mo : rep.methods) {
    for (std::size_t s = 0; s < mo.runs.size(); ++s) {
      const auto& r = mo.runs[s];
      const auto& last = r.trace.back();
      std::printf("%-28s seed=%-4llu gamma=%-12.6g f_gap=%-12.6g f_gap_avg=%-12.6g bits=%-12.6g%s\n",
                  mo.method.spec.label.c_str(), static_cast<unsigned long long>(mo.seeds[s]), mo.method.run.gamma,
                  last.f_gap_x, last.f_gap_avg, last.bits_cum, r.diverged ? "  DIVERGED" : "");
      if (r.diverged) std::fprintf(stderr, "warning: %s\n", r.diagnostic.c_str());
    }
  }
  std::printf("summary: %s\nplot: %s\n", rep.summary_path.c_str(), rep.svg_path.c_str());
  return 0;
}

int cmd_solve_ref(const std::string& config_path, const std::vector<std::string>& overrides) {
  const auto cfg = ecabs::report::load_config(config_path, overrides);
  const auto prep = ecabs::report::prepare_problem(cfg);
  std::printf("dataset_hash = %s\n", prep.content_hash.c_str());
  std::printf("n = %zu, m = %lld, d = %lld, l2 = %.17g\n", prep.objective->n(),
              static_cast<long long>(prep.objective->m()), static_cast<long long>(prep.objective->d()), prep.l2);
  std::printf("L = %.17g\nmax_Lij = %.17g\nmax_Lbar_i = %.17g\nmax_L_i = %.17g\n", prep.constants.global,
              prep.constants.max_sample(), prep.constants.max_worker_mean(), prep.constants.max_worker());
  std::printf("f_star = %.17g\ngrad_norm = %.6g\niterations = %lld\nconverged = %s\n", prep.reference.f_star,
              prep.reference.grad_norm, prep.reference.iterations, prep.reference.converged ? "true" : "false");
  if (!prep.reference.converged) {
    std::fprintf(stderr, "warning: reference solve did not reach the tolerance\n");
    return 2;
  }
  return 0;
}

int cmd_parse_check(const std::vector<std::string>& files, std::optional<std::size_t> dim) {
  int status = 0;
  for (const auto& f : files) {
    try {
      const auto ds = ecabs::load_libsvm(f, dim);
      std::size_t pos = 0;
      for (double y : ds.labels) pos += y > 0.0;
      std::printf("%s: ok, %zu samples, d = %zu, %zu positive\n", f.c_str(), ds.size(), ds.d, pos);
    } catch (const ecabs::ParseError& e) {
      std::fprintf(stderr, "%s: %s\n", f.c_str(), e.what());
      status = 1;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s: %s\n", f.c_str(), e.what());
      status = 1;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Error-compensated distributed SGD with absolute compressors"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  bool parallel = false;
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--parallel", parallel, "Run workers on OpenMP threads");

  auto* solve = app.add_subcommand("solve-ref", "Compute constants and the reference optimum of a config's problem");
  solve->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  solve->add_option("--set", overrides, "Override a config key (key=value), repeatable");

  auto* check = app.add_subcommand("parse-check", "Validate LIBSVM files");
  std::vector<std::string> files;
  std::optional<std::size_t> dim;
  check->add_option("files", files, "LIBSVM files (plain or gzip)")->required();
  check->add_option("--dimension", dim, "Dimension override");

  auto* calc = app.add_subcommand("calc", "Theory calculator: parameters, stepsizes and bounds");
  ecabs::report::CalcInputs in;
  std::string calc_config;
  std::vector<std::string> calc_overrides;
  std::string calc_method = "ec-sgd:us:ht";
  bool csv = false;
  calc->add_option("--config", calc_config, "Derive L, Lexp, n, sigma*^2, mu and Delta from a config");
  calc->add_option("--set", calc_overrides, "Override a config key (key=value), repeatable");
  calc->add_option("--method", calc_method, "Method used with --config")->capture_default_str();
  calc->add_option("--L", in.L, "Smoothness of f");
  calc->add_option("--lexp", in.lexp, "Expected smoothness");
  calc->add_option("--n", in.n, "Number of workers");
  calc->add_option("--p", in.p, "Reference refresh probability");
  calc->add_option("--sigma-star-sq", in.sigma_star_sq, "Gradient noise at the optimum");
  calc->add_option("--max-li", in.max_li, "max_i L_i");
  calc->add_option("--M", in.M, "Relative noise constant");
  calc->add_option("--sigma-sq", in.sigma_sq, "Absolute noise constant");
  calc->add_option("--zeta-star-sq", in.zeta_star_sq, "Heterogeneity at the optimum");
  calc->add_option("--mu", in.mu, "Strong convexity (0 for convex)");
  calc->add_option("--delta", in.delta, "Absolute compressor Delta");
  calc->add_option("--r0-sq", in.r0_sq, "||x0 - x*||^2");
  calc->add_option("--sigma0-sq", in.sigma0_sq, "Initial estimator variance");
  calc->add_option("--K", in.K, "Iterations");
  calc->add_flag("--csv", csv, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(config_path, overrides, out_dir, parallel);
    if (*solve) return cmd_solve_ref(config_path, overrides);
    if (*check) return cmd_parse_check(files, dim);
    if (*calc) {
      if (!calc_config.empty()) {
        namespace r = ecabs::report;
        const auto cfg = r::load_config(calc_config, calc_overrides);
        const auto prep = r::prepare_problem(cfg);
        auto cfg_run = cfg;
        if (!cfg_run.epochs) cfg_run.epochs = 1;
        const auto rm = r::resolve_method(cfg_run, prep, r::parse_method(calc_method));
        in.L = prep.constants.global;
        in.lexp = rm.expected_smoothness;
        in.n = prep.objective->n();
        in.p = rm.run.p;
        in.sigma_star_sq = rm.sigma_star_sq;
        in.max_li = prep.constants.max_worker();
        in.mu = prep.objective->mu();
        in.delta = rm.params.Delta;
        in.r0_sq = prep.reference.x_star.squaredNorm();
        in.K = static_cast<double>(rm.run.iterations);
      }
      std::fputs(ecabs::report::format_theory_table(ecabs::report::theory_table(in), csv).c_str(), stdout);
      return 0;
    }
  } catch (const ecabs::ParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
