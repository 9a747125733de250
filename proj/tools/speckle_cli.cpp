// Command-line front end: simulate, recover, experiment, bound, denoise-demo.

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "speckle/compression.hpp"
#include "speckle/harness.hpp"
#include "speckle/likelihood.hpp"
#include "speckle/measurement.hpp"
#include "speckle/solvers.hpp"
#include "speckle/theory.hpp"

using namespace speckle;

namespace {

struct CodeOptions {
  Index n = 256;
  Index pieces = 3;
  Index max_jumps = -1;
  int bits = 4;
  double x_min = 0.25;
  double x_max = 2.5;

  void add(CLI::App* app) {
    app->add_option("--pieces", pieces, "Number of constant pieces");
    app->add_option("--max-jumps", max_jumps, "Code jump limit J (default pieces-1)");
    app->add_option("--bits", bits, "Quantizer bits b");
    app->add_option("--x-min", x_min, "Lower value bound");
    app->add_option("--x-max", x_max, "Upper value bound");
  }
};

int cmd_simulate(Index n, Index m, const CodeOptions& co, double sigma_w, double sigma_z, std::uint64_t seed,
                 const std::string& out) {
  const Signal truth = preset_signal(n, co.pieces, {co.x_min, co.x_max});
  const SampledInstance s = make_instance(truth.values(), m, sigma_w, sigma_z, seed);
  if (out.empty() || out == "-") {
    write_instance(std::cout, s.instance, &truth.values());
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    write_instance(f, s.instance, &truth.values());
  }
  return 0;
}

int cmd_recover(const std::string& path, const std::string& method, CodeOptions co, bool approx,
                std::uint64_t seed, int budget, Index radius) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const LoadedInstance loaded = read_instance(in);
  ExperimentConfig cfg;
  cfg.n = loaded.instance.cols();
  cfg.pieces = co.pieces;
  cfg.max_jumps = co.max_jumps;
  cfg.bits = co.bits;
  cfg.bounds = {co.x_min, co.x_max};
  cfg.pgd.projection = approx ? ProjectionMode::kApproximate : ProjectionMode::kExact;
  cfg.multilevel.budget = budget;
  cfg.multilevel.radius = radius;
  if (!is_known_method(method)) throw std::invalid_argument("unknown method: " + method);

  const ObjectiveContext ctx(loaded.instance);
  const LikelihoodObjective objective(ctx);
  const PiecewiseConstantCode code = code_for(cfg);
  const SolverReport r = run_method(method, objective, ctx, code, cfg, seed);
  std::cout << to_record(r) << '\n';
  if (loaded.truth) {
    const Signal truth(*loaded.truth, cfg.bounds);
    std::cout << "psnr_db=" << psnr(truth, r.estimate.values())
              << " nll_truth=" << nll_limit(truth.values(), ctx) << '\n';
  }
  return 0;
}

int cmd_experiment(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
                   int threads) {
  ExperimentConfig cfg = load_config(config);
  if (!out.empty()) cfg.output_dir = out;
  if (seed) cfg.seed = *seed;
  if (threads > 0) cfg.threads = threads;
  const ExperimentResult result = run_experiment(cfg);
  emit_outputs(result, cfg.output_dir);
  write_summary_csv(std::cout, result.summary);
  std::cerr << "wrote " << result.rows.size() << " rows to " << cfg.output_dir << '\n';
  return 0;
}

int cmd_denoise(Index n, int trials, double a, std::uint64_t seed) {
  Rng rng = derive_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double unstructured = 0.0, constant = 0.0;
  for (int t = 0; t < trials; ++t) {
    Vector x(n), y(n);
    for (Index i = 0; i < n; ++i) {
      x(i) = a * (0.5 + std::fmod(0.618034 * static_cast<double>(i), 1.0));
      y(i) = x(i) * normal(rng);
    }
    unstructured += (denoise_ml(y) - x).squaredNorm() / x.squaredNorm();
    Vector yc(n);
    for (Index i = 0; i < n; ++i) yc(i) = a * normal(rng);
    const double err = denoise_constant_ml(yc) - a;
    constant += static_cast<double>(n) * err * err;
  }
  std::cout << "unstructured  E||x_hat - x||^2 / ||x||^2  monte-carlo " << unstructured / trials
            << "  theory " << 2.0 * (1.0 - std::sqrt(2.0 / M_PI)) << '\n';
  std::cout << "constant      E[n (a_hat - a)^2]          monte-carlo " << constant / trials
            << "  theory " << a * a / 2.0 << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured signal recovery under speckle noise"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out;

  auto* sim = app.add_subcommand("simulate", "Write a measurement instance of the preset signal");
  Index sim_n = 256, sim_m = 128;
  double sigma_w = 1.0, sigma_z = 0.0;
  CodeOptions sim_code;
  sim->add_option("--n", sim_n, "Signal length");
  sim->add_option("--m", sim_m, "Number of measurements");
  sim->add_option("--sigma-w", sigma_w, "Speckle standard deviation");
  sim->add_option("--sigma-z", sigma_z, "Additive noise standard deviation");
  sim->add_option("--seed", seed, "Seed");
  sim->add_option("--out", out, "Instance file (stdout when omitted)");
  sim_code.add(sim);

  auto* rec = app.add_subcommand("recover", "Run one method on an instance file");
  std::string instance_path, method = "pgd";
  CodeOptions rec_code;
  bool approx = false;
  int budget = MultilevelConfig{}.budget;
  Index radius = MultilevelConfig{}.radius;
  rec->add_option("instance", instance_path, "Instance file")->required();
  rec->add_option("--method", method, "pgd | pgd+init | multilevel | pgd+multilevel");
  rec->add_option("--seed", seed, "Seed for randomized methods");
  rec->add_flag("--approx-projection{true},--exact-projection{false}", approx, "Projection mode");
  rec->add_option("--budget", budget, "Multilevel inner-solve budget");
  rec->add_option("--radius", radius, "Multilevel break move radius");
  rec_code.add(rec);

  auto* exp = app.add_subcommand("experiment", "Run an experiment grid from a JSON config");
  std::string config;
  std::optional<std::uint64_t> exp_seed;
  int threads = 0;
  exp->add_option("--config", config, "Config file")->required();
  exp->add_option("--out", out, "Output directory (overrides config)");
  exp->add_option("--seed", exp_seed, "Master seed (overrides config)");
  exp->add_option("--threads", threads, "Worker threads");

  auto* bnd = app.add_subcommand("bound", "Evaluate the recovery error bound");
  BoundInputs bi{32, 256, 0.5, 2.0, -1.0, -1.0, 0.1};
  Index k = -1;
  CodeOptions bnd_code;
  bool csv = false;
  bnd->add_option("--m", bi.m, "Measurements");
  bnd->add_option("--n", bi.n, "Signal length");
  bnd->add_option("--rate", bi.rate, "Code rate in bits/sample (default: from code options)");
  bnd->add_option("--distortion", bi.distortion, "Code distortion (default: from code options)");
  bnd->add_option("--epsilon", bi.epsilon, "Slack epsilon");
  bnd->add_option("--k", k, "Sparsity / piece count for the structured form");
  bnd->add_flag("--csv", csv, "CSV output");
  bnd_code.add(bnd);

  auto* den = app.add_subcommand("denoise-demo", "Monte-Carlo check of the denoising estimators");
  Index den_n = 10000;
  int den_trials = 100;
  double den_a = 1.0;
  den->add_option("--n", den_n, "Signal length");
  den->add_option("--trials", den_trials, "Monte-Carlo trials");
  den->add_option("--a", den_a, "Constant level");
  den->add_option("--seed", seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_n, sim_m, sim_code, sigma_w, sigma_z, seed, out);
    if (*rec) return cmd_recover(instance_path, method, rec_code, approx, seed, budget, radius);
    if (*exp) return cmd_experiment(config, out, exp_seed, threads);
    if (*bnd) {
      bi.x_min = bnd_code.x_min;
      bi.x_max = bnd_code.x_max;
      if (bi.rate < 0.0 || bi.distortion < 0.0) {
        const Index J = bnd_code.max_jumps >= 0 ? bnd_code.max_jumps : bnd_code.pieces - 1;
        const CodeStats st = code_stats(PiecewiseConstantCode(bi.n, J, bnd_code.bits, {bi.x_min, bi.x_max}));
        if (bi.rate < 0.0) bi.rate = st.rate;
        if (bi.distortion < 0.0) bi.distortion = st.distortion;
      }
      if (csv) print_bound_csv(std::cout, bi, k);
      else print_bound_table(std::cout, bi, k);
      return 0;
    }
    if (*den) return cmd_denoise(den_n, den_trials, den_a, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
