#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "speckle/compression.hpp"
#include "speckle/solvers.hpp"

namespace speckle {

inline constexpr const char* kRowsHeader = "method,m,trial,seed,psnr_db,nll_estimate,nll_truth,time_s,evals";

struct ExperimentConfig {
  Index n = 256;
  Index pieces = 3;
  /// Explicit truth; when empty the built-in preset for (n, pieces) is used.
  std::vector<Index> breaks;
  std::vector<double> values;
  std::vector<Index> m_list{64, 96, 128};
  int trials = 10;
  double sigma_w = 1.0;
  double sigma_z = 0.0;
  std::vector<std::string> methods{"pgd", "pgd+init", "multilevel", "pgd+multilevel"};
  /// Code parameters; max_jumps < 0 means pieces - 1.
  Index max_jumps = -1;
  int bits = 4;
  Bounds bounds{0.25, 2.5};
  std::uint64_t seed = 2021;
  std::string output_dir = "experiment_out";
  PgdConfig pgd;
  int init_count = 8;
  MultilevelConfig multilevel;
  int threads = 1;
};

/// Throws std::invalid_argument describing the first problem found.
void validate(const ExperimentConfig& cfg);

/// Reads a JSON config; absent keys keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Piecewise-constant truth with uneven breaks and values spread over
/// [0.5, 2]. Values are multiples of 1/8.
Signal preset_signal(Index n, Index pieces, Bounds bounds);

/// The truth described by the config (explicit or preset).
Signal truth_signal(const ExperimentConfig& cfg);

PiecewiseConstantCode code_for(const ExperimentConfig& cfg);

/// 10 log10(||x||_inf^2 / ||x_hat - x||_2^2); +inf when the error is zero.
double psnr(const Signal& truth, const Vector& estimate);

bool is_known_method(const std::string& method);

/// Runs one named method on one instance. Method-level randomness comes
/// from `seed`.
SolverReport run_method(const std::string& method, const Objective& objective, const ObjectiveContext& ctx,
                        const PiecewiseConstantCode& code, const ExperimentConfig& cfg, std::uint64_t seed);

struct ExperimentRow {
  std::string method;
  Index m = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double psnr_db = 0.0;
  double nll_estimate = 0.0;
  double nll_truth = 0.0;
  double time_s = 0.0;
  std::uint64_t evals = 0;
  /// (1/n)||x - x_hat||^2, kept for bound checks; not written to rows.csv.
  double per_sample_mse = 0.0;
};

struct SummaryRow {
  std::string method;
  Index m = 0;
  int trials = 0;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  double psnr_ci_low = 0.0;
  double psnr_ci_high = 0.0;
  double nll_estimate_mean = 0.0;
  double nll_truth_mean = 0.0;
  double time_mean = 0.0;
  double time_std = 0.0;
  double evals_mean = 0.0;
  double evals_std = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<SummaryRow> summary;
};

/// Seed of the (m, trial) cell; every method in the cell sees the same instance.
std::uint64_t cell_seed(std::uint64_t master, Index m, int trial);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Mean +- 1.645 s / sqrt(trials) per (method, m), in row order.
std::vector<SummaryRow> summarize(const std::vector<ExperimentRow>& rows);

void write_rows_csv(std::ostream& os, const std::vector<ExperimentRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& summary);
void write_plot_script(std::ostream& os);

/// rows.csv, summary.csv and plot.py under `dir` (created if missing).
void emit_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace speckle
