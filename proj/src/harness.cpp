#include "speckle/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace speckle {

namespace {

constexpr double kZ90 = 1.645;

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{"pgd", "pgd+init", "multilevel", "pgd+multilevel"};
  return names;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

bool is_known_method(const std::string& method) {
  const auto& names = known_methods();
  return std::find(names.begin(), names.end(), method) != names.end();
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.n < 2) throw std::invalid_argument("n must be at least 2");
  if (cfg.pieces < 1 || cfg.pieces > cfg.n) throw std::invalid_argument("pieces must lie in [1, n]");
  if (cfg.trials < 1) throw std::invalid_argument("trials must be at least 1");
  if (cfg.methods.empty()) throw std::invalid_argument("method list is empty");
  for (const auto& name : cfg.methods)
    if (!is_known_method(name)) throw std::invalid_argument("unknown method: " + name);
  if (cfg.m_list.empty()) throw std::invalid_argument("m list is empty");
  for (Index m : cfg.m_list)
    if (m < 1 || m >= cfg.n) throw std::invalid_argument("every m must satisfy 1 <= m < n");
  if (!(cfg.sigma_w > 0.0) || cfg.sigma_z < 0.0) throw std::invalid_argument("invalid noise scales");
  if (cfg.init_count < 1) throw std::invalid_argument("init_count must be positive");
  if (cfg.threads < 1) throw std::invalid_argument("threads must be positive");
  if (!cfg.breaks.empty() && cfg.breaks.size() != cfg.values.size() + 1)
    throw std::invalid_argument("explicit truth needs one more break than values");
}

ExperimentConfig parse_config(const std::string& json_text) {
  using nlohmann::json;
  const json j = json::parse(json_text);
  ExperimentConfig cfg;
  auto get = [&](const json& obj, const char* key, auto& target) {
    if (obj.contains(key)) obj.at(key).get_to(target);
  };
  get(j, "n", cfg.n);
  get(j, "pieces", cfg.pieces);
  get(j, "breaks", cfg.breaks);
  get(j, "values", cfg.values);
  get(j, "m", cfg.m_list);
  get(j, "trials", cfg.trials);
  get(j, "sigma_w", cfg.sigma_w);
  get(j, "sigma_z", cfg.sigma_z);
  get(j, "methods", cfg.methods);
  get(j, "seed", cfg.seed);
  get(j, "output_dir", cfg.output_dir);
  get(j, "init_count", cfg.init_count);
  get(j, "threads", cfg.threads);
  if (j.contains("code")) {
    const json& c = j.at("code");
    get(c, "max_jumps", cfg.max_jumps);
    get(c, "bits", cfg.bits);
    get(c, "x_min", cfg.bounds.lower);
    get(c, "x_max", cfg.bounds.upper);
  }
  if (j.contains("projection")) {
    const std::string mode = j.at("projection").get<std::string>();
    if (mode == "exact") cfg.pgd.projection = ProjectionMode::kExact;
    else if (mode == "approx") cfg.pgd.projection = ProjectionMode::kApproximate;
    else throw std::invalid_argument("projection must be 'exact' or 'approx'");
  }
  if (j.contains("pgd")) {
    const json& p = j.at("pgd");
    get(p, "max_iters", cfg.pgd.max_iters);
    get(p, "initial_step", cfg.pgd.initial_step);
    get(p, "backtracking", cfg.pgd.backtracking);
    get(p, "max_halvings", cfg.pgd.max_halvings);
    get(p, "tolerance", cfg.pgd.tolerance);
  }
  if (j.contains("multilevel")) {
    const json& mlj = j.at("multilevel");
    get(mlj, "budget", cfg.multilevel.budget);
    get(mlj, "radius", cfg.multilevel.radius);
    get(mlj, "inner_tolerance", cfg.multilevel.inner_tolerance);
    get(mlj, "inner_max_iters", cfg.multilevel.inner_max_iters);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Signal preset_signal(Index n, Index pieces, Bounds bounds) {
  static const double kValues[] = {1.0, 2.0, 0.5, 1.5, 0.75, 1.75, 1.25, 0.625};
  static const double kWeights[] = {1.0, 1.4, 0.8, 1.6, 1.2, 0.9, 1.3, 1.1};
  if (pieces < 1 || pieces > n) throw std::invalid_argument("pieces must lie in [1, n]");
  std::vector<double> weights, values;
  for (Index l = 0; l < pieces; ++l) {
    weights.push_back(kWeights[l % 8]);
    values.push_back(kValues[l % 8]);
  }
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<Index> breaks{0};
  double acc = 0.0;
  for (Index l = 0; l + 1 < pieces; ++l) {
    acc += weights[l];
    const Index b = static_cast<Index>(std::lround(acc / total * static_cast<double>(n)));
    breaks.push_back(std::clamp<Index>(b, breaks.back() + 1, n - (pieces - 1 - l)));
  }
  breaks.push_back(n);
  return make_piecewise_signal(breaks, values, n, bounds);
}

Signal truth_signal(const ExperimentConfig& cfg) {
  if (cfg.breaks.empty()) return preset_signal(cfg.n, cfg.pieces, cfg.bounds);
  return make_piecewise_signal(cfg.breaks, cfg.values, cfg.n, cfg.bounds);
}

PiecewiseConstantCode code_for(const ExperimentConfig& cfg) {
  const Index J = cfg.max_jumps >= 0 ? cfg.max_jumps : cfg.pieces - 1;
  return PiecewiseConstantCode(cfg.n, J, cfg.bits, cfg.bounds);
}

double psnr(const Signal& truth, const Vector& estimate) {
  if (estimate.size() != truth.size()) throw DimensionError("estimate length differs from truth");
  const double peak = truth.values().lpNorm<Eigen::Infinity>();
  const double err = (estimate - truth.values()).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / err);
}

SolverReport run_method(const std::string& method, const Objective& objective, const ObjectiveContext& ctx,
                        const PiecewiseConstantCode& code, const ExperimentConfig& cfg, std::uint64_t seed) {
  const double start = default_start_magnitude(ctx, code.bounds());
  PgdConfig pgd_cfg = cfg.pgd;
  pgd_cfg.init_magnitudes = {start};
  MultilevelConfig ml_cfg = cfg.multilevel;
  ml_cfg.pieces = cfg.pieces;
  ml_cfg.bounds = code.bounds();
  ml_cfg.seed = seed;
  ml_cfg.start_magnitude = start;

  if (method == "pgd") return pgd(objective, code, pgd_cfg);
  if (method == "pgd+init") {
    pgd_cfg.init_magnitudes = log_spaced_magnitudes(code.bounds(), cfg.init_count);
    pgd_cfg.init_magnitudes.push_back(start);
    return pgd_multi_init(objective, code, pgd_cfg);
  }
  if (method == "multilevel") return multilevel(objective, ml_cfg);
  if (method == "pgd+multilevel") return pgd_then_multilevel(objective, code, pgd_cfg, ml_cfg);
  throw std::invalid_argument("unknown method: " + method);
}

std::uint64_t cell_seed(std::uint64_t master, Index m, int trial) {
  return mix_seed(mix_seed(master, static_cast<std::uint64_t>(m)), static_cast<std::uint64_t>(trial));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const Signal truth = truth_signal(cfg);
  const PiecewiseConstantCode code = code_for(cfg);

  struct Cell {
    Index m;
    int trial;
  };
  std::vector<Cell> cells;
  for (Index m : cfg.m_list)
    for (int t = 0; t < cfg.trials; ++t) cells.push_back({m, t});

  // results[cell][method]
  std::vector<std::vector<ExperimentRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::optional<std::string> error;

  auto worker = [&]() {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      try {
        const Cell cell = cells[c];
        const std::uint64_t seed = cell_seed(cfg.seed, cell.m, cell.trial);
        const SampledInstance s = make_instance(truth.values(), cell.m, cfg.sigma_w, cfg.sigma_z, seed);
        const ObjectiveContext ctx(s.instance);
        const LikelihoodObjective objective(ctx);
        const double nll_truth = nll_limit(truth.values(), ctx);
        for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
          const SolverReport r = run_method(cfg.methods[k], objective, ctx, code, cfg, mix_seed(seed, k));
          ExperimentRow row;
          row.method = cfg.methods[k];
          row.m = cell.m;
          row.trial = cell.trial;
          row.seed = seed;
          row.psnr_db = psnr(truth, r.estimate.values());
          row.nll_estimate = nll_limit(r.estimate.values(), ctx);
          row.nll_truth = nll_truth;
          row.time_s = r.wall_time_s;
          row.evals = r.counts.total();
          row.per_sample_mse =
              (r.estimate.values() - truth.values()).squaredNorm() / static_cast<double>(cfg.n);
          results[c].push_back(std::move(row));
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (!error) error = e.what();
      }
    }
  };

  const int threads = std::min<int>(cfg.threads, static_cast<int>(cells.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) throw std::runtime_error("experiment failed: " + *error);

  ExperimentResult out;
  for (std::size_t k = 0; k < cfg.methods.size(); ++k)
    for (std::size_t c = 0; c < cells.size(); ++c) out.rows.push_back(results[c][k]);
  out.summary = summarize(out.rows);
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<ExperimentRow>& rows) {
  std::vector<std::pair<std::string, Index>> order;
  std::map<std::pair<std::string, Index>, std::vector<const ExperimentRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.method, r.m);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    std::vector<double> p, ne, nt, t, e;
    for (const auto* r : g) {
      p.push_back(r->psnr_db);
      ne.push_back(r->nll_estimate);
      nt.push_back(r->nll_truth);
      t.push_back(r->time_s);
      e.push_back(static_cast<double>(r->evals));
    }
    SummaryRow s;
    s.method = key.first;
    s.m = key.second;
    s.trials = static_cast<int>(g.size());
    s.psnr_mean = mean_of(p);
    s.psnr_std = std::isfinite(s.psnr_mean) ? std_of(p, s.psnr_mean) : 0.0;
    const double half = kZ90 * s.psnr_std / std::sqrt(static_cast<double>(s.trials));
    s.psnr_ci_low = s.psnr_mean - half;
    s.psnr_ci_high = s.psnr_mean + half;
    s.nll_estimate_mean = mean_of(ne);
    s.nll_truth_mean = mean_of(nt);
    s.time_mean = mean_of(t);
    s.time_std = std_of(t, s.time_mean);
    s.evals_mean = mean_of(e);
    s.evals_std = std_of(e, s.evals_mean);
    out.push_back(s);
  }
  return out;
}

void write_rows_csv(std::ostream& os, const std::vector<ExperimentRow>& rows) {
  os << kRowsHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.m << ',' << r.trial << ',' << r.seed << ',' << format_double(r.psnr_db) << ','
       << format_double(r.nll_estimate) << ',' << format_double(r.nll_truth) << ',' << format_double(r.time_s)
       << ',' << r.evals << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& summary) {
  os << "method,m,trials,psnr_mean,psnr_std,psnr_ci_low,psnr_ci_high,nll_estimate_mean,nll_truth_mean,"
        "time_mean,time_std,evals_mean,evals_std\n";
  for (const auto& s : summary) {
    os << s.method << ',' << s.m << ',' << s.trials << ',' << format_double(s.psnr_mean) << ','
       << format_double(s.psnr_std) << ',' << format_double(s.psnr_ci_low) << ','
       << format_double(s.psnr_ci_high) << ',' << format_double(s.nll_estimate_mean) << ','
       << format_double(s.nll_truth_mean) << ',' << format_double(s.time_mean) << ','
       << format_double(s.time_std) << ',' << format_double(s.evals_mean) << ','
       << format_double(s.evals_std) << '\n';
  }
}

void write_plot_script(std::ostream& os) {
  os << R"PY(#!/usr/bin/env python3
"""Render PSNR and NLL against m from summary.csv (run from the output directory)."""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "summary.csv"
series = defaultdict(list)
truth = {}
with open(path) as f:
    for row in csv.DictReader(f):
        m = int(row["m"])
        series[row["method"]].append(
            (m, float(row["psnr_mean"]), float(row["psnr_ci_low"]), float(row["psnr_ci_high"]),
             float(row["nll_estimate_mean"])))
        truth[m] = float(row["nll_truth_mean"])

fig, (ax_psnr, ax_nll) = plt.subplots(1, 2, figsize=(11, 4))
for method, pts in series.items():
    pts.sort()
    ms = [p[0] for p in pts]
    mean = [p[1] for p in pts]
    err = [[p[1] - p[2] for p in pts], [p[3] - p[1] for p in pts]]
    ax_psnr.errorbar(ms, mean, yerr=err, capsize=3, marker="o", label=method)
    ax_nll.plot(ms, [p[4] for p in pts], marker="o", label=method)
ms = sorted(truth)
ax_nll.plot(ms, [truth[m] for m in ms], "k--", marker="x", label="data")
ax_psnr.set_xlabel("m")
ax_psnr.set_ylabel("PSNR (dB)")
ax_psnr.set_title("Reconstruction PSNR (90% CI)")
ax_nll.set_xlabel("m")
ax_nll.set_ylabel("negative log-likelihood")
ax_nll.set_title("NLL of estimates vs truth")
ax_psnr.legend()
ax_nll.legend()
fig.tight_layout()
fig.savefig("summary.png", dpi=150)
)PY";
}

void emit_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  if (result.rows.empty()) throw std::invalid_argument("no rows to write");
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("rows.csv");
    write_rows_csv(f, result.rows);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, result.summary);
  }
  {
    auto f = open("plot.py");
    write_plot_script(f);
  }
}

}  // namespace speckle
