#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "speckle/compression.hpp"
#include "speckle/likelihood.hpp"

namespace speckle {

enum class ProjectionMode { kExact, kApproximate };

struct PgdConfig {
  int max_iters = 500;
  double initial_step = 1.0;
  double backtracking = 0.5;
  int max_halvings = 30;
  /// Stop once an accepted step lowers the objective by less than
  /// tolerance * max(1, |f|).
  double tolerance = 1e-10;
  /// Starting magnitudes c for x0 = c 1_n. pgd() uses the first entry;
  /// pgd_multi_init() runs them all.
  std::vector<double> init_magnitudes{1.0};
  ProjectionMode projection = ProjectionMode::kExact;
};

struct MultilevelConfig {
  Index pieces = 1;
  /// Maximum number of inner continuous solves.
  int budget = 400;
  /// Break moves shift one break by at most this many samples. For
  /// pgd_then_multilevel it is also the half-width of the search window.
  Index radius = 32;
  double inner_tolerance = 1e-9;
  int inner_max_iters = 100;
  std::uint64_t seed = 0;
  Bounds bounds{0.25, 2.5};
  /// Constant start for every inner solve; <= 0 means sqrt(lower * upper).
  double start_magnitude = 0.0;
};

enum class Termination { kConverged, kNoDescent, kMaxIterations, kBudget, kExhausted };
std::string to_string(Termination t);

struct EvaluationCounts {
  std::uint64_t likelihood = 0;
  std::uint64_t gradient = 0;

  std::uint64_t total() const { return likelihood + gradient; }
  EvaluationCounts& operator+=(const EvaluationCounts& o) {
    likelihood += o.likelihood;
    gradient += o.gradient;
    return *this;
  }
};

struct SolverReport {
  SolverReport(std::string method_name, Signal initial)
      : method(std::move(method_name)), estimate(std::move(initial)) {}

  std::string method;
  Signal estimate;
  double objective = 0.0;
  /// Objective after each accepted step (PGD) or each improvement (multilevel).
  std::vector<double> trace;
  EvaluationCounts counts;
  double wall_time_s = 0.0;
  Termination termination = Termination::kConverged;
  /// Failed starts of pgd_multi_init, if any.
  int failed_starts = 0;
};

/// One-line "key=value" record for the harness and the CLI.
std::string to_record(const SolverReport& report);

/// Projected gradient descent with backtracking line search:
/// x_t = proj(x_{t-1} - mu g_t), mu halved from initial_step until the
/// objective strictly drops.
SolverReport pgd(const Objective& objective, const PiecewiseConstantCode& code, const PgdConfig& cfg);

/// Runs pgd from every magnitude in cfg.init_magnitudes and keeps the lowest
/// objective. Counts and time are summed over all starts.
SolverReport pgd_multi_init(const Objective& objective, const PiecewiseConstantCode& code,
                            const PgdConfig& cfg);

/// Log-spaced magnitudes covering [lower, upper].
std::vector<double> log_spaced_magnitudes(Bounds bounds, int count);

/// Constant ML fit clamped into the bounds; the usual single start.
double default_start_magnitude(const ObjectiveContext& ctx, Bounds bounds);

struct InnerResult {
  std::vector<double> theta;
  double value = 0.0;
  EvaluationCounts counts;
  int iterations = 0;
};

/// x(theta, breaks): theta_l repeated over [breaks[l], breaks[l+1]).
Vector expand_segments(const std::vector<double>& theta, const std::vector<Index>& breaks);

/// h(d) = min_theta f(x(theta, d)) over theta in the box, by projected BFGS
/// with an Armijo search along the projected path, started from `start`.
/// Evaluations go through objective.restrict_to(breaks).
InnerResult inner_continuous(const Objective& objective, const std::vector<Index>& breaks, Bounds bounds,
                             const std::vector<double>& start, double tolerance, int max_iters);

/// Barrier returned by inner solves that cannot evaluate the objective.
inline constexpr double kBarrierValue = 1e300;

/// Gradient-free search over break vectors with inner_continuous as oracle:
/// uniform proposals, then single-break shifts of at most `radius`, keeping
/// strict improvements. When the search space fits in the budget it is
/// swept exhaustively.
SolverReport multilevel(const Objective& objective, const MultilevelConfig& cfg);

/// pgd first, then multilevel restricted to +-radius windows around the
/// breaks of the pgd estimate (missing breaks seeded uniformly).
SolverReport pgd_then_multilevel(const Objective& objective, const PiecewiseConstantCode& code,
                                 const PgdConfig& pgd_cfg, const MultilevelConfig& ml_cfg);

}  // namespace speckle
