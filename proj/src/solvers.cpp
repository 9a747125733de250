#include "speckle/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace speckle {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Vector project(const Vector& u, const PiecewiseConstantCode& code, ProjectionMode mode) {
  return mode == ProjectionMode::kExact ? project_viterbi(u, code).values()
                                        : project_approx(u, code).values();
}

void validate(const PgdConfig& cfg) {
  if (cfg.init_magnitudes.empty()) throw std::invalid_argument("pgd needs at least one start magnitude");
  if (!(cfg.initial_step > 0.0)) throw std::invalid_argument("initial step must be positive");
  if (!(cfg.backtracking > 0.0 && cfg.backtracking < 1.0))
    throw std::invalid_argument("backtracking factor must lie in (0,1)");
  if (cfg.tolerance < 0.0) throw std::invalid_argument("tolerance must be nonnegative");
  if (cfg.max_iters < 0 || cfg.max_halvings < 0) throw std::invalid_argument("negative iteration cap");
}

}  // namespace

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kNoDescent: return "no-descent";
    case Termination::kMaxIterations: return "max-iterations";
    case Termination::kBudget: return "budget";
    case Termination::kExhausted: return "exhausted";
  }
  return "unknown";
}

std::string to_record(const SolverReport& r) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "method=" << r.method << " objective=" << r.objective
     << " likelihood_evals=" << r.counts.likelihood << " gradient_evals=" << r.counts.gradient
     << " evals=" << r.counts.total() << " time_s=" << r.wall_time_s
     << " termination=" << to_string(r.termination) << " steps=" << r.trace.size()
     << " failed_starts=" << r.failed_starts << " estimate=";
  const Vector& x = r.estimate.values();
  for (Index i = 0; i < x.size(); ++i) os << (i ? "," : "") << x(i);
  return os.str();
}

std::vector<double> log_spaced_magnitudes(Bounds bounds, int count) {
  if (count < 1) throw std::invalid_argument("need at least one magnitude");
  if (count == 1) return {std::sqrt(bounds.lower * bounds.upper)};
  std::vector<double> out(count);
  const double ratio = std::log(bounds.upper / bounds.lower);
  for (int i = 0; i < count; ++i)
    out[i] = bounds.lower * std::exp(ratio * static_cast<double>(i) / static_cast<double>(count - 1));
  out.back() = bounds.upper;
  return out;
}

double default_start_magnitude(const ObjectiveContext& ctx, Bounds bounds) {
  return std::clamp(constant_ml_magnitude(ctx), bounds.lower, bounds.upper);
}

SolverReport pgd(const Objective& objective, const PiecewiseConstantCode& code, const PgdConfig& cfg) {
  validate(cfg);
  const auto t0 = Clock::now();
  const Bounds& bounds = code.bounds();
  const Index n = objective.dimension();
  if (n != code.length()) throw DimensionError("code length does not match objective");

  Vector x = Vector::Constant(n, std::clamp(cfg.init_magnitudes.front(), bounds.lower, bounds.upper));
  SolverReport report{"pgd", Signal(x, bounds)};

  EvaluationCounts counts;
  double f = 0.0;
  Vector grad;
  ++counts.gradient;
  try {
    ValueAndGradient vg = objective.value_and_gradient(x);
    f = vg.value;
    grad = std::move(vg.gradient);
  } catch (const SingularObjective&) {
    report.objective = std::numeric_limits<double>::infinity();
    report.counts = counts;
    report.termination = Termination::kNoDescent;
    report.wall_time_s = seconds_since(t0);
    return report;
  }
  report.trace.push_back(f);

  Termination term = Termination::kMaxIterations;
  bool need_gradient = false;
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (need_gradient) {
      ++counts.gradient;
      grad = objective.value_and_gradient(x).gradient;
      need_gradient = false;
    }
    double mu = cfg.initial_step;
    bool accepted = false;
    Vector candidate;
    double f_candidate = 0.0;
    for (int h = 0; h <= cfg.max_halvings; ++h, mu *= cfg.backtracking) {
      candidate = project(x - mu * grad, code, cfg.projection);
      if (candidate == x) continue;
      ++counts.likelihood;
      try {
        f_candidate = objective.value(candidate);
      } catch (const SingularObjective&) {
        continue;
      }
      if (f_candidate < f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      term = Termination::kNoDescent;
      break;
    }
    const double decrease = f - f_candidate;
    x = std::move(candidate);
    f = f_candidate;
    need_gradient = true;
    report.trace.push_back(f);
    if (decrease < cfg.tolerance * std::max(1.0, std::abs(f))) {
      term = Termination::kConverged;
      break;
    }
  }

  report.estimate = Signal(x, bounds);
  report.objective = f;
  report.counts = counts;
  report.termination = term;
  report.wall_time_s = seconds_since(t0);
  return report;
}

SolverReport pgd_multi_init(const Objective& objective, const PiecewiseConstantCode& code,
                            const PgdConfig& cfg) {
  validate(cfg);
  const auto t0 = Clock::now();
  std::optional<SolverReport> best;
  EvaluationCounts counts;
  int failed = 0;
  for (double c : cfg.init_magnitudes) {
    PgdConfig single = cfg;
    single.init_magnitudes = {c};
    try {
      SolverReport r = pgd(objective, code, single);
      counts += r.counts;
      if (!std::isfinite(r.objective)) {
        ++failed;
        continue;
      }
      if (!best || r.objective < best->objective) best = std::move(r);
    } catch (const std::exception&) {
      ++failed;
    }
  }
  if (!best) throw std::runtime_error("every pgd start failed");
  best->method = "pgd+init";
  best->counts = counts;
  best->failed_starts = failed;
  best->wall_time_s = seconds_since(t0);
  return std::move(*best);
}

Vector expand_segments(const std::vector<double>& theta, const std::vector<Index>& breaks) {
  Vector x(breaks.back());
  for (std::size_t l = 0; l + 1 < breaks.size(); ++l)
    x.segment(breaks[l], breaks[l + 1] - breaks[l]).setConstant(theta[l]);
  return x;
}

InnerResult inner_continuous(const Objective& objective, const std::vector<Index>& breaks, Bounds bounds,
                             const std::vector<double>& start, double tolerance, int max_iters) {
  if (breaks.size() < 2 || breaks.front() != 0 || breaks.back() != objective.dimension())
    throw std::invalid_argument("breaks must run from 0 to n");
  for (std::size_t l = 1; l < breaks.size(); ++l)
    if (breaks[l] <= breaks[l - 1]) throw std::invalid_argument("breaks must be strictly increasing");
  const Index k = static_cast<Index>(breaks.size()) - 1;
  if (static_cast<Index>(start.size()) != k) throw std::invalid_argument("start has wrong length");

  const std::unique_ptr<SegmentedObjective> seg = objective.restrict_to(breaks);
  using Vk = Eigen::VectorXd;
  auto clamp_box = [&](const Vk& v) {
    return Vk(v.cwiseMax(bounds.lower).cwiseMin(bounds.upper));
  };
  auto to_std = [](const Vk& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  InnerResult res;
  auto evaluate = [&](const Vk& theta, double& f, Vk& g) {
    ++res.counts.gradient;
    try {
      ValueAndGradient vg = seg->value_and_gradient(theta);
      f = vg.value;
      g = std::move(vg.gradient);
      return std::isfinite(f);
    } catch (const SingularObjective&) {
      return false;
    }
  };

  Vk theta = clamp_box(Eigen::Map<const Vk>(start.data(), k));
  double f = 0.0;
  Vk g;
  if (!evaluate(theta, f, g)) {
    res.theta = to_std(theta);
    res.value = kBarrierValue;
    return res;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(k, k) / std::max(1.0, g.lpNorm<Eigen::Infinity>());
  bool scaled = false;
  for (int it = 0; it < max_iters; ++it) {
    const Vk pg = theta - clamp_box(theta - g);
    if (pg.lpNorm<Eigen::Infinity>() <= tolerance * std::max(1.0, theta.lpNorm<Eigen::Infinity>())) break;

    std::vector<Index> free;
    for (Index l = 0; l < k; ++l) {
      const bool at_lower = theta(l) <= bounds.lower && g(l) > 0.0;
      const bool at_upper = theta(l) >= bounds.upper && g(l) < 0.0;
      if (!at_lower && !at_upper) free.push_back(l);
    }
    if (free.empty()) break;

    Vk dir = Vk::Zero(k);
    for (Index a : free)
      for (Index b : free) dir(a) -= H(a, b) * g(b);
    if (g.dot(dir) >= 0.0) {
      H = Eigen::MatrixXd::Identity(k, k) / std::max(1.0, g.lpNorm<Eigen::Infinity>());
      scaled = false;
      dir.setZero();
      for (Index a : free) dir(a) = -H(a, a) * g(a);
    }

    double step = 1.0;
    bool accepted = false;
    Vk theta_new, g_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      theta_new = clamp_box(theta + step * dir);
      if (theta_new == theta) break;
      if (evaluate(theta_new, f_new, g_new) && f_new <= f + 1e-4 * g.dot(theta_new - theta)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++res.iterations;

    const Vk s = theta_new - theta;
    const Vk yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        H = Eigen::MatrixXd::Identity(k, k) * (sy / yv.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(k, k) - rho * yv * s.transpose();
      H = V.transpose() * H * V + rho * s * s.transpose();
    }
    const double decrease = f - f_new;
    theta = theta_new;
    f = f_new;
    g = g_new;
    if (decrease <= tolerance * std::max(1.0, std::abs(f))) break;
  }
  res.theta = to_std(theta);
  res.value = f;
  return res;
}

namespace {

// Interior breaks b_1 < ... < b_q, each b_l restricted to [lo[l], hi[l]].
struct BreakSpace {
  Index n;
  std::vector<Index> lo, hi;

  std::size_t count() const { return lo.size(); }

  bool valid(const std::vector<Index>& b) const {
    for (std::size_t l = 0; l < b.size(); ++l) {
      if (b[l] < lo[l] || b[l] > hi[l]) return false;
      if (l > 0 && b[l] <= b[l - 1]) return false;
    }
    return true;
  }

  // Number of valid vectors, saturating at `cap`.
  double size(double cap) const {
    if (lo.empty()) return 1.0;
    // ways[p]: number of valid prefixes ending with the current break at p.
    std::vector<double> ways(n + 1, 0.0);
    for (Index p = lo[0]; p <= hi[0]; ++p) ways[p] = 1.0;
    for (std::size_t l = 1; l < lo.size(); ++l) {
      std::vector<double> next(n + 1, 0.0);
      double running = 0.0;
      for (Index p = 1; p <= n; ++p) {
        running = std::min(cap, running + ways[p - 1]);
        if (p >= lo[l] && p <= hi[l]) next[p] = running;
      }
      ways.swap(next);
    }
    double total = 0.0;
    for (double w : ways) total = std::min(cap, total + w);
    return total;
  }

  void enumerate(const std::function<bool(const std::vector<Index>&)>& visit) const {
    std::vector<Index> cur(lo.size());
    std::function<bool(std::size_t)> rec = [&](std::size_t l) {
      if (l == lo.size()) return visit(cur);
      const Index start = l == 0 ? lo[0] : std::max(lo[l], cur[l - 1] + 1);
      for (Index p = start; p <= hi[l]; ++p) {
        cur[l] = p;
        if (!rec(l + 1)) return false;
      }
      return true;
    };
    rec(0);
  }

  std::optional<std::vector<Index>> sample(Rng& rng) const {
    std::vector<Index> b(lo.size());
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (std::size_t l = 0; l < lo.size(); ++l)
        b[l] = std::uniform_int_distribution<Index>(lo[l], hi[l])(rng);
      std::sort(b.begin(), b.end());
      if (valid(b)) return b;
    }
    return std::nullopt;
  }
};

std::vector<Index> full_breaks(const std::vector<Index>& interior, Index n) {
  std::vector<Index> d{0};
  d.insert(d.end(), interior.begin(), interior.end());
  d.push_back(n);
  return d;
}

SolverReport search_breaks(const Objective& objective, const MultilevelConfig& cfg,
                           const BreakSpace& space, const std::vector<Index>* centers,
                           Clock::time_point t0) {
  const Index n = objective.dimension();
  const Index k = cfg.pieces;
  const double start_mag =
      cfg.start_magnitude > 0.0 ? cfg.start_magnitude : std::sqrt(cfg.bounds.lower * cfg.bounds.upper);
  const std::vector<double> start(k, start_mag);
  Rng rng = derive_stream(cfg.seed, 0x6d6c);

  EvaluationCounts counts;
  int solves = 0;
  std::map<std::vector<Index>, double> seen;
  std::vector<Index> best_b;
  std::vector<double> best_theta;
  double best_h = std::numeric_limits<double>::infinity();
  std::vector<double> trace;

  // Returns true when the proposal improved on the incumbent.
  auto evaluate = [&](const std::vector<Index>& b) {
    if (solves >= cfg.budget || seen.count(b)) return false;
    InnerResult r = inner_continuous(objective, full_breaks(b, n), cfg.bounds, start,
                                     cfg.inner_tolerance, cfg.inner_max_iters);
    ++solves;
    counts += r.counts;
    seen.emplace(b, r.value);
    if (r.value < best_h) {
      best_h = r.value;
      best_b = b;
      best_theta = std::move(r.theta);
      trace.push_back(best_h);
      return true;
    }
    return false;
  };

  Termination term = Termination::kBudget;
  const double total = space.size(static_cast<double>(cfg.budget) + 1.0);
  if (total <= static_cast<double>(cfg.budget)) {
    space.enumerate([&](const std::vector<Index>& b) {
      evaluate(b);
      return true;
    });
    term = Termination::kExhausted;
  } else {
    if (centers && space.valid(*centers)) evaluate(*centers);
    const int random_phase = cfg.radius > 0 ? std::max(1, cfg.budget / 4) : cfg.budget;
    int misses = 0;
    while (solves < random_phase && misses < 1000) {
      auto b = space.sample(rng);
      if (!b || seen.count(*b)) {
        ++misses;
        continue;
      }
      evaluate(*b);
    }
    misses = 0;
    const std::size_t q = space.count();
    while (solves < cfg.budget && cfg.radius > 0 && q > 0 && !best_b.empty()) {
      std::vector<Index> b = best_b;
      const std::size_t l = std::uniform_int_distribution<std::size_t>(0, q - 1)(rng);
      Index shift = std::uniform_int_distribution<Index>(1, cfg.radius)(rng);
      if (std::uniform_int_distribution<int>(0, 1)(rng)) shift = -shift;
      b[l] += shift;
      if (!space.valid(b) || seen.count(b)) {
        if (++misses > 20 * cfg.budget + 1000) {
          term = Termination::kExhausted;
          break;
        }
        continue;
      }
      misses = 0;
      evaluate(b);
    }
  }

  if (best_b.empty() && space.count() > 0) throw std::runtime_error("multilevel search found no valid breaks");
  SolverReport report{"multilevel", Signal(expand_segments(best_theta, full_breaks(best_b, n)), cfg.bounds)};
  report.objective = best_h;
  report.trace = std::move(trace);
  report.counts = counts;
  report.termination = term;
  report.wall_time_s = seconds_since(t0);
  return report;
}

void validate(const MultilevelConfig& cfg, Index n) {
  if (cfg.pieces < 1 || cfg.pieces > n) throw std::invalid_argument("piece count must lie in [1, n]");
  if (cfg.budget < 1) throw std::invalid_argument("budget must be positive");
  if (cfg.radius < 0) throw std::invalid_argument("radius must be nonnegative");
  if (!(cfg.bounds.lower > 0.0) || !(cfg.bounds.upper >= cfg.bounds.lower))
    throw std::invalid_argument("multilevel bounds must satisfy 0 < lower <= upper");
}

}  // namespace

SolverReport multilevel(const Objective& objective, const MultilevelConfig& cfg) {
  const auto t0 = Clock::now();
  const Index n = objective.dimension();
  validate(cfg, n);
  const std::size_t q = static_cast<std::size_t>(cfg.pieces - 1);
  // Break l (0-based) leaves room for l pieces before and q-1-l after it.
  BreakSpace space{n, std::vector<Index>(q), std::vector<Index>(q)};
  for (std::size_t l = 0; l < q; ++l) {
    space.lo[l] = static_cast<Index>(l) + 1;
    space.hi[l] = n - static_cast<Index>(q - l);
  }
  return search_breaks(objective, cfg, space, nullptr, t0);
}

SolverReport pgd_then_multilevel(const Objective& objective, const PiecewiseConstantCode& code,
                                 const PgdConfig& pgd_cfg, const MultilevelConfig& ml_cfg) {
  const auto t0 = Clock::now();
  const Index n = objective.dimension();
  validate(ml_cfg, n);
  const SolverReport first = pgd(objective, code, pgd_cfg);
  const std::size_t q = static_cast<std::size_t>(ml_cfg.pieces - 1);

  // Breaks of the pgd estimate, strongest jumps first when there are too many.
  std::vector<double> values;
  std::vector<Index> starts = segments_of(first.estimate.values(), &values);
  std::vector<std::pair<double, Index>> jumps;
  for (std::size_t s = 1; s + 1 < starts.size(); ++s)
    jumps.emplace_back(-std::abs(values[s] - values[s - 1]), starts[s]);
  std::stable_sort(jumps.begin(), jumps.end());
  std::vector<Index> centers;
  for (std::size_t i = 0; i < jumps.size() && centers.size() < q; ++i) centers.push_back(jumps[i].second);

  Rng rng = derive_stream(ml_cfg.seed, 0x7067);
  while (centers.size() < q) {
    const Index p = std::uniform_int_distribution<Index>(1, n - 1)(rng);
    if (std::find(centers.begin(), centers.end(), p) == centers.end()) centers.push_back(p);
  }
  std::sort(centers.begin(), centers.end());

  BreakSpace space{n, std::vector<Index>(q), std::vector<Index>(q)};
  for (std::size_t l = 0; l < q; ++l) {
    space.lo[l] = std::max<Index>(1, centers[l] - ml_cfg.radius);
    space.hi[l] = std::min<Index>(n - 1, centers[l] + ml_cfg.radius);
  }
  SolverReport report = search_breaks(objective, ml_cfg, space, &centers, t0);
  report.method = "pgd+multilevel";
  report.counts += first.counts;
  report.wall_time_s = seconds_since(t0);
  return report;
}

}  // namespace speckle
