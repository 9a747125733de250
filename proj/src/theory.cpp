#include "speckle/theory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace speckle {

namespace {

void check(const BoundInputs& inp) {
  if (inp.n < 1 || inp.m < 1) throw std::invalid_argument("m and n must be positive");
  if (!(4 * inp.m < inp.n)) throw HypothesisViolation("error bound requires m < n/4");
  if (!(inp.x_min > 0.0) || !(inp.x_max >= inp.x_min))
    throw std::invalid_argument("need 0 < x_min <= x_max");
  if (!(inp.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (inp.rate < 0.0 || inp.distortion < 0.0) throw std::invalid_argument("rate and distortion must be nonnegative");
}

}  // namespace

BoundOutputs theorem3_bound(const BoundInputs& inp) {
  check(inp);
  const double m = static_cast<double>(inp.m);
  const double n = static_cast<double>(inp.n);
  const double s = std::sqrt(m / n);

  BoundOutputs out;
  const double log_gamma = 2.0 * (std::log1p(2.0 * s) - std::log1p(-2.0 * s));
  const double log_alpha = std::log(inp.x_max) - std::log(inp.x_min);
  out.gamma = std::exp(log_gamma);
  out.alpha = inp.x_max / inp.x_min;
  // log(1 + 2 alpha^2 gamma) without forming alpha^2 gamma when it is huge.
  const double log_a2g = 2.0 * log_alpha + log_gamma;
  const double log_coupling = log_a2g > 30.0 ? log_a2g + std::log(2.0) + std::log1p(0.5 * std::exp(-log_a2g))
                                             : std::log1p(2.0 * std::exp(log_a2g));
  out.log_rho1 = std::log(4.0 * std::sqrt(2.0)) + 8.0 * log_alpha + 5.0 * log_gamma + 2.0 * log_coupling +
                 2.0 * std::log1p(2.0 * s);
  out.log_rho2 = 2.0 * log_coupling + 7.0 * log_gamma + 14.0 * log_alpha;
  out.rho1 = std::exp(out.log_rho1);
  out.rho2 = std::exp(out.log_rho2);

  out.mse_bound = out.rho1 * std::sqrt((1.0 + inp.epsilon) * n * inp.rate / m) +
                  out.rho2 * inp.x_max * inp.x_max * inp.distortion;

  out.failure_terms = n * std::exp(-0.09 * m) + n * std::exp(-0.84 * m) +
                      std::exp2(-n * inp.rate * inp.epsilon + 1.0) + 2.0 * std::exp(-m / 2.0);
  out.success_probability_raw = 1.0 - out.failure_terms;
  out.success_probability = std::clamp(out.success_probability_raw, 0.0, 1.0);
  out.clamped = out.success_probability != out.success_probability_raw;
  return out;
}

BoundInputs corollary_inputs(Index k, Index n, Index m, double epsilon, double x_min, double x_max) {
  BoundInputs inp;
  inp.m = m;
  inp.n = n;
  inp.x_min = x_min;
  inp.x_max = x_max;
  inp.epsilon = epsilon;
  inp.rate = 2.0 * static_cast<double>(k) * std::log(static_cast<double>(n)) / static_cast<double>(n);
  inp.distortion = 1.0 / static_cast<double>(n);
  return inp;
}

double corollary_bound(Index k, Index n, Index m, double epsilon, double x_min, double x_max) {
  const BoundOutputs b = theorem3_bound(corollary_inputs(k, n, m, epsilon, x_min, x_max));
  const double logn = std::log(static_cast<double>(n));
  return b.rho1 * std::sqrt(2.0 * (1.0 + epsilon) * static_cast<double>(k) * logn / static_cast<double>(m)) +
         b.rho2 * x_max * x_max / static_cast<double>(n);
}

BoundCheck empirical_bound_check(std::span<const double> per_sample_mse, const BoundInputs& inp) {
  BoundCheck c;
  c.bound = theorem3_bound(inp);
  for (double e : per_sample_mse) {
    ++c.trials;
    c.worst_mse = std::max(c.worst_mse, e);
    if (!(e <= c.bound.mse_bound)) ++c.violations;
    c.max_slack_ratio = std::max(c.max_slack_ratio, e / c.bound.mse_bound);
  }
  return c;
}

void print_bound_table(std::ostream& os, const BoundInputs& inp, Index k) {
  const BoundOutputs b = theorem3_bound(inp);
  const auto old = os.precision(8);
  os << "m                     " << inp.m << '\n'
     << "n                     " << inp.n << '\n'
     << "x_min, x_max          " << inp.x_min << ", " << inp.x_max << '\n'
     << "rate (bits/sample)    " << inp.rate << '\n'
     << "distortion            " << inp.distortion << '\n'
     << "epsilon               " << inp.epsilon << '\n'
     << "gamma                 " << b.gamma << '\n'
     << "alpha                 " << b.alpha << '\n'
     << "rho1                  " << b.rho1 << "  (ln " << b.log_rho1 << ")\n"
     << "rho2                  " << b.rho2 << "  (ln " << b.log_rho2 << ")\n"
     << "mse bound             " << b.mse_bound << '\n'
     << "failure terms         " << b.failure_terms << '\n'
     << "success prob (raw)    " << b.success_probability_raw << '\n'
     << "success prob          " << b.success_probability << (b.clamped ? "  (clamped)" : "") << '\n';
  if (k >= 0)
    os << "structured bound (k=" << k << ") "
       << corollary_bound(k, inp.n, inp.m, inp.epsilon, inp.x_min, inp.x_max) << '\n';
  os.precision(old);
}

void print_bound_csv(std::ostream& os, const BoundInputs& inp, Index k) {
  const BoundOutputs b = theorem3_bound(inp);
  const auto old = os.precision(17);
  os << "m,n,x_min,x_max,rate,distortion,epsilon,gamma,alpha,rho1,rho2,mse_bound,"
        "failure_terms,success_probability_raw,success_probability,clamped,k,structured_bound\n";
  os << inp.m << ',' << inp.n << ',' << inp.x_min << ',' << inp.x_max << ',' << inp.rate << ','
     << inp.distortion << ',' << inp.epsilon << ',' << b.gamma << ',' << b.alpha << ',' << b.rho1 << ','
     << b.rho2 << ',' << b.mse_bound << ',' << b.failure_terms << ',' << b.success_probability_raw << ','
     << b.success_probability << ',' << (b.clamped ? 1 : 0) << ',' << k << ',';
  if (k >= 0) os << corollary_bound(k, inp.n, inp.m, inp.epsilon, inp.x_min, inp.x_max);
  os << '\n';
  os.precision(old);
}

}  // namespace speckle
