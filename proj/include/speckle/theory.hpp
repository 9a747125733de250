#pragma once

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "speckle/measurement.hpp"

namespace speckle {

/// Thrown when the error bound is requested outside m < n/4.
class HypothesisViolation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct BoundInputs {
  Index m = 0;
  Index n = 0;
  double x_min = 0.0;
  double x_max = 0.0;
  double rate = 0.0;        // bits per sample
  double distortion = 0.0;  // per-sample squared error of the code
  double epsilon = 0.0;
};

struct BoundOutputs {
  double gamma = 0.0;
  double alpha = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  double log_rho1 = 0.0;  // natural logs, finite even when rho overflows
  double log_rho2 = 0.0;
  double mse_bound = 0.0;
  /// n e^{-0.09m} + n e^{-0.84m} + 2^{-n r eps + 1} + 2 e^{-m/2}.
  double failure_terms = 0.0;
  /// 1 - failure_terms, possibly negative at small n.
  double success_probability_raw = 0.0;
  double success_probability = 0.0;  // clamped into [0, 1]
  bool clamped = false;
};

/// Per-sample MSE bound rho1 sqrt((1+eps) n r / m) + rho2 x_max^2 delta with
///   gamma = ((1 + 2 sqrt(m/n)) / (1 - 2 sqrt(m/n)))^2,  alpha = x_max / x_min,
///   rho1  = 4 sqrt(2) alpha^8 gamma^5 (1 + 2 alpha^2 gamma)^2 (1 + 2 sqrt(m/n))^2,
///   rho2  = (1 + 2 alpha^2 gamma)^2 gamma^7 alpha^14.
/// The rho constants are assembled in log space.
BoundOutputs theorem3_bound(const BoundInputs& inp);

/// Specialization to codes with r(delta) <= (k/n) log(1/delta) + (k/n) log n
/// at delta = 1/n:  rho1 sqrt(2 (1+eps) k log n / m) + rho2 x_max^2 / n.
double corollary_bound(Index k, Index n, Index m, double epsilon, double x_min, double x_max);

/// Inputs of theorem3_bound equivalent to corollary_bound.
BoundInputs corollary_inputs(Index k, Index n, Index m, double epsilon, double x_min, double x_max);

struct BoundCheck {
  BoundOutputs bound;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_mse = 0.0;
  /// Largest observed (1/n)||x - x_hat||^2 divided by the bound.
  double max_slack_ratio = 0.0;
  bool holds() const { return violations == 0; }
};

/// Compares per-trial squared errors against the bound. `per_sample_mse`
/// holds (1/n)||x_o - x_hat||^2 for each trial.
BoundCheck empirical_bound_check(std::span<const double> per_sample_mse, const BoundInputs& inp);

/// Plain-text table of every constant and both bound forms.
void print_bound_table(std::ostream& os, const BoundInputs& inp, Index k);
void print_bound_csv(std::ostream& os, const BoundInputs& inp, Index k);

}  // namespace speckle
