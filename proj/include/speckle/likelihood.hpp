#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "speckle/measurement.hpp"

namespace speckle {

/// B = A diag(x)^2 A^T was not numerically SPD at the evaluated point.
class SingularObjective : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relative pivot floor for the SPD factorization of B.
inline constexpr double kPivotTolerance = 1e-12;

/// Immutable data of the speckle likelihood: A, y and the speckle scale.
class ObjectiveContext {
 public:
  ObjectiveContext(Matrix A, Vector y, double sigma_w);
  explicit ObjectiveContext(const MeasurementInstance& inst)
      : ObjectiveContext(inst.A, inst.y, inst.sigma_w) {}

  const Matrix& A() const { return A_; }
  const Vector& y() const { return y_; }
  double sigma_w() const { return sigma_w_; }
  Index rows() const { return A_.rows(); }
  Index cols() const { return A_.cols(); }

 private:
  Matrix A_;
  Vector y_;
  double sigma_w_;
};

struct ValueAndGradient {
  double value = 0.0;
  Vector gradient;
};

// Objectives below drop every term that does not depend on x, so values
// from different functions are not comparable with each other.

/// log det(A X^2 A^T) + y^T (A X^2 A^T)^{-1} y / sigma_w^2, the sigma_z -> 0
/// limit for m < n. Throws SingularObjective.
double nll_limit(const Vector& x, const ObjectiveContext& ctx);

/// g_i = 2 x_i (a_i^T B^{-1} a_i - (a_i^T B^{-1} y)^2 / sigma_w^2).
Vector nll_gradient(const Vector& x, const ObjectiveContext& ctx);

ValueAndGradient nll_limit_with_gradient(const Vector& x, const ObjectiveContext& ctx);

/// -2 l(X) at finite additive noise, computed in the m x m form
///   log det(A X^2 A^T + (sz^2/sw^2) I) + y^T (sw^2 A X^2 A^T + sz^2 I)^{-1} y,
/// which equals the n x n expression up to the x-independent terms
///   -n log sw^2 + m log(sw^2 / sz^2) - ||y||^2 / sz^2.
double nll_finite_sigma_z(const Vector& x, const ObjectiveContext& ctx, double sigma_z);

/// Overdetermined (m >= n) reduction: with b = (A^T A)^{-1} A^T y,
///   sum_i ( 0.5 log x_i^2 + b_i^2 / (2 sw^2 x_i^2) ).
double nll_overdetermined(const Vector& x, const Matrix& A, const Vector& y, double sigma_w);

/// Least-squares back-projection b = (A^T A)^{-1} A^T y. Throws on rank deficiency.
Vector overdetermined_backprojection(const Matrix& A, const Vector& y);

/// Unstructured ML denoiser for y = x .* w: |y|.
Vector denoise_ml(const Vector& y);

/// ML estimate of a constant signal a 1_n from y = a w: the RMS of y.
double denoise_constant_ml(const Vector& y);

/// ML magnitude of a constant signal c 1_n under the limit objective:
/// c^2 = y^T (A A^T)^{-1} y / (m sigma_w^2).
double constant_ml_magnitude(const ObjectiveContext& ctx);

/// The objective as a function of segment values theta for fixed breaks,
/// x = x(theta, breaks). The gradient is taken with respect to theta.
class SegmentedObjective {
 public:
  virtual ~SegmentedObjective() = default;
  virtual ValueAndGradient value_and_gradient(const Vector& theta) const = 0;
};

/// Evaluation interface used by the solvers.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Index dimension() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual ValueAndGradient value_and_gradient(const Vector& x) const = 0;
  /// Restriction to piecewise-constant x. `breaks` runs from 0 to n. The
  /// default expands theta and sums the x-gradient over each segment.
  virtual std::unique_ptr<SegmentedObjective> restrict_to(const std::vector<Index>& breaks) const;
};

/// Expands theta to x and applies the chain rule through `objective`.
class ExpandedSegments final : public SegmentedObjective {
 public:
  ExpandedSegments(const Objective& objective, std::vector<Index> breaks)
      : objective_(objective), breaks_(std::move(breaks)) {}
  ValueAndGradient value_and_gradient(const Vector& theta) const override;

 private:
  const Objective& objective_;
  std::vector<Index> breaks_;
};

/// Speckle likelihood restricted to fixed breaks. Precomputes the segment
/// Gram matrices G_l = A_l A_l^T so that B = sum_l theta_l^2 G_l and
///   df/dtheta_l = 2 theta_l (tr(B^{-1} G_l) - v^T G_l v / sigma_w^2),  v = B^{-1} y.
class SegmentGramObjective final : public SegmentedObjective {
 public:
  SegmentGramObjective(const ObjectiveContext& ctx, const std::vector<Index>& breaks);
  ValueAndGradient value_and_gradient(const Vector& theta) const override;

 private:
  const ObjectiveContext& ctx_;
  std::vector<Matrix> grams_;
};

class LikelihoodObjective final : public Objective {
 public:
  explicit LikelihoodObjective(ObjectiveContext ctx) : ctx_(std::move(ctx)) {}

  Index dimension() const override { return ctx_.cols(); }
  double value(const Vector& x) const override { return nll_limit(x, ctx_); }
  ValueAndGradient value_and_gradient(const Vector& x) const override {
    return nll_limit_with_gradient(x, ctx_);
  }
  std::unique_ptr<SegmentedObjective> restrict_to(const std::vector<Index>& breaks) const override {
    return std::make_unique<SegmentGramObjective>(ctx_, breaks);
  }
  const ObjectiveContext& context() const { return ctx_; }

 private:
  ObjectiveContext ctx_;
};

/// Forwards to another objective and counts calls, including ones that throw.
class CountingObjective final : public Objective {
 public:
  explicit CountingObjective(const Objective& inner) : inner_(inner) {}

  Index dimension() const override { return inner_.dimension(); }
  double value(const Vector& x) const override {
    ++values_;
    return inner_.value(x);
  }
  ValueAndGradient value_and_gradient(const Vector& x) const override {
    ++gradients_;
    return inner_.value_and_gradient(x);
  }

  /// Each theta evaluation of the restriction counts as a gradient call.
  std::unique_ptr<SegmentedObjective> restrict_to(const std::vector<Index>& breaks) const override;

  std::uint64_t value_calls() const { return values_; }
  std::uint64_t gradient_calls() const { return gradients_; }

 private:
  const Objective& inner_;
  mutable std::atomic<std::uint64_t> values_{0};
  mutable std::atomic<std::uint64_t> gradients_{0};
};

}  // namespace speckle
