#include "speckle/likelihood.hpp"

#include <cmath>
#include <string>

namespace speckle {

namespace {

struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double log_det = 0.0;
};

// LLT reads only the lower triangle, so callers may leave the upper one stale.
SpdFactor factor_spd(const Matrix& B) {
  SpdFactor f;
  f.llt.compute(B);
  if (f.llt.info() != Eigen::Success) throw SingularObjective("B is not positive definite");
  const Vector diag = f.llt.matrixLLT().diagonal();
  const Vector pivots = diag.array().square();
  const double max_pivot = pivots.maxCoeff();
  if (!(pivots.minCoeff() > kPivotTolerance * max_pivot) || !std::isfinite(max_pivot))
    throw SingularObjective("B is numerically singular");
  f.log_det = 2.0 * diag.array().log().sum();
  return f;
}

// Lower triangle of A diag(x)^2 A^T.
Matrix weighted_gram(const Matrix& A, const Vector& x) {
  const Matrix K = A * x.asDiagonal();
  Matrix B = Matrix::Zero(A.rows(), A.rows());
  B.selfadjointView<Eigen::Lower>().rankUpdate(K);
  return B;
}

void check_dims(const Vector& x, const ObjectiveContext& ctx) {
  if (x.size() != ctx.cols())
    throw DimensionError("x has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(ctx.cols()));
}

}  // namespace

ObjectiveContext::ObjectiveContext(Matrix A, Vector y, double sigma_w)
    : A_(std::move(A)), y_(std::move(y)), sigma_w_(sigma_w) {
  if (A_.rows() != y_.size()) throw DimensionError("A and y disagree on m");
  if (!(sigma_w_ > 0.0)) throw std::invalid_argument("sigma_w must be positive");
}

double nll_limit(const Vector& x, const ObjectiveContext& ctx) {
  check_dims(x, ctx);
  const SpdFactor f = factor_spd(weighted_gram(ctx.A(), x));
  const Vector v = f.llt.matrixL().solve(ctx.y());
  return f.log_det + v.squaredNorm() / (ctx.sigma_w() * ctx.sigma_w());
}

ValueAndGradient nll_limit_with_gradient(const Vector& x, const ObjectiveContext& ctx) {
  check_dims(x, ctx);
  const SpdFactor f = factor_spd(weighted_gram(ctx.A(), x));
  const auto L = f.llt.matrixL();
  const Vector v = L.solve(ctx.y());
  const Matrix V = L.solve(ctx.A());  // column i is L^{-1} a_i
  const double inv_var = 1.0 / (ctx.sigma_w() * ctx.sigma_w());

  ValueAndGradient out;
  out.value = f.log_det + v.squaredNorm() * inv_var;
  const Vector leverage = V.colwise().squaredNorm().transpose();  // a_i^T B^{-1} a_i
  const Vector proj = V.transpose() * v;                          // a_i^T B^{-1} y
  out.gradient = 2.0 * x.array() * (leverage.array() - inv_var * proj.array().square());
  return out;
}

Vector nll_gradient(const Vector& x, const ObjectiveContext& ctx) {
  return nll_limit_with_gradient(x, ctx).gradient;
}

double nll_finite_sigma_z(const Vector& x, const ObjectiveContext& ctx, double sigma_z) {
  check_dims(x, ctx);
  if (!(sigma_z > 0.0)) throw std::invalid_argument("sigma_z must be positive");
  const double sw2 = ctx.sigma_w() * ctx.sigma_w();
  const double sz2 = sigma_z * sigma_z;
  Matrix B = weighted_gram(ctx.A(), x);

  Matrix shifted = B;
  shifted.diagonal().array() += sz2 / sw2;
  const SpdFactor logdet_part = factor_spd(shifted);

  Matrix cov = sw2 * B;
  cov.diagonal().array() += sz2;
  const SpdFactor quad_part = factor_spd(cov);
  const Vector v = quad_part.llt.matrixL().solve(ctx.y());
  return logdet_part.log_det + v.squaredNorm();
}

Vector overdetermined_backprojection(const Matrix& A, const Vector& y) {
  if (A.rows() != y.size()) throw DimensionError("A and y disagree on m");
  if (A.rows() < A.cols()) throw DimensionError("overdetermined reduction needs m >= n");
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  if (qr.rank() < A.cols()) throw std::domain_error("A^T A is not invertible");
  return qr.solve(y);
}

double nll_overdetermined(const Vector& x, const Matrix& A, const Vector& y, double sigma_w) {
  if (x.size() != A.cols()) throw DimensionError("x and A disagree on n");
  if (!(sigma_w > 0.0)) throw std::invalid_argument("sigma_w must be positive");
  if ((x.array() == 0.0).any()) throw std::domain_error("x has a zero entry");
  const Vector b = overdetermined_backprojection(A, y);
  const Eigen::ArrayXd x2 = x.array().square();
  return (0.5 * x2.log() + b.array().square() / (2.0 * sigma_w * sigma_w * x2)).sum();
}

Vector denoise_ml(const Vector& y) { return y.cwiseAbs(); }

double denoise_constant_ml(const Vector& y) {
  if (y.size() < 1) throw std::invalid_argument("empty measurement");
  return std::sqrt(y.squaredNorm() / static_cast<double>(y.size()));
}

double constant_ml_magnitude(const ObjectiveContext& ctx) {
  const SpdFactor f = factor_spd(weighted_gram(ctx.A(), Vector::Ones(ctx.cols())));
  const Vector v = f.llt.matrixL().solve(ctx.y());
  return std::sqrt(v.squaredNorm() / (static_cast<double>(ctx.rows()) * ctx.sigma_w() * ctx.sigma_w()));
}

std::unique_ptr<SegmentedObjective> Objective::restrict_to(const std::vector<Index>& breaks) const {
  return std::make_unique<ExpandedSegments>(*this, breaks);
}

ValueAndGradient ExpandedSegments::value_and_gradient(const Vector& theta) const {
  const Index k = static_cast<Index>(breaks_.size()) - 1;
  if (theta.size() != k) throw DimensionError("theta length does not match segment count");
  Vector x(breaks_.back());
  for (Index l = 0; l < k; ++l) x.segment(breaks_[l], breaks_[l + 1] - breaks_[l]).setConstant(theta(l));
  ValueAndGradient vg = objective_.value_and_gradient(x);
  Vector g(k);
  for (Index l = 0; l < k; ++l) g(l) = vg.gradient.segment(breaks_[l], breaks_[l + 1] - breaks_[l]).sum();
  vg.gradient = std::move(g);
  return vg;
}

SegmentGramObjective::SegmentGramObjective(const ObjectiveContext& ctx, const std::vector<Index>& breaks)
    : ctx_(ctx) {
  if (breaks.size() < 2 || breaks.front() != 0 || breaks.back() != ctx.cols())
    throw DimensionError("breaks must run from 0 to n");
  const Index m = ctx.rows();
  for (std::size_t l = 0; l + 1 < breaks.size(); ++l) {
    if (breaks[l + 1] <= breaks[l]) throw std::invalid_argument("breaks must be strictly increasing");
    Matrix G = Matrix::Zero(m, m);
    G.selfadjointView<Eigen::Lower>().rankUpdate(ctx.A().middleCols(breaks[l], breaks[l + 1] - breaks[l]));
    grams_.push_back(G.selfadjointView<Eigen::Lower>());
  }
}

ValueAndGradient SegmentGramObjective::value_and_gradient(const Vector& theta) const {
  const Index k = static_cast<Index>(grams_.size());
  if (theta.size() != k) throw DimensionError("theta length does not match segment count");
  Matrix B = theta(0) * theta(0) * grams_[0];
  for (Index l = 1; l < k; ++l) B.noalias() += theta(l) * theta(l) * grams_[l];
  const SpdFactor f = factor_spd(B);
  const Vector v = f.llt.solve(ctx_.y());  // B^{-1} y
  const Matrix Binv = f.llt.solve(Matrix::Identity(B.rows(), B.cols()));
  const double inv_var = 1.0 / (ctx_.sigma_w() * ctx_.sigma_w());

  ValueAndGradient out;
  out.value = f.log_det + ctx_.y().dot(v) * inv_var;
  out.gradient.resize(k);
  for (Index l = 0; l < k; ++l) {
    const double trace = Binv.cwiseProduct(grams_[l]).sum();
    out.gradient(l) = 2.0 * theta(l) * (trace - inv_var * v.dot(grams_[l] * v));
  }
  return out;
}

namespace {

class CountingSegments final : public SegmentedObjective {
 public:
  CountingSegments(std::unique_ptr<SegmentedObjective> inner, std::atomic<std::uint64_t>& counter)
      : inner_(std::move(inner)), counter_(counter) {}
  ValueAndGradient value_and_gradient(const Vector& theta) const override {
    ++counter_;
    return inner_->value_and_gradient(theta);
  }

 private:
  std::unique_ptr<SegmentedObjective> inner_;
  std::atomic<std::uint64_t>& counter_;
};

}  // namespace

std::unique_ptr<SegmentedObjective> CountingObjective::restrict_to(const std::vector<Index>& breaks) const {
  return std::make_unique<CountingSegments>(inner_.restrict_to(breaks), gradients_);
}

}  // namespace speckle
