#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "speckle/likelihood.hpp"

using namespace speckle;

namespace {

// Dense reference written without the library's factorization helpers:
// explicit B, LU for both the determinant and the solve.
double reference_nll(const Vector& x, const Matrix& A, const Vector& y, double sigma_w) {
  const Index m = A.rows(), n = A.cols();
  Matrix B = Matrix::Zero(m, m);
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < m; ++c)
      for (Index i = 0; i < n; ++i) B(r, c) += A(r, i) * x(i) * x(i) * A(c, i);
  const Eigen::FullPivLU<Matrix> lu(B);
  double logdet = 0.0;
  const Matrix U = lu.matrixLU().triangularView<Eigen::Upper>();
  for (Index i = 0; i < m; ++i) logdet += std::log(std::abs(U(i, i)));
  return logdet + y.dot(lu.solve(y)) / (sigma_w * sigma_w);
}

// -2 l(X) in the n x n form, constants included.
double raw_finite_nll(const Vector& x, const Matrix& A, const Vector& y, double sw, double sz) {
  const Index n = A.cols();
  const Matrix XAtAX = x.asDiagonal() * (A.transpose() * A) * x.asDiagonal();
  const Matrix M = Matrix::Identity(n, n) / (sw * sw) + XAtAX / (sz * sz);
  const Vector u = x.asDiagonal() * (A.transpose() * y);
  const Eigen::FullPivLU<Matrix> lu(M);
  return std::log(lu.determinant()) - u.dot(lu.solve(u)) / std::pow(sz, 4);
}

struct Problem {
  Matrix A;
  Vector y;
  Vector x;
};

Problem random_problem(Index m, Index n, std::uint64_t seed, double lo = 0.5, double hi = 2.0) {
  Rng rng = derive_stream(seed, 0);
  Problem p;
  p.A = sample_matrix(m, n, rng);
  std::uniform_real_distribution<double> u(lo, hi);
  std::normal_distribution<double> g(0.0, 1.0);
  p.x.resize(n);
  for (Index i = 0; i < n; ++i) p.x(i) = u(rng);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w(i) = g(rng);
  p.y = p.A * p.x.asDiagonal() * w;
  return p;
}

}  // namespace

TEST_CASE("scalar example of the limit objective") {
  const Matrix A = (Matrix(1, 2) << 1, 1).finished();
  const ObjectiveContext ctx(A, Vector::Constant(1, 2.0), 1.0);
  CHECK(nll_limit(Vector::Ones(2), ctx) == doctest::Approx(std::log(2.0) + 2.0).epsilon(1e-14));
}

TEST_CASE("scalar example of the gradient") {
  const Matrix A = (Matrix(1, 2) << 1, 1).finished();
  const ObjectiveContext ctx(A, Vector::Zero(1), 1.0);
  const Vector g = nll_gradient(Vector::Ones(2), ctx);
  CHECK(g(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g(1) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (double sigma_w : {1.0, 0.6}) {
      const Problem p = random_problem(20, 50, seed);
      const ObjectiveContext ctx(p.A, p.y, sigma_w);
      const Vector g = nll_gradient(p.x, ctx);
      const Vector fd = oracle::central_differences([&](const Vector& v) { return nll_limit(v, ctx); }, p.x, 1e-5);
      for (Index i = 0; i < g.size(); ++i)
        CHECK(std::abs(g(i) - fd(i)) <= 1e-5 * std::max(std::abs(g(i)), 1.0));
    }
  }
}

TEST_CASE("value_and_gradient agrees with the separate calls") {
  const Problem p = random_problem(8, 15, 3);
  const ObjectiveContext ctx(p.A, p.y, 1.2);
  const ValueAndGradient vg = nll_limit_with_gradient(p.x, ctx);
  CHECK(vg.value == nll_limit(p.x, ctx));
  CHECK((vg.gradient - nll_gradient(p.x, ctx)).norm() == 0.0);
}

TEST_CASE("sign flips leave the value unchanged and flip the gradient") {
  const Problem p = random_problem(10, 25, 4);
  const ObjectiveContext ctx(p.A, p.y, 1.0);
  Rng rng = derive_stream(4, 9);
  std::bernoulli_distribution coin(0.5);
  const double f = nll_limit(p.x, ctx);
  const Vector g = nll_gradient(p.x, ctx);
  for (int t = 0; t < 10; ++t) {
    Vector s(p.x.size());
    for (Index i = 0; i < s.size(); ++i) s(i) = coin(rng) ? -1.0 : 1.0;
    const Vector xs = s.cwiseProduct(p.x);
    CHECK(nll_limit(xs, ctx) == doctest::Approx(f).epsilon(1e-12));
    CHECK((nll_gradient(xs, ctx) - s.cwiseProduct(g)).norm() <= 1e-10 * g.norm());
  }
  CHECK((nll_gradient(-p.x, ctx) + g).norm() <= 1e-10 * g.norm());
}

TEST_CASE("limit objective agrees with an independent dense evaluation") {
  Rng dims = derive_stream(77, 0);
  std::uniform_int_distribution<Index> mdist(1, 30);
  for (int t = 0; t < 100; ++t) {
    const Index m = mdist(dims);
    const Index n = std::uniform_int_distribution<Index>(m + 1, 60)(dims);
    const double sw = 0.5 + 0.01 * t;
    const Problem p = random_problem(m, n, 1000 + t);
    const double got = nll_limit(p.x, ObjectiveContext(p.A, p.y, sw));
    const double want = reference_nll(p.x, p.A, p.y, sw);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("singular B is reported") {
  const Problem p = random_problem(5, 8, 2);
  const ObjectiveContext ctx(p.A, p.y, 1.0);
  Vector x = p.x;
  x.tail(4).setZero();  // rank of A X^2 A^T drops to 4 < m
  CHECK_THROWS_AS(nll_limit(x, ctx), SingularObjective);
  CHECK_THROWS_AS(nll_gradient(x, ctx), SingularObjective);
  CHECK_THROWS_AS(nll_limit(Vector::Ones(7), ctx), DimensionError);
}

TEST_CASE("finite sigma_z objective equals the n x n expression up to its constants") {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    for (double sw : {1.0, 2.0}) {
      const Problem p = random_problem(6, 12, seed);
      const double sz = 0.5;
      const ObjectiveContext ctx(p.A, p.y, sw);
      const double constants = -12.0 * std::log(sw * sw) + 6.0 * std::log(sw * sw / (sz * sz)) -
                               p.y.squaredNorm() / (sz * sz);
      const double want = raw_finite_nll(p.x, p.A, p.y, sw, sz);
      CHECK(nll_finite_sigma_z(p.x, ctx, sz) + constants == doctest::Approx(want).epsilon(1e-9));
    }
  }
}

TEST_CASE("finite sigma_z objective, scalar case") {
  const double a = 1.3, x = 0.8, y = 0.7, sw = 1.5, sz = 0.4;
  const ObjectiveContext ctx(Matrix::Constant(1, 1, a), Vector::Constant(1, y), sw);
  const double M = 1.0 / (sw * sw) + a * a * x * x / (sz * sz);
  const double hand = std::log(M) - std::pow(sz, -4) * a * a * x * x * y * y / M;
  const double constants = -std::log(sw * sw) + std::log(sw * sw / (sz * sz)) - y * y / (sz * sz);
  CHECK(nll_finite_sigma_z(Vector::Constant(1, x), ctx, sz) + constants == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("finite sigma_z differences converge to the limit differences") {
  const Problem p = random_problem(20, 50, 21);
  const ObjectiveContext ctx(p.A, p.y, 1.0);
  const Vector x1 = p.x;
  const Vector x2 = Vector::Constant(50, 1.1);
  const double limit = nll_limit(x1, ctx) - nll_limit(x2, ctx);
  double previous = INFINITY;
  for (double sz : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const double diff = nll_finite_sigma_z(x1, ctx, sz) - nll_finite_sigma_z(x2, ctx, sz);
    const double gap = std::abs(diff - limit);
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK(previous <= 1e-3 * std::abs(limit));
}

TEST_CASE("overdetermined objective is minimized at |b_i| / sigma_w") {
  Rng rng = derive_stream(31, 0);
  const Index n = 50, m = 100;
  const Matrix A = sample_matrix(m, n, rng);
  Vector x(n), w(n);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    x(i) = 0.5 + 0.03 * double(i);
    w(i) = g(rng);
  }
  const double sw = 1.0;
  const Vector y = A * x.asDiagonal() * w;
  const Vector b = overdetermined_backprojection(A, y);

  const Vector xstar = b.cwiseAbs() / sw;
  const double fstar = nll_overdetermined(xstar, A, y, sw);
  for (Index i = 0; i < n; ++i) {
    // log-spaced 10^3-point grid around the analytic minimizer
    double best_v = 0.0, best_f = INFINITY;
    for (int k = 0; k < 1000; ++k) {
      const double v = xstar(i) * std::pow(10.0, -1.0 + 2.0 * k / 999.0);
      Vector xi = xstar;
      xi(i) = v;
      const double f = nll_overdetermined(xi, A, y, sw);
      CHECK(f >= fstar - 1e-12);
      if (f < best_f) best_f = f, best_v = v;
    }
    const double spacing = std::log(10.0) * 2.0 / 999.0;
    CHECK(std::abs(std::log(best_v / xstar(i))) <= spacing);
  }
}

TEST_CASE("overdetermined reduction with A = I matches the denoiser") {
  const Vector y = (Vector(4) << 0.3, -1.2, 2.0, -0.05).finished();
  const Matrix I = Matrix::Identity(4, 4);
  CHECK((overdetermined_backprojection(I, y) - y).norm() <= 1e-14);
  const Vector xs = denoise_ml(y);
  const double f = nll_overdetermined(xs, I, y, 1.0);
  for (Index i = 0; i < 4; ++i)
    for (double s : {0.9, 1.1}) {
      Vector x = xs;
      x(i) *= s;
      CHECK(nll_overdetermined(x, I, y, 1.0) > f);
    }
}

TEST_CASE("overdetermined objective with b = 0 reduces to sum log|x|") {
  const Matrix I = Matrix::Identity(3, 3);
  const Vector x = (Vector(3) << 0.25, 1.0, 2.0).finished();
  const double want = std::log(0.25) + std::log(1.0) + std::log(2.0);
  CHECK(nll_overdetermined(x, I, Vector::Zero(3), 1.0) == doctest::Approx(want));
  // increasing in every |x_i|, so the box minimizer is x_min 1
  CHECK(nll_overdetermined(Vector::Constant(3, 0.25), I, Vector::Zero(3), 1.0) <
        nll_overdetermined(x, I, Vector::Zero(3), 1.0));
  CHECK_THROWS(nll_overdetermined(Vector::Zero(3), I, Vector::Zero(3), 1.0));
  CHECK_THROWS_AS(overdetermined_backprojection(Matrix::Ones(3, 2) , Vector::Zero(3)), std::domain_error);
}

TEST_CASE("denoisers") {
  const Vector y = (Vector(3) << 0.0, -1.0, 2.0).finished();
  CHECK(denoise_ml(y) == (Vector(3) << 0.0, 1.0, 2.0).finished());
  const Vector x = (Vector(3) << 0.5, 1.0, 2.0).finished();
  CHECK(denoise_ml(x.cwiseProduct(Vector::Ones(3))) == x);
  CHECK(denoise_constant_ml(Vector::Constant(9, 1.7)) == doctest::Approx(1.7));
}

TEST_CASE("unstructured ML denoising error law") {
  Rng rng = derive_stream(41, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  const Index n = 10000;
  const int trials = 20;
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    Vector x(n), y(n);
    for (Index i = 0; i < n; ++i) {
      x(i) = 0.5 + 1.5 * double(i % 97) / 96.0;
      y(i) = x(i) * g(rng);
    }
    acc += (denoise_ml(y) - x).squaredNorm() / x.squaredNorm();
  }
  CHECK(acc / trials == doctest::Approx(2.0 * (1.0 - std::sqrt(2.0 / M_PI))).epsilon(0.03));
}

TEST_CASE("E[(W/n)^(1/2)] for chi-square W is close to 1 - 1/(4n)") {
  Rng rng = derive_stream(42, 0);
  for (int n : {10, 100, 1000}) {
    std::chi_squared_distribution<double> chi(n);
    const int draws = 20000;
    double acc = 0.0;
    for (int t = 0; t < draws; ++t) acc += std::sqrt(chi(rng) / n);
    const double exact = std::sqrt(2.0 / n) * std::exp(std::lgamma((n + 1) / 2.0) - std::lgamma(n / 2.0));
    const double se = std::sqrt(0.5 / n / draws);
    CHECK(std::abs(acc / draws - exact) <= 4.0 * se);
    CHECK(std::abs(exact - (1.0 - 1.0 / (4.0 * n))) <= 1.0 / (n * std::sqrt(double(n))));
  }
}

TEST_CASE("constant-signal ML error law") {
  // n (a_hat - a)^2 is about (a^2 / 2) chi^2_1, so 2000 trials give a
  // standard error near 3% of the target.
  Rng rng = derive_stream(43, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  const Index n = 1000;
  const double a = 1.5;
  double acc = 0.0;
  for (int t = 0; t < 2000; ++t) {
    Vector y(n);
    for (Index i = 0; i < n; ++i) y(i) = a * g(rng);
    const double e = denoise_constant_ml(y) - a;
    acc += double(n) * e * e;
  }
  CHECK(acc / 2000.0 == doctest::Approx(a * a / 2.0).epsilon(0.1));
}

TEST_CASE("constant ML magnitude solves the one-dimensional problem") {
  const Problem p = random_problem(10, 30, 51);
  const ObjectiveContext ctx(p.A, p.y, 1.3);
  const double c = constant_ml_magnitude(ctx);
  const double fc = nll_limit(Vector::Constant(30, c), ctx);
  for (double s : {0.98, 1.02}) CHECK(nll_limit(Vector::Constant(30, s * c), ctx) > fc);
}

TEST_CASE("segment restriction matches the expanded chain rule") {
  const Problem p = random_problem(12, 40, 61);
  const LikelihoodObjective obj{ObjectiveContext(p.A, p.y, 0.9)};
  const std::vector<Index> breaks{0, 7, 23, 40};
  const Vector theta = (Vector(3) << 0.8, 1.7, 1.2).finished();
  const ValueAndGradient fast = obj.restrict_to(breaks)->value_and_gradient(theta);
  const ValueAndGradient slow = ExpandedSegments(obj, breaks).value_and_gradient(theta);
  CHECK(fast.value == doctest::Approx(slow.value).epsilon(1e-11));
  CHECK((fast.gradient - slow.gradient).norm() <= 1e-9 * slow.gradient.norm());

  for (Index l = 0; l < 3; ++l) {
    const double h = 1e-5;
    Vector tp = theta, tm = theta;
    tp(l) += h;
    tm(l) -= h;
    const double fd = (ExpandedSegments(obj, breaks).value_and_gradient(tp).value -
                       ExpandedSegments(obj, breaks).value_and_gradient(tm).value) /
                      (2 * h);
    CHECK(std::abs(fd - fast.gradient(l)) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("counting wrapper counts every call, including failures") {
  const Problem p = random_problem(5, 8, 71);
  const LikelihoodObjective obj{ObjectiveContext(p.A, p.y, 1.0)};
  const CountingObjective counter(obj);
  counter.value(p.x);
  counter.value(p.x);
  counter.value_and_gradient(p.x);
  CHECK_THROWS_AS(counter.value(Vector::Zero(8)), SingularObjective);
  const std::vector<Index> breaks{0, 3, 8};
  auto seg = counter.restrict_to(breaks);
  seg->value_and_gradient(Vector::Ones(2));
  CHECK(counter.value_calls() == 3);
  CHECK(counter.gradient_calls() == 2);
}
