#include "speckle/measurement.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace speckle {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng derive_stream(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = mix_seed(seed, stream);
  const std::uint64_t b = mix_seed(a, stream ^ 0x5851f42d4c957f2dULL);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

Signal::Signal(Vector values, Bounds bounds) : values_(std::move(values)), bounds_(bounds) {
  if (values_.size() < 1) throw std::invalid_argument("signal must have at least one entry");
  if (!(bounds_.lower > 0.0) || !(bounds_.upper >= bounds_.lower))
    throw std::invalid_argument("signal bounds must satisfy 0 < lower <= upper");
  for (Index i = 0; i < values_.size(); ++i) {
    if (!bounds_.contains(values_(i)))
      throw std::out_of_range("signal entry " + std::to_string(i) + " outside bounds");
  }
}

Signal make_piecewise_signal(std::span<const Index> breaks, std::span<const double> values,
                             Index n, Bounds bounds) {
  if (breaks.size() < 2 || values.size() + 1 != breaks.size())
    throw std::invalid_argument("need k+1 breaks for k values");
  if (breaks.front() != 0 || breaks.back() != n)
    throw std::invalid_argument("breaks must start at 0 and end at n");
  for (std::size_t l = 1; l < breaks.size(); ++l) {
    if (breaks[l] <= breaks[l - 1]) throw std::invalid_argument("breaks must be strictly increasing");
  }
  Vector x(n);
  for (std::size_t l = 0; l < values.size(); ++l) {
    if (!bounds.contains(values[l])) throw std::out_of_range("segment value outside bounds");
    x.segment(breaks[l], breaks[l + 1] - breaks[l]).setConstant(values[l]);
  }
  return Signal(std::move(x), bounds);
}

std::vector<Index> segments_of(const Vector& x, std::vector<double>* values) {
  std::vector<Index> breaks{0};
  if (values) values->assign(1, x.size() ? x(0) : 0.0);
  for (Index i = 1; i < x.size(); ++i) {
    if (x(i) != x(i - 1)) {
      breaks.push_back(i);
      if (values) values->push_back(x(i));
    }
  }
  breaks.push_back(x.size());
  return breaks;
}

Matrix sample_matrix(Index m, Index n, Rng& rng) {
  if (m < 1 || n < 1) throw DimensionError("matrix dimensions must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix A(m, n);
  // Row-major fill so the stream order matches the serialized layout.
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < n; ++c) A(r, c) = normal(rng);
  return A;
}

Vector apply_model(const Vector& x, const Matrix& A, const Vector& w, const Vector& z) {
  if (A.cols() != x.size() || w.size() != x.size() || z.size() != A.rows())
    throw DimensionError("measurement dimensions are inconsistent");
  return A * x.cwiseProduct(w) + z;
}

Measurement measure(const Vector& x, const Matrix& A, double sigma_w, double sigma_z, Rng& rng) {
  if (A.cols() != x.size()) throw DimensionError("A has " + std::to_string(A.cols()) +
                                                 " columns but x has " + std::to_string(x.size()));
  if (!(sigma_w > 0.0)) throw std::invalid_argument("sigma_w must be positive");
  if (sigma_z < 0.0) throw std::invalid_argument("sigma_z must be nonnegative");
  std::normal_distribution<double> normal(0.0, 1.0);
  Measurement out;
  out.w.resize(x.size());
  for (Index i = 0; i < x.size(); ++i) out.w(i) = sigma_w * normal(rng);
  out.z = Vector::Zero(A.rows());
  if (sigma_z > 0.0)
    for (Index i = 0; i < A.rows(); ++i) out.z(i) = sigma_z * normal(rng);
  out.y = apply_model(x, A, out.w, out.z);
  return out;
}

SampledInstance make_instance(const Vector& x, Index m, double sigma_w, double sigma_z,
                              std::uint64_t seed) {
  Rng rng = derive_stream(seed, 0);
  SampledInstance s;
  s.instance.A = sample_matrix(m, x.size(), rng);
  const Index full = std::min(m, x.size());
  Eigen::ColPivHouseholderQR<Matrix> qr(s.instance.A);
  if (qr.rank() != full) throw std::runtime_error("sampled matrix is rank deficient");
  Measurement meas = measure(x, s.instance.A, sigma_w, sigma_z, rng);
  s.instance.y = std::move(meas.y);
  s.instance.sigma_w = sigma_w;
  s.instance.sigma_z = sigma_z;
  s.instance.seed = seed;
  s.w = std::move(meas.w);
  s.z = std::move(meas.z);
  return s;
}

namespace {

void write_vector(std::ostream& os, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v(i);
  os << '\n';
}

Vector read_vector(std::istream& is, Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    if (!(is >> v(i))) throw std::runtime_error("instance file truncated");
  }
  return v;
}

void expect_token(std::istream& is, const std::string& want) {
  std::string tok;
  if (!(is >> tok) || tok != want)
    throw std::runtime_error("instance file: expected '" + want + "', got '" + tok + "'");
}

}  // namespace

void write_instance(std::ostream& os, const MeasurementInstance& inst, const Vector* truth) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "speckle-instance 1\n";
  os << "m " << inst.rows() << "\nn " << inst.cols() << "\nseed " << inst.seed << '\n';
  os << "sigma_w " << inst.sigma_w << "\nsigma_z " << inst.sigma_z << '\n';
  os << "truth " << (truth ? 1 : 0) << '\n';
  os << "A\n";
  for (Index r = 0; r < inst.rows(); ++r) write_vector(os, inst.A.row(r).transpose());
  os << "y\n";
  write_vector(os, inst.y);
  if (truth) {
    os << "x\n";
    write_vector(os, *truth);
  }
  os.flags(flags);
  os.precision(prec);
}

LoadedInstance read_instance(std::istream& is) {
  expect_token(is, "speckle-instance");
  int version = 0;
  if (!(is >> version) || version != 1) throw std::runtime_error("unsupported instance version");
  LoadedInstance out;
  Index m = 0, n = 0;
  int has_truth = 0;
  expect_token(is, "m");
  is >> m;
  expect_token(is, "n");
  is >> n;
  expect_token(is, "seed");
  is >> out.instance.seed;
  expect_token(is, "sigma_w");
  is >> out.instance.sigma_w;
  expect_token(is, "sigma_z");
  is >> out.instance.sigma_z;
  expect_token(is, "truth");
  is >> has_truth;
  if (!is || m < 1 || n < 1) throw std::runtime_error("malformed instance header");
  expect_token(is, "A");
  out.instance.A.resize(m, n);
  for (Index r = 0; r < m; ++r) out.instance.A.row(r) = read_vector(is, n).transpose();
  expect_token(is, "y");
  out.instance.y = read_vector(is, m);
  if (has_truth) {
    expect_token(is, "x");
    out.truth = read_vector(is, n);
  }
  return out;
}

}  // namespace speckle
