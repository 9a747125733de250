#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace speckle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Random engine used throughout. One engine per independent stream.
using Rng = std::mt19937_64;

/// Mixes (seed, stream) into a fresh engine so that parallel trials never
/// share state. Equal inputs always give the same engine.
Rng derive_stream(std::uint64_t seed, std::uint64_t stream);

/// SplitMix64 finalizer; exposed for seed derivation in the harness.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double v) const { return v >= lower && v <= upper; }
};

/// Positive, box-bounded signal. Construction validates every entry.
class Signal {
 public:
  Signal(Vector values, Bounds bounds);

  const Vector& values() const { return values_; }
  const Bounds& bounds() const { return bounds_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_(i); }

 private:
  Vector values_;
  Bounds bounds_;
};

/// Piecewise-constant signal from 0-based half-open segment starts.
/// `breaks` has k+1 entries with breaks.front() == 0 and breaks.back() == n;
/// segment l covers [breaks[l], breaks[l+1]).
Signal make_piecewise_signal(std::span<const Index> breaks,
                             std::span<const double> values, Index n,
                             Bounds bounds);

/// Segments of a piecewise-constant vector: returns the break vector in the
/// same convention as make_piecewise_signal, and fills `values`.
std::vector<Index> segments_of(const Vector& x, std::vector<double>* values);

Matrix sample_matrix(Index m, Index n, Rng& rng);

struct MeasurementInstance {
  Matrix A;
  double sigma_w = 1.0;
  double sigma_z = 0.0;
  Vector y;
  std::uint64_t seed = 0;

  Index rows() const { return A.rows(); }
  Index cols() const { return A.cols(); }
};

struct Measurement {
  Vector y;
  Vector w;
  Vector z;
};

/// y = A diag(x) w + z with w, z drawn from `rng`.
Measurement measure(const Vector& x, const Matrix& A, double sigma_w,
                    double sigma_z, Rng& rng);

/// Deterministic form of the model with the noise supplied by the caller.
Vector apply_model(const Vector& x, const Matrix& A, const Vector& w,
                   const Vector& z);

struct SampledInstance {
  MeasurementInstance instance;
  Vector w;
  Vector z;
};

/// Samples A (checked for full row rank when m <= n) and noise from a
/// stream derived from `seed`.
SampledInstance make_instance(const Vector& x, Index m, double sigma_w,
                              double sigma_z, std::uint64_t seed);

/// Text replay format. Header keys, then A row-major, then y, then an
/// optional truth vector.
void write_instance(std::ostream& os, const MeasurementInstance& inst,
                    const Vector* truth = nullptr);

struct LoadedInstance {
  MeasurementInstance instance;
  std::optional<Vector> truth;
};
LoadedInstance read_instance(std::istream& is);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace speckle
