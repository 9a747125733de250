#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "speckle/measurement.hpp"

namespace speckle {

/// [x]_b = 2^{-b} floor(2^b x).
double quantize(double x, int bits);

/// Description of one codeword: jump positions and grid indices of the
/// segment values. jumps[k] is the 0-based start of segment k+1, which is
/// also the 1-based index of the last sample before the jump.
struct CodewordDescription {
  std::vector<Index> jumps;
  std::vector<Index> value_indices;
  long bit_length = 0;

  Index jump_count() const { return static_cast<Index>(jumps.size()); }
  bool operator==(const CodewordDescription&) const = default;
};

struct CodeStats {
  double rate = 0.0;        // bits per sample
  double distortion = 0.0;  // per-sample squared error bound
  long max_bits = 0;
  /// (k/n) log2(1/delta) + (k/n) log2(n) with k = J + 1 pieces.
  double structured_rate_bound = 0.0;
  bool within_structured_bound = false;
};

/// Piecewise-constant code with at most J jumps and b-bit quantized values.
///
/// The value grid holds the quantizer outputs of (x_min, x_max) that also
/// lie in [x_min, x_max]; i.e. the multiples of 2^{-b} in
/// [x_min, x_max). Jump locations are accounted with ceil(log2 n) bits each
/// plus ceil(log2(J+1)) bits for the jump count.
class PiecewiseConstantCode {
 public:
  PiecewiseConstantCode(Index n, Index max_jumps, int bits, Bounds bounds);

  Index length() const { return n_; }
  Index max_jumps() const { return max_jumps_; }
  int bits() const { return bits_; }
  const Bounds& bounds() const { return bounds_; }

  Index grid_size() const { return grid_hi_ - grid_lo_ + 1; }
  double grid_value(Index idx) const;
  /// Grid index of the quantized value, clamped into the grid.
  Index quantized_index(double v) const;
  /// Grid index minimizing (a - target)^2; ties go to the smaller value.
  Index nearest_index(double target) const;

  int value_bits() const;
  long bit_length(Index jump_count) const;

 private:
  Index n_;
  Index max_jumps_;
  int bits_;
  Bounds bounds_;
  long grid_lo_;  // integer multiples of 2^{-b}
  long grid_hi_;
};

class EncodingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

CodewordDescription encode(const Signal& x, const PiecewiseConstantCode& code);
Signal decode(const CodewordDescription& desc, const PiecewiseConstantCode& code);

/// Exact Euclidean projection onto the codebook by dynamic programming over
/// jump placements; O(J n^2) with O(1) segment costs from prefix sums.
Signal project_viterbi(const Vector& u, const PiecewiseConstantCode& code);

/// decode(greedy_encode(u)): binary segmentation up to J jumps, segment means
/// rounded to the nearest grid value.
Signal project_approx(const Vector& u, const PiecewiseConstantCode& code);

CodeStats code_stats(const PiecewiseConstantCode& code);

/// Rate of the element-wise quantizer on [0,1]^n at distortion delta:
/// 0.5 log2(1/delta).
double elementwise_quantizer_rate(double delta);

/// Same quantizer on k-sparse signals in [0,1]^n: (k/2n) log2(k/(n delta)).
double sparse_quantizer_rate(Index k, Index n, double delta);

/// Compact text form, e.g. "n=10 J=2 b=3 jumps=[3,7] values=[4,9,2]".
std::string to_string(const CodewordDescription& desc, const PiecewiseConstantCode& code);
CodewordDescription parse_description(const std::string& text, const PiecewiseConstantCode& code);

}  // namespace speckle
