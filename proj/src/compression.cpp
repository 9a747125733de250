#include "speckle/compression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace speckle {

namespace {

int ceil_log2(long v) {
  int bits = 0;
  while ((1L << bits) < v) ++bits;
  return bits;
}

struct PrefixSums {
  std::vector<double> s1, s2;

  explicit PrefixSums(const Vector& u) : s1(u.size() + 1, 0.0), s2(u.size() + 1, 0.0) {
    for (Index i = 0; i < u.size(); ++i) {
      s1[i + 1] = s1[i] + u(i);
      s2[i + 1] = s2[i] + u(i) * u(i);
    }
  }
  double sum(Index a, Index b) const { return s1[b] - s1[a]; }
  double sum_sq(Index a, Index b) const { return s2[b] - s2[a]; }
};

// Best grid value for samples [a, b) and its squared error.
struct SegmentFit {
  Index value_index;
  double cost;
};

SegmentFit fit_segment(const PrefixSums& ps, const PiecewiseConstantCode& code, Index a, Index b) {
  const double len = static_cast<double>(b - a);
  const double s1 = ps.sum(a, b);
  const Index idx = code.nearest_index(s1 / len);
  const double v = code.grid_value(idx);
  return {idx, ps.sum_sq(a, b) - 2.0 * v * s1 + len * v * v};
}

Signal build_signal(const std::vector<Index>& starts, const std::vector<Index>& value_indices,
                    const PiecewiseConstantCode& code) {
  Vector x(code.length());
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const Index end = s + 1 < starts.size() ? starts[s + 1] : code.length();
    x.segment(starts[s], end - starts[s]).setConstant(code.grid_value(value_indices[s]));
  }
  return Signal(std::move(x), code.bounds());
}

}  // namespace

double quantize(double x, int bits) {
  return std::ldexp(std::floor(std::ldexp(x, bits)), -bits);
}

PiecewiseConstantCode::PiecewiseConstantCode(Index n, Index max_jumps, int bits, Bounds bounds)
    : n_(n), max_jumps_(max_jumps), bits_(bits), bounds_(bounds) {
  if (n_ < 1) throw std::invalid_argument("code length must be positive");
  if (max_jumps_ < 0 || max_jumps_ > n_ - 1) throw std::invalid_argument("need 0 <= J <= n-1");
  if (bits_ < 0 || bits_ > 40) throw std::invalid_argument("quantizer bits out of range");
  if (!(bounds_.lower > 0.0) || !(bounds_.upper > bounds_.lower))
    throw std::invalid_argument("code bounds must satisfy 0 < x_min < x_max");
  grid_lo_ = static_cast<long>(std::ceil(std::ldexp(bounds_.lower, bits_)));
  grid_hi_ = static_cast<long>(std::ceil(std::ldexp(bounds_.upper, bits_))) - 1;
  if (grid_hi_ < grid_lo_) throw std::invalid_argument("value grid is empty for these bounds");
}

double PiecewiseConstantCode::grid_value(Index idx) const {
  return std::ldexp(static_cast<double>(grid_lo_ + idx), -bits_);
}

Index PiecewiseConstantCode::quantized_index(double v) const {
  const double q = std::floor(std::ldexp(v, bits_));
  const double clamped = std::clamp(q, static_cast<double>(grid_lo_), static_cast<double>(grid_hi_));
  return static_cast<Index>(clamped) - grid_lo_;
}

Index PiecewiseConstantCode::nearest_index(double target) const {
  const double lo = static_cast<double>(grid_lo_), hi = static_cast<double>(grid_hi_);
  const double q = std::floor(std::ldexp(target, bits_));
  const double left = std::clamp(q, lo, hi);
  const double right = std::clamp(q + 1.0, lo, hi);
  const double dl = std::ldexp(left, -bits_) - target;
  const double dr = std::ldexp(right, -bits_) - target;
  const double best = dr * dr < dl * dl ? right : left;
  return static_cast<Index>(best) - grid_lo_;
}

int PiecewiseConstantCode::value_bits() const {
  const int range_bits = static_cast<int>(std::ceil(std::log2(bounds_.upper - bounds_.lower)));
  return std::max(0, range_bits + bits_);
}

long PiecewiseConstantCode::bit_length(Index jump_count) const {
  return ceil_log2(max_jumps_ + 1) + jump_count * ceil_log2(n_) +
         (jump_count + 1) * static_cast<long>(value_bits());
}

CodewordDescription encode(const Signal& x, const PiecewiseConstantCode& code) {
  if (x.size() != code.length()) throw EncodingError("signal length does not match code");
  const Bounds& b = code.bounds();
  for (Index i = 0; i < x.size(); ++i)
    if (!b.contains(x[i])) throw EncodingError("signal value outside code bounds");

  const std::vector<Index> starts = segments_of(x.values(), nullptr);
  if (static_cast<Index>(starts.size()) - 2 > code.max_jumps())
    throw EncodingError("signal has more jumps than the code allows");

  CodewordDescription desc;
  for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
    const Index idx = code.quantized_index(x[starts[s]]);
    // Adjacent segments that land on the same grid value merge.
    if (!desc.value_indices.empty() && desc.value_indices.back() == idx) continue;
    if (s > 0) desc.jumps.push_back(starts[s]);
    desc.value_indices.push_back(idx);
  }
  desc.bit_length = code.bit_length(desc.jump_count());
  return desc;
}

Signal decode(const CodewordDescription& desc, const PiecewiseConstantCode& code) {
  if (desc.jump_count() > code.max_jumps()) throw EncodingError("too many jumps in description");
  if (desc.value_indices.size() != desc.jumps.size() + 1)
    throw EncodingError("description needs one value per segment");
  Index prev = 0;
  for (Index j : desc.jumps) {
    if (j <= prev || j >= code.length()) throw EncodingError("jump positions must increase within (0, n)");
    prev = j;
  }
  for (Index v : desc.value_indices)
    if (v < 0 || v >= code.grid_size()) throw EncodingError("value index outside grid");
  std::vector<Index> starts{0};
  starts.insert(starts.end(), desc.jumps.begin(), desc.jumps.end());
  return build_signal(starts, desc.value_indices, code);
}

Signal project_viterbi(const Vector& u, const PiecewiseConstantCode& code) {
  const Index n = code.length();
  if (u.size() != n) throw DimensionError("projection input length does not match code");
  const Index J = code.max_jumps();
  const PrefixSums ps(u);

  // best[r][i]: least cost of samples [i, n) using at most r further jumps.
  // next[r][i]: start of the following segment (n when none).
  std::vector<std::vector<double>> best(J + 1, std::vector<double>(n));
  std::vector<std::vector<Index>> next(J + 1, std::vector<Index>(n, n));
  for (Index i = 0; i < n; ++i) best[0][i] = fit_segment(ps, code, i, n).cost;
  for (Index r = 1; r <= J; ++r) {
    for (Index i = 0; i < n; ++i) {
      double c = best[0][i];
      Index arg = n;
      for (Index j = i + 1; j < n; ++j) {
        const double cand = fit_segment(ps, code, i, j).cost + best[r - 1][j];
        if (cand < c) {
          c = cand;
          arg = j;
        }
      }
      best[r][i] = c;
      next[r][i] = arg;
    }
  }

  std::vector<Index> starts, values;
  Index i = 0;
  for (Index r = J; i < n; --r) {
    const Index j = r > 0 ? next[r][i] : n;
    starts.push_back(i);
    values.push_back(fit_segment(ps, code, i, j).value_index);
    i = j;
    if (r == 0) break;
  }
  return build_signal(starts, values, code);
}

Signal project_approx(const Vector& u, const PiecewiseConstantCode& code) {
  const Index n = code.length();
  if (u.size() != n) throw DimensionError("projection input length does not match code");
  const PrefixSums ps(u);
  auto sse = [&](Index a, Index b) {
    const double s = ps.sum(a, b);
    return ps.sum_sq(a, b) - s * s / static_cast<double>(b - a);
  };

  std::vector<Index> starts{0};
  for (Index step = 0; step < code.max_jumps(); ++step) {
    double best_gain = 0.0;
    Index best_split = -1;
    for (std::size_t s = 0; s < starts.size(); ++s) {
      const Index a = starts[s];
      const Index b = s + 1 < starts.size() ? starts[s + 1] : n;
      const double whole = sse(a, b);
      for (Index c = a + 1; c < b; ++c) {
        const double gain = whole - sse(a, c) - sse(c, b);
        if (gain > best_gain) {
          best_gain = gain;
          best_split = c;
        }
      }
    }
    if (best_split < 0) break;
    starts.insert(std::upper_bound(starts.begin(), starts.end(), best_split), best_split);
  }

  std::vector<Index> values;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const Index b = s + 1 < starts.size() ? starts[s + 1] : n;
    values.push_back(fit_segment(ps, code, starts[s], b).value_index);
  }
  return build_signal(starts, values, code);
}

CodeStats code_stats(const PiecewiseConstantCode& code) {
  CodeStats st;
  const double n = static_cast<double>(code.length());
  st.max_bits = code.bit_length(code.max_jumps());
  st.rate = static_cast<double>(st.max_bits) / n;
  st.distortion = std::ldexp(1.0, -2 * code.bits());
  const double k = static_cast<double>(code.max_jumps() + 1);
  st.structured_rate_bound = (k / n) * std::log2(1.0 / st.distortion) + (k / n) * std::log2(n);
  st.within_structured_bound = st.rate <= st.structured_rate_bound;
  return st;
}

double elementwise_quantizer_rate(double delta) { return 0.5 * std::log2(1.0 / delta); }

double sparse_quantizer_rate(Index k, Index n, double delta) {
  const double kn = static_cast<double>(k) / static_cast<double>(n);
  return 0.5 * kn * std::log2(kn / delta);
}

std::string to_string(const CodewordDescription& desc, const PiecewiseConstantCode& code) {
  std::ostringstream os;
  os << "n=" << code.length() << " J=" << code.max_jumps() << " b=" << code.bits() << " jumps=[";
  for (std::size_t i = 0; i < desc.jumps.size(); ++i) os << (i ? "," : "") << desc.jumps[i];
  os << "] values=[";
  for (std::size_t i = 0; i < desc.value_indices.size(); ++i)
    os << (i ? "," : "") << desc.value_indices[i];
  os << "]";
  return os.str();
}

CodewordDescription parse_description(const std::string& text, const PiecewiseConstantCode& code) {
  std::string flat = text;
  for (char& c : flat)
    if (c == '[' || c == ']' || c == ',' || c == '=') c = ' ';
  std::istringstream is(flat);
  std::string key;
  Index n = -1, J = -1;
  int b = -1;
  CodewordDescription desc;
  std::vector<Index>* target = nullptr;
  while (is >> key) {
    if (key == "n") {
      is >> n;
    } else if (key == "J") {
      is >> J;
    } else if (key == "b") {
      is >> b;
    } else if (key == "jumps") {
      target = &desc.jumps;
    } else if (key == "values") {
      target = &desc.value_indices;
    } else if (target) {
      std::size_t used = 0;
      const long v = std::stol(key, &used);
      if (used != key.size()) throw EncodingError("bad token in description: " + key);
      target->push_back(v);
    } else {
      throw EncodingError("unexpected token in description: " + key);
    }
  }
  if (n != code.length() || J != code.max_jumps() || b != code.bits())
    throw EncodingError("description header does not match code");
  decode(desc, code);  // validates
  desc.bit_length = code.bit_length(desc.jump_count());
  return desc;
}

}  // namespace speckle
