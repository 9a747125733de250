#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance suite.

#include <cmath>
#include <functional>
#include <vector>

#include "speckle/compression.hpp"
#include "speckle/likelihood.hpp"

namespace oracle {

using speckle::Index;
using speckle::Vector;

struct Candidate {
  double cost;
  Vector signal;
};

// Exhaustive minimum over jump placements; each segment value found by a
// scan over the whole grid (separable, so still exact). Returns every
// configuration within 1e-12 of the minimum cost.
inline std::vector<Candidate> projection_minimizers(const Vector& u, const speckle::PiecewiseConstantCode& code) {
  const Index n = code.length();
  double best = INFINITY;
  std::vector<Candidate> all;
  std::vector<Index> starts{0};
  std::function<void(Index)> visit = [&](Index from) {
    Vector x(n);
    double cost = 0.0;
    for (std::size_t l = 0; l < starts.size(); ++l) {
      const Index a = starts[l], e = l + 1 < starts.size() ? starts[l + 1] : n;
      double seg_best = INFINITY, seg_v = 0.0;
      for (Index g = 0; g < code.grid_size(); ++g) {
        const double v = code.grid_value(g);
        const double c = (u.segment(a, e - a).array() - v).square().sum();
        if (c < seg_best) seg_best = c, seg_v = v;
      }
      cost += seg_best;
      x.segment(a, e - a).setConstant(seg_v);
    }
    all.push_back({cost, x});
    best = std::min(best, cost);
    if (static_cast<Index>(starts.size()) - 1 == code.max_jumps()) return;
    for (Index j = from; j < n; ++j) {
      starts.push_back(j);
      visit(j + 1);
      starts.pop_back();
    }
  };
  visit(1);
  std::vector<Candidate> winners;
  for (auto& c : all)
    if (c.cost <= best + 1e-12) winners.push_back(c);
  return winners;
}

inline Vector central_differences(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector fd(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    fd(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return fd;
}

}  // namespace oracle
