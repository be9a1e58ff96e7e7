#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "prefopt/core.hpp"
#include "prefopt/qp.hpp"

namespace testing {

using prefopt::Index;
using prefopt::Mat;
using prefopt::Vec;

inline Vec uniform_vec(std::mt19937_64& rng, Index n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// `count` distinct points of the unit cube as rows.
inline Mat unit_points(std::mt19937_64& rng, Index count, Index n) {
  Mat m(count, n);
  for (Index r = 0; r < count; ++r) m.row(r) = uniform_vec(rng, n).transpose();
  return m;
}

/// Dataset on the unit cube filled with `count` random points.
inline prefopt::Dataset unit_dataset(std::mt19937_64& rng, Index count, Index n) {
  prefopt::Dataset d(prefopt::Bounds(Vec::Zero(n), Vec::Ones(n)));
  while (static_cast<Index>(d.size()) < count) {
    const Vec u = uniform_vec(rng, n);
    if (d.find_scaled(u) < 0) d.append_scaled(u);
  }
  return d;
}

/// Chained preferences against a running incumbent, labelled by f.
template <typename F>
prefopt::PreferenceSet chained_preferences(const prefopt::Dataset& d, F&& f) {
  prefopt::PreferenceSet prefs;
  std::size_t best = 0;
  for (std::size_t k = 1; k < d.size(); ++k) {
    const int label = prefopt::encode_preference(f(d.point(k)), f(d.point(best)));
    prefs.add({k, best, label}, d.size());
    if (label == -1) best = k;
  }
  return prefs;
}

struct GridOptimum {
  Vec arg;
  double value = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Feasible y-interval of grid column x and the exact minimizer of the
/// convex quadratic along it. Returns false for an empty column.
inline bool column_minimum(const prefopt::QuadraticProgram& qp, double x, double lo, double hi, double& y,
                           double& f) {
  double ylo = lo, yhi = hi;
  for (Index r = 0; r < qp.G.rows(); ++r) {
    const double a = qp.G(r, 0), b = qp.G(r, 1), rhs = qp.h[r] - a * x;
    if (b > 0)
      yhi = std::min(yhi, rhs / b);
    else if (b < 0)
      ylo = std::max(ylo, rhs / b);
    else if (rhs < 0)
      return false;
  }
  if (ylo > yhi) return false;
  y = std::clamp(-(qp.P(0, 1) * x + qp.q[1]) / qp.P(1, 1), ylo, yhi);
  f = 0.5 * (qp.P(0, 0) * x * x + 2.0 * qp.P(0, 1) * x * y + qp.P(1, 1) * y * y) + qp.q[0] * x + qp.q[1] * y;
  return true;
}

}  // namespace detail

/// Brute-force search of a 2-variable QP: x runs over lo:step:hi, and per
/// column y is the exact minimizer over the feasible interval. A second
/// pass at step 1e-3 * step around the best column resolves x. The column
/// minimum is convex in x, so the best column brackets the optimum.
inline GridOptimum grid_qp_oracle(const prefopt::QuadraticProgram& qp, double lo = -5.0, double hi = 5.0,
                                  double step = 1e-3) {
  GridOptimum best;
  best.arg = Vec::Zero(2);
  auto sweep = [&](double from, double to, double h) {
    const long n = std::lround((to - from) / h);
    for (long i = 0; i <= n; ++i) {
      const double x = from + h * static_cast<double>(i);
      double y, f;
      if (detail::column_minimum(qp, x, lo, hi, y, f) && f < best.value) {
        best.value = f;
        best.arg << x, y;
      }
    }
  };
  sweep(lo, hi, step);
  if (std::isfinite(best.value)) {
    const double x0 = best.arg[0];
    sweep(std::max(lo, x0 - step), std::min(hi, x0 + step), 1e-3 * step);
  }
  return best;
}

inline double qp_objective(const prefopt::QuadraticProgram& qp, const Vec& v) {
  return 0.5 * v.dot(qp.P * v) + qp.q.dot(v);
}

/// Strictly convex 2-variable QP with 3 constraints, feasible near the
/// origin and with its unconstrained minimizer inside [-3, 3]^2.
inline prefopt::QuadraticProgram random_qp2(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> eig(0.5, 3.0), ang(0.0, 6.283185307179586), box(-3.0, 3.0),
      near(-1.0, 1.0), margin(0.0, 1.5);
  prefopt::QuadraticProgram qp;
  const double th = ang(rng);
  Mat rot(2, 2);
  rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  Vec d(2);
  d << eig(rng), eig(rng);
  qp.P = rot * d.asDiagonal() * rot.transpose();
  qp.P = 0.5 * (qp.P + qp.P.transpose()).eval();
  Vec vu(2);
  vu << box(rng), box(rng);
  qp.q = -qp.P * vu;
  Vec vf(2);
  vf << near(rng), near(rng);
  qp.G.resize(3, 2);
  qp.h.resize(3);
  for (Index r = 0; r < 3; ++r) {
    const double a = ang(rng);
    qp.G(r, 0) = std::cos(a);
    qp.G(r, 1) = std::sin(a);
    qp.h[r] = qp.G.row(r).dot(vf) + margin(rng);
  }
  return qp;
}

}  // namespace testing
