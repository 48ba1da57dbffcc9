#pragma once

// Discrete gradients on dyadic cubes and derived diagnostics:
//
//   V(Q)_j = (f(x + l(Q) e_j) - f(x)) / l(Q),   x = origin of Q,
//
// the parent/child oscillation modulus w(delta), the affine-comparison
// residual |f(b) - f(a) - <V(Q), b-a>|, and per-point trajectories
// V(Q_0(x)), V(Q_1(x)), ...

#include <algorithm>
#include <vector>

#include "zyg/dyadic.hpp"
#include "zyg/field.hpp"
#include "zyg/rng.hpp"

namespace zyg {

// Coordinates stay exactly representable through level 40; trajectories are
// capped there.
inline constexpr int kTrajectoryLevelCap = 40;

struct DiscreteGradient {
  DyadicCube cube;
  Point vec;
  double error_bound = 0;
};

inline DiscreteGradient discrete_gradient(const ScalarField& f, const DyadicCube& q) {
  const int d = q.dim;
  const double l = q.side();
  Point x0 = q.origin();
  DiscreteGradient g;
  g.cube = q;
  g.vec = Point(d);
  double err = 0;
  if (f.has_axis_diff()) {
    for (int j = 0; j < d; ++j) {
      FieldEval fe = f.axis_diff(x0, j, l);
      g.vec[j] = fe.value / l;
      err += fe.error_bound;
    }
  } else {
    FieldEval base = f(x0);
    err = base.error_bound;
    for (int j = 0; j < d; ++j) {
      Point xj = x0;
      xj[j] += l;
      FieldEval fe = f(xj);
      g.vec[j] = (fe.value - base.value) / l;
      err += fe.error_bound;
    }
  }
  g.error_bound = err / l;
  return g;
}

struct ModulusSpec {
  Box region;
  int samples_per_level = 2000;
  int max_level_exp = 20;  // finest parent scale 2^-max
  uint64_t seed = 1;
};

// Sampled lower bound for w(delta) = sup ||V(Q') - V(Q)|| over nested pairs
// with 2 l(Q') = l(Q) <= delta.
inline double gradient_modulus(const ScalarField& f, int delta_exp, const ModulusSpec& spec) {
  if (delta_exp < 0) throw std::invalid_argument("gradient_modulus: delta must be dyadic 2^-m, m >= 0");
  double best = 0;
  for (int n = delta_exp; n <= spec.max_level_exp; ++n) {
    Rng rng(derive_seed(spec.seed, 0x30d0 + static_cast<uint64_t>(n)));
    for (int s = 0; s < spec.samples_per_level; ++s) {
      Point x = rng.point_in(spec.region);
      DyadicCube parent = locate(x, n);
      DiscreteGradient vp = discrete_gradient(f, parent);
      for (const DyadicCube& c : parent.children()) {
        DiscreteGradient vc = discrete_gradient(f, c);
        best = std::max(best, norm(vc.vec - vp.vec));
      }
    }
  }
  return best;
}

// |f(b) - f(a) - <V(Q), b-a>|; requires dist(a,Q) <= C l(Q), ||b-a|| <= C l(Q).
inline double lemma2_residual(const ScalarField& f, const DyadicCube& q, const Point& a,
                              const Point& b, double admissibility = 4.0) {
  const double l = q.side();
  if (dist_to_cube(a, q) > admissibility * l)
    throw std::invalid_argument("lemma2_residual: a too far from Q");
  if (norm(b - a) > admissibility * l)
    throw std::invalid_argument("lemma2_residual: b too far from a");
  DiscreteGradient g = discrete_gradient(f, q);
  double fa = f(a).value, fb = f(b).value;
  return std::fabs(fb - fa - dot(g.vec, b - a));
}

struct TrajectoryDiagnostics {
  double sup_norm = 0;
  int argmax_level = 0;
  double last_increment = 0;  // ||V(Q_n) - V(Q_{n-1})|| at the deepest step
};

struct GradientTrajectory {
  Point point;
  std::vector<DiscreteGradient> values;  // levels 0..n_max
  TrajectoryDiagnostics diag;
};

inline GradientTrajectory gradient_trajectory(const ScalarField& f, const Point& x, int n_max) {
  if (n_max < 0) throw std::invalid_argument("gradient_trajectory: n_max must be >= 0");
  n_max = std::min(n_max, kTrajectoryLevelCap);
  GradientTrajectory t;
  t.point = x;
  t.values.reserve(static_cast<size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    DiscreteGradient g = discrete_gradient(f, locate(x, n));
    double nn = norm(g.vec);
    if (nn >= t.diag.sup_norm) {
      // strict later levels do not displace an equal earlier max
      if (nn > t.diag.sup_norm) t.diag.argmax_level = n;
      t.diag.sup_norm = std::max(t.diag.sup_norm, nn);
    }
    if (n > 0) t.diag.last_increment = norm(g.vec - t.values.back().vec);
    t.values.push_back(std::move(g));
  }
  return t;
}

inline double trajectory_max_norm(const GradientTrajectory& t, int up_to_level) {
  double m = 0;
  for (const auto& g : t.values) {
    if (g.cube.level > up_to_level) break;
    m = std::max(m, norm(g.vec));
  }
  return m;
}

}  // namespace zyg
