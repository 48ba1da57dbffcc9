#pragma once

// Evaluable scalar fields with certified error bounds.
//
// Every evaluation returns (value, error_bound) where the bound covers the
// analytic truncation tail; for Weierstrass series with integer base b the
// phase recursion t <- frac(b*t) keeps the cosine arguments exact, so the
// tail is the whole story up to machine epsilon. Fields are immutable and
// safe to evaluate from many threads.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "zyg/dyadic.hpp"
#include "zyg/rng.hpp"

namespace zyg {

inline constexpr double kTwoPi = 6.283185307179586477;

struct FieldEval {
  double value = 0;
  double error_bound = 0;
};

class ScalarField {
 public:
  using Evaluator = std::function<FieldEval(const Point&)>;
  // Integral of f along {base + t*e_axis : t in [t0, t1]}, certified.
  using EdgeIntegral = std::function<FieldEval(const Point& base, int axis, double t0, double t1)>;
  // f(x + t*e_axis) - f(x) without cancellation; lets polynomial fields keep
  // divided differences exact at deep dyadic levels.
  using AxisDiff = std::function<FieldEval(const Point& x, int axis, double t)>;

  ScalarField() = default;
  ScalarField(int dim, Evaluator ev, std::optional<double> seminorm_hint = std::nullopt,
              EdgeIntegral edge = nullptr, AxisDiff diff = nullptr)
      : dim_(dim), eval_(std::move(ev)), hint_(seminorm_hint), edge_(std::move(edge)),
        diff_(std::move(diff)) {
    if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("ScalarField: dim out of range");
  }

  int dim() const { return dim_; }
  FieldEval operator()(const Point& p) const { return eval_(p); }
  std::optional<double> seminorm_hint() const { return hint_; }

  bool has_edge_integral() const { return static_cast<bool>(edge_); }
  FieldEval edge_integral(const Point& base, int axis, double t0, double t1) const {
    if (!edge_) throw std::logic_error("field has no edge integral");
    return edge_(base, axis, t0, t1);
  }

  bool has_axis_diff() const { return static_cast<bool>(diff_); }
  FieldEval axis_diff(const Point& x, int axis, double t) const {
    if (diff_) return diff_(x, axis, t);
    Point y = x;
    y[axis] += t;
    FieldEval a = eval_(y), b = eval_(x);
    return {a.value - b.value, a.error_bound + b.error_bound};
  }

 private:
  int dim_ = 1;
  Evaluator eval_;
  std::optional<double> hint_;
  EdgeIntegral edge_;
  AxisDiff diff_;
};

// ---------------------------------------------------------------------------
// Weierstrass-type series  f(x) = sum_n b^{-n a} cos(2 pi b^n x)

struct WeierstrassParams {
  double b = 2.0;
  double alpha = 1.0;
  int terms = 0;           // explicit truncation when > 0
  double tail_tol = 1e-12; // otherwise smallest N with tail(N) <= tail_tol

  void validate() const {
    if (!(b > 1.0)) throw std::invalid_argument("weierstrass: b must be > 1");
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("weierstrass: alpha in (0,1]");
  }
  double decay() const { return std::pow(b, -alpha); }
  // sum_{n > N} b^{-n a} = q^{N+1} / (1 - q)
  double tail_bound(int N) const {
    double q = decay();
    return std::pow(q, N + 1) / (1.0 - q);
  }
  int term_count() const {
    if (terms > 0) return terms;
    double q = decay();
    int N = 0;
    double tail = q / (1.0 - q);
    while (tail > tail_tol && N < 4000) {
      ++N;
      tail *= q;
    }
    return N;
  }
};

namespace detail {

inline bool integral(double v) { return v == std::floor(v); }

// phase of b^n x mod 1, advanced one step
inline double advance_phase(double t, double b, bool b_integral) {
  double s = b * t;
  double f = s - std::floor(s);
  (void)b_integral;
  return f;
}

}  // namespace detail

inline FieldEval weierstrass_eval(const WeierstrassParams& p, double x) {
  p.validate();
  if (!std::isfinite(x)) throw std::invalid_argument("weierstrass_eval: non-finite x");
  const int N = p.term_count();
  const bool ib = detail::integral(p.b);
  const double q = p.decay();
  double t = x - std::floor(x);
  double amp = 1.0, val = 0.0, amp_sum = 0.0;
  for (int n = 0; n <= N; ++n) {
    val += amp * std::cos(kTwoPi * t);
    amp_sum += amp;
    amp *= q;
    if (ib) {
      t = detail::advance_phase(t, p.b, true);
    } else {
      // direct reduction; phase error grows with n for non-integer b
      double s = std::pow(p.b, n + 1) * x;
      t = s - std::floor(s);
    }
  }
  double slop = 4.0e-16 * amp_sum * (ib ? 1.0 : (N + 1.0));
  return {val, p.tail_bound(N) + slop};
}

// antiderivative  F(x) = sum_n b^{-n a} sin(2 pi b^n x) / (2 pi b^n)
inline FieldEval weierstrass_antiderivative(const WeierstrassParams& p, double x) {
  p.validate();
  const int N = p.term_count();
  const bool ib = detail::integral(p.b);
  const double q = p.decay();
  double t = x - std::floor(x);
  double amp = 1.0, scale = 1.0, val = 0.0;
  // sin(2 pi b^n x) = sin(2 pi t_n) with t_n the reduced phase (exact for integer b)
  for (int n = 0; n <= N; ++n) {
    val += amp * std::sin(kTwoPi * t) / (kTwoPi * scale);
    amp *= q;
    scale *= p.b;
    if (ib) {
      t = detail::advance_phase(t, p.b, true);
    } else {
      double s = std::pow(p.b, n + 1) * x;
      t = s - std::floor(s);
    }
  }
  double q_tail = q / p.b;  // b^{-n(a+1)} decay
  double tail = std::pow(q_tail, N + 1) / ((1.0 - q_tail) * kTwoPi);
  return {val, tail + 4.0e-16 * (N + 1.0)};
}

namespace detail {

// Optional dyadic-grid memo on [0,1]: exact lookup for x = j*2^-L.
struct DyadicTable {
  int level = 0;
  std::vector<double> values;  // j = 0..2^L
  bool lookup(double x, double& out) const {
    if (level == 0) return false;
    double s = std::ldexp(x, level);
    if (s < 0 || s > static_cast<double>(values.size() - 1)) return false;
    if (s != std::floor(s)) return false;
    out = values[static_cast<size_t>(s)];
    return true;
  }
};

struct WeierstrassBase {
  WeierstrassParams p;
  DyadicTable table;
  double tail = 0, slop = 0;

  explicit WeierstrassBase(const WeierstrassParams& params, int table_level) : p(params) {
    p.validate();
    int N = p.term_count();
    tail = p.tail_bound(N);
    slop = 4.0e-16 / (1.0 - p.decay());
    if (table_level > 0) {
      table.level = table_level;
      size_t n = (static_cast<size_t>(1) << table_level) + 1;
      table.values.resize(n);
      for (size_t j = 0; j < n; ++j)
        table.values[j] = weierstrass_eval(p, std::ldexp(static_cast<double>(j), -table_level)).value;
    }
  }
  FieldEval eval(double x) const {
    double v;
    if (table.lookup(x, v)) return {v, tail + slop};
    return weierstrass_eval(p, x);
  }
};

}  // namespace detail

// 1-d Weierstrass field. table_level > 0 precomputes values on the dyadic
// grid j*2^-table_level in [0,1] for fast exact-hit evaluation.
inline ScalarField weierstrass_field(const WeierstrassParams& p, int table_level = 0) {
  auto base = std::make_shared<detail::WeierstrassBase>(p, table_level);
  auto params = p;
  return ScalarField(
      1, [base](const Point& x) { return base->eval(x[0]); }, std::nullopt,
      [params](const Point& b, int axis, double t0, double t1) -> FieldEval {
        if (axis != 0) throw std::invalid_argument("edge axis out of range");
        (void)b;
        FieldEval f1 = weierstrass_antiderivative(params, t1);
        FieldEval f0 = weierstrass_antiderivative(params, t0);
        return {f1.value - f0.value, f1.error_bound + f0.error_bound};
      });
}

// F(x) = sum_i f_b(x_i), a d-dimensional Zygmund-class field.
inline ScalarField tensor_sum_field(const WeierstrassParams& p, int dim, int table_level = 0) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("tensor_sum_field: dim out of range");
  auto base = std::make_shared<detail::WeierstrassBase>(p, table_level);
  auto params = p;
  return ScalarField(
      dim,
      [base, dim](const Point& x) {
        double v = 0, e = 0;
        for (int i = 0; i < dim; ++i) {
          FieldEval fe = base->eval(x[i]);
          v += fe.value;
          e += fe.error_bound;
        }
        return FieldEval{v, e};
      },
      std::nullopt,
      [base, params, dim](const Point& b, int axis, double t0, double t1) -> FieldEval {
        double v = 0, e = 0;
        for (int i = 0; i < dim; ++i) {
          if (i == axis) continue;
          FieldEval fe = base->eval(b[i]);
          v += fe.value * (t1 - t0);
          e += fe.error_bound * std::fabs(t1 - t0);
        }
        FieldEval f1 = weierstrass_antiderivative(params, t1);
        FieldEval f0 = weierstrass_antiderivative(params, t0);
        v += f1.value - f0.value;
        e += f1.error_bound + f0.error_bound;
        return FieldEval{v, e};
      });
}

// f(x) = <c, x> + c0. The error bound covers dot-product rounding; forward
// differences go through the exact axis_diff path.
inline ScalarField linear_field(const Point& c, double c0 = 0.0) {
  int dim = c.dim;
  return ScalarField(
      dim,
      [c, c0](const Point& x) {
        double mag = std::fabs(c0);
        for (int i = 0; i < c.dim; ++i) mag += std::fabs(c[i] * x[i]);
        return FieldEval{dot(c, x) + c0, 1e-15 * mag};
      },
      0.0,
      [c, c0](const Point& b, int axis, double t0, double t1) -> FieldEval {
        double rest = c0;
        for (int i = 0; i < c.dim; ++i)
          if (i != axis) rest += c[i] * b[i];
        double v = rest * (t1 - t0) + 0.5 * c[axis] * (t1 * t1 - t0 * t0);
        return {v, 1e-15 * std::fabs(v)};
      },
      [c](const Point& x, int axis, double t) -> FieldEval {
        (void)x;
        return {c[axis] * t, 0.0};
      });
}

// f(x) = x_axis^2
inline ScalarField quadratic_field(int dim, int axis = 0) {
  if (axis < 0 || axis >= dim) throw std::invalid_argument("quadratic_field: bad axis");
  return ScalarField(
      dim,
      [axis](const Point& x) {
        return FieldEval{x[axis] * x[axis], 1e-16 * x[axis] * x[axis]};
      },
      std::nullopt,
      [axis](const Point& b, int a, double t0, double t1) -> FieldEval {
        if (a == axis) return {(t1 * t1 * t1 - t0 * t0 * t0) / 3.0, 1e-15};
        return {b[axis] * b[axis] * (t1 - t0), 1e-15};
      },
      [axis](const Point& x, int a, double t) -> FieldEval {
        if (a != axis) return {0.0, 0.0};
        double v = t * (2.0 * x[axis] + t);
        return {v, 2e-16 * std::fabs(v)};
      });
}

inline ScalarField scaled_field(const ScalarField& f, double a) {
  ScalarField::EdgeIntegral edge = nullptr;
  if (f.has_edge_integral()) {
    edge = [f, a](const Point& b, int axis, double t0, double t1) {
      FieldEval e = f.edge_integral(b, axis, t0, t1);
      return FieldEval{a * e.value, std::fabs(a) * e.error_bound};
    };
  }
  ScalarField::AxisDiff diff = nullptr;
  if (f.has_axis_diff()) {
    diff = [f, a](const Point& x, int axis, double t) {
      FieldEval e = f.axis_diff(x, axis, t);
      return FieldEval{a * e.value, std::fabs(a) * e.error_bound};
    };
  }
  std::optional<double> hint;
  if (f.seminorm_hint()) hint = std::fabs(a) * *f.seminorm_hint();
  return ScalarField(
      f.dim(),
      [f, a](const Point& x) {
        FieldEval e = f(x);
        return FieldEval{a * e.value, std::fabs(a) * e.error_bound};
      },
      hint, edge, diff);
}

inline ScalarField sum_of_fields(const ScalarField& f, const ScalarField& g) {
  if (f.dim() != g.dim()) throw std::invalid_argument("sum_of_fields: dim mismatch");
  ScalarField::EdgeIntegral edge = nullptr;
  if (f.has_edge_integral() && g.has_edge_integral()) {
    edge = [f, g](const Point& b, int axis, double t0, double t1) {
      FieldEval a = f.edge_integral(b, axis, t0, t1);
      FieldEval c = g.edge_integral(b, axis, t0, t1);
      return FieldEval{a.value + c.value, a.error_bound + c.error_bound};
    };
  }
  // the summed axis_diff is exact only when both summands provide one;
  // otherwise fall back to value differences for the whole sum
  ScalarField::AxisDiff diff = nullptr;
  if (f.has_axis_diff() && g.has_axis_diff()) {
    diff = [f, g](const Point& x, int axis, double t) {
      FieldEval a = f.axis_diff(x, axis, t), c = g.axis_diff(x, axis, t);
      return FieldEval{a.value + c.value, a.error_bound + c.error_bound};
    };
  }
  return ScalarField(
      f.dim(),
      [f, g](const Point& x) {
        FieldEval a = f(x), c = g(x);
        return FieldEval{a.value + c.value, a.error_bound + c.error_bound};
      },
      std::nullopt, edge, diff);
}

// ---------------------------------------------------------------------------
// Second differences and sampled Zygmund seminorm

inline FieldEval second_difference(const ScalarField& f, const Point& x, const Point& h) {
  if (norm2(h) == 0) throw std::invalid_argument("second_difference: h must be nonzero");
  // axis-aligned offsets can use the cancellation-free difference path:
  // D2 f = [f(x+h) - f(x)] - [f(x) - f(x-h)]
  if (f.has_axis_diff()) {
    int axis = -1, nz = 0;
    for (int i = 0; i < h.dim; ++i)
      if (h[i] != 0.0) {
        axis = i;
        ++nz;
      }
    if (nz == 1) {
      FieldEval fwd = f.axis_diff(x, axis, h[axis]);
      Point xm = x;
      xm[axis] -= h[axis];
      FieldEval bwd = f.axis_diff(xm, axis, h[axis]);
      return {fwd.value - bwd.value, fwd.error_bound + bwd.error_bound};
    }
  }
  FieldEval p = f(x + h), m = f(x - h), c = f(x);
  return {p.value + m.value - 2.0 * c.value, p.error_bound + m.error_bound + 2.0 * c.error_bound};
}

struct SampleSpec {
  Box region;
  int count = 10000;
  int scale_exp_min = 1;   // coarsest scale 2^-min
  int scale_exp_max = 20;  // finest scale 2^-max
  uint64_t seed = 1;

  void validate() const {
    if (count <= 0) throw std::invalid_argument("SampleSpec: empty sample spec");
    if (scale_exp_min > scale_exp_max) throw std::invalid_argument("SampleSpec: bad scale range");
  }
};

struct SeminormReport {
  double lower_bound = 0;   // max of (|D2| - err)/|h|, clamped at 0
  double raw_max = 0;       // max of |D2|/|h|
  int samples = 0;
  uint64_t seed = 0;
};

// Sampled lower bound for ||f||_* = sup |f(x+h)+f(x-h)-2f(x)| / |h|.
inline SeminormReport seminorm_estimate(const ScalarField& f, const SampleSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x5eb));
  SeminormReport rep;
  rep.samples = spec.count;
  rep.seed = spec.seed;
  for (int i = 0; i < spec.count; ++i) {
    Point x = rng.point_in(spec.region);
    int m = rng.uniform_int(spec.scale_exp_min, spec.scale_exp_max);
    double s = std::ldexp(1.0, -m);
    Point h = (f.dim() == 1) ? axis_vector(1, 0, s) : s * rng.unit_vector(f.dim());
    FieldEval d2 = second_difference(f, x, h);
    double ratio = std::fabs(d2.value) / s;
    rep.raw_max = std::max(rep.raw_max, ratio);
    rep.lower_bound = std::max(rep.lower_bound, std::max(0.0, (std::fabs(d2.value) - d2.error_bound) / s));
  }
  return rep;
}

// Per-scale maxima of the sampled second-difference ratio; decays to zero
// exactly for the small Zygmund class.
inline std::vector<std::pair<double, double>> small_zygmund_profile(
    const ScalarField& f, const std::vector<int>& scale_exps, const SampleSpec& spec) {
  std::vector<std::pair<double, double>> out;
  int prev = -1000000;
  bool first = true;
  for (int m : scale_exps) {
    if (!first && m <= prev) throw std::invalid_argument("small_zygmund_profile: scales must decrease");
    first = false;
    prev = m;
    Rng rng(derive_seed(spec.seed, 0x5a00 + static_cast<uint64_t>(m)));
    double s = std::ldexp(1.0, -m);
    double best = 0;
    for (int i = 0; i < spec.count; ++i) {
      Point x = rng.point_in(spec.region);
      Point h = (f.dim() == 1) ? axis_vector(1, 0, s) : s * rng.unit_vector(f.dim());
      FieldEval d2 = second_difference(f, x, h);
      best = std::max(best, std::fabs(d2.value) / s);
    }
    out.emplace_back(s, best);
  }
  return out;
}

}  // namespace zyg
