#pragma once

// Dyadic vector martingales on the unit cube: the face-integral martingale of
// a scalar field, Bloch norms over adjacent same-generation cubes, exact line
// integrals of the piecewise-constant fields along polygonals, and the
// conservative-defect audit.
//
// Values live on the full dyadic tree of [0,1)^d up to a fixed depth, stored
// densely per generation. The domain is treated as closed: points on the
// upper boundary belong to the last cube of their row, consistent with cubes
// owning their lower faces.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "zyg/dyadic.hpp"
#include "zyg/field.hpp"
#include "zyg/rng.hpp"

namespace zyg {

class VectorMartingale {
 public:
  VectorMartingale(int dim, int depth) : dim_(dim), depth_(depth) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("VectorMartingale: dim in 1..3");
    if (depth < 1 || dim * depth > 24)
      throw std::invalid_argument("VectorMartingale: dense storage needs dim*depth <= 24");
    levels_.resize(static_cast<size_t>(depth) + 1);
    for (int n = 0; n <= depth; ++n)
      levels_[static_cast<size_t>(n)].assign(cells(n), Point(dim));
  }

  int dim() const { return dim_; }
  int depth() const { return depth_; }

  size_t cells(int n) const { return static_cast<size_t>(1) << (dim_ * n); }

  size_t index(int n, const DyadicCube& q) const {
    size_t idx = 0;
    for (int i = dim_ - 1; i >= 0; --i) {
      int64_t k = q.k[static_cast<size_t>(i)];
      if (k < 0 || k >= (int64_t(1) << n)) throw std::out_of_range("martingale: cube outside unit cube");
      idx = (idx << n) | static_cast<size_t>(k);
    }
    return idx;
  }

  const Point& value(int n, const DyadicCube& q) const {
    if (n != q.level) throw std::invalid_argument("martingale: level mismatch");
    return levels_[static_cast<size_t>(n)][index(n, q)];
  }
  Point& value(int n, const DyadicCube& q) {
    return levels_[static_cast<size_t>(n)][index(n, q)];
  }

  // S_n(x) with the closed-domain clamp on the upper boundary
  const Point& at(int n, const Point& x) const {
    DyadicCube q;
    q.dim = dim_;
    q.level = n;
    for (int i = 0; i < dim_; ++i) {
      double s = std::ldexp(x[i], n);
      int64_t k = static_cast<int64_t>(std::floor(s));
      k = std::max<int64_t>(0, std::min<int64_t>(k, (int64_t(1) << n) - 1));
      q.k[static_cast<size_t>(i)] = k;
    }
    return levels_[static_cast<size_t>(n)][index(n, q)];
  }

  double build_residual = 0;   // max martingale-property defect over internal cubes
  double quad_tol = 0;

  // max over internal cubes of ||average of children - parent||
  double martingale_property_residual() const {
    double worst = 0;
    for (int n = 0; n + 1 <= depth_; ++n) {
      for (size_t idx = 0; idx < cells(n); ++idx) {
        DyadicCube q = cube_of(n, idx);
        Point avg(dim_);
        for (unsigned m = 0; m < (1u << dim_); ++m) {
          const Point& c = value(n + 1, q.child(m));
          for (int i = 0; i < dim_; ++i) avg[i] += c[i];
        }
        double inv = 1.0 / static_cast<double>(1u << dim_);
        const Point& p = value(n, q);
        double diff = 0;
        for (int i = 0; i < dim_; ++i) {
          double d = avg[i] * inv - p[i];
          diff += d * d;
        }
        worst = std::max(worst, std::sqrt(diff));
      }
    }
    return worst;
  }

  DyadicCube cube_of(int n, size_t idx) const {
    DyadicCube q;
    q.dim = dim_;
    q.level = n;
    size_t mask = (static_cast<size_t>(1) << n) - 1;
    for (int i = 0; i < dim_; ++i) {
      q.k[static_cast<size_t>(i)] = static_cast<int64_t>(idx & mask);
      idx >>= n;
    }
    return q;
  }

 private:
  int dim_;
  int depth_;
  std::vector<std::vector<Point>> levels_;
};

namespace detail {

// integral of f over the (d-1)-face of q orthogonal to axis at coordinate
// `face_coord`, adaptive composite midpoint unless the field has an exact
// edge integral (d <= 2 faces are points or edges; d = 3 uses tensor midpoint)
inline FieldEval face_integral(const ScalarField& f, const DyadicCube& q, int axis,
                               double face_coord, double tol) {
  const int d = q.dim;
  Point base = q.origin();
  base[axis] = face_coord;
  if (d == 1) return f(base);
  if (d == 2) {
    int other = 1 - axis;
    double t0 = base[other], t1 = t0 + q.side();
    if (f.has_edge_integral()) return f.edge_integral(base, other, t0, t1);
    // composite midpoint with dyadic refinement
    double prev = 0;
    for (int m = 2; m <= 22; ++m) {
      int64_t n = int64_t(1) << m;
      double h = (t1 - t0) / static_cast<double>(n);
      double s = 0;
      Point p = base;
      for (int64_t i = 0; i < n; ++i) {
        p[other] = t0 + (static_cast<double>(i) + 0.5) * h;
        s += f(p).value;
      }
      s *= h;
      if (m > 2 && std::fabs(s - prev) < tol) return {s, std::fabs(s - prev)};
      prev = s;
    }
    throw std::runtime_error("face quadrature failed to converge on cube " + q.str());
  }
  // d == 3: tensor midpoint, fixed refinement ladder
  int o1 = (axis + 1) % 3, o2 = (axis + 2) % 3;
  double a0 = base[o1], b0 = base[o2], side = q.side();
  double prev = 0;
  for (int m = 1; m <= 9; ++m) {
    int64_t n = int64_t(1) << m;
    double h = side / static_cast<double>(n);
    double s = 0;
    Point p = base;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        p[o1] = a0 + (static_cast<double>(i) + 0.5) * h;
        p[o2] = b0 + (static_cast<double>(j) + 0.5) * h;
        s += f(p).value;
      }
    s *= h * h;
    if (m > 1 && std::fabs(s - prev) < tol) return {s, std::fabs(s - prev)};
    prev = s;
  }
  throw std::runtime_error("face quadrature failed to converge on cube " + q.str());
}

}  // namespace detail

// S_n|Q component i = (integral over upper face - lower face) / l(Q)^d.
// Face integrals on a generation grid are shared between neighbors.
inline VectorMartingale face_integral_martingale(const ScalarField& f, int depth,
                                                 double tol = 1e-10) {
  const int d = f.dim();
  VectorMartingale m(d, depth);
  m.quad_tol = tol;
  for (int n = 0; n <= depth; ++n) {
    double l = std::ldexp(1.0, -n);
    double vol = std::pow(l, d);
    double face_tol = tol * std::pow(l, d - 1);
    int64_t cells_per_axis = int64_t(1) << n;
    for (int axis = 0; axis < d; ++axis) {
      // face grid: (cells_per_axis + 1) positions along `axis`, cell index on the rest
      // store integral per (face position, transverse cell)
      std::vector<double> grid;
      int64_t transverse = 1;
      for (int i = 0; i < d; ++i)
        if (i != axis) transverse *= cells_per_axis;
      grid.assign(static_cast<size_t>((cells_per_axis + 1) * transverse), 0.0);
      for (int64_t pos = 0; pos <= cells_per_axis; ++pos) {
        for (int64_t t = 0; t < transverse; ++t) {
          DyadicCube q;
          q.dim = d;
          q.level = n;
          int64_t rem = t;
          for (int i = 0; i < d; ++i) {
            if (i == axis) {
              q.k[static_cast<size_t>(i)] = std::min(pos, cells_per_axis - 1);
            } else {
              q.k[static_cast<size_t>(i)] = rem % cells_per_axis;
              rem /= cells_per_axis;
            }
          }
          double coord = std::ldexp(static_cast<double>(pos), -n);
          grid[static_cast<size_t>(pos * transverse + t)] =
              detail::face_integral(f, q, axis, coord, face_tol).value;
        }
      }
      for (size_t idx = 0; idx < m.cells(n); ++idx) {
        DyadicCube q = m.cube_of(n, idx);
        int64_t pos = q.k[static_cast<size_t>(axis)];
        int64_t t = 0, mul = 1;
        for (int i = 0; i < d; ++i) {
          if (i == axis) continue;
          t += q.k[static_cast<size_t>(i)] * mul;
          mul *= cells_per_axis;
        }
        double up = grid[static_cast<size_t>((pos + 1) * transverse + t)];
        double dn = grid[static_cast<size_t>(pos * transverse + t)];
        m.value(n, q)[axis] = (up - dn) / vol;
      }
    }
  }
  m.build_residual = m.martingale_property_residual();
  return m;
}

struct BlochReport {
  double norm = 0;                       // sup over generations of the per-generation sup
  std::vector<double> per_generation;    // index n-1: generation n
};

// sup over adjacent same-generation cube pairs of the componentwise value gap
inline BlochReport bloch_norm(const VectorMartingale& m) {
  BlochReport rep;
  const int d = m.dim();
  for (int n = 1; n <= m.depth(); ++n) {
    double best = 0;
    int64_t side = int64_t(1) << n;
    for (size_t idx = 0; idx < m.cells(n); ++idx) {
      DyadicCube q = m.cube_of(n, idx);
      const Point& v = m.value(n, q);
      // scan the upper neighborhood only; adjacency is symmetric
      std::vector<int64_t> off(static_cast<size_t>(d), -1);
      while (true) {
        DyadicCube nb = q;
        bool ok = true, self = true;
        for (int i = 0; i < d; ++i) {
          nb.k[static_cast<size_t>(i)] += off[static_cast<size_t>(i)];
          if (off[static_cast<size_t>(i)] != 0) self = false;
          if (nb.k[static_cast<size_t>(i)] < 0 || nb.k[static_cast<size_t>(i)] >= side) ok = false;
        }
        if (ok && !self) {
          const Point& w = m.value(n, nb);
          for (int i = 0; i < d; ++i) best = std::max(best, std::fabs(v[i] - w[i]));
        }
        int i = 0;
        while (i < d && ++off[static_cast<size_t>(i)] > 1) {
          off[static_cast<size_t>(i)] = -1;
          ++i;
        }
        if (i == d) break;
      }
    }
    rep.per_generation.push_back(best);
    rep.norm = std::max(rep.norm, best);
  }
  return rep;
}

struct Polygonal {
  std::vector<Point> vertices;

  void validate(int dim) const {
    if (vertices.size() < 2) throw std::invalid_argument("polygonal: need >= 2 vertices");
    for (const auto& v : vertices) {
      if (v.dim != dim) throw std::invalid_argument("polygonal: dim mismatch");
      for (int i = 0; i < dim; ++i)
        if (v[i] < 0.0 || v[i] > 1.0) throw std::invalid_argument("polygonal: outside unit cube");
    }
    for (size_t i = 1; i < vertices.size(); ++i)
      if (norm(vertices[i] - vertices[i - 1]) == 0)
        throw std::invalid_argument("polygonal: repeated vertex");
  }
};

// Exact line integral of S_n along gamma: each segment is cut at generation-n
// grid hyperplanes, and each piece contributes <S_n(cube), direction> * piece length.
inline double line_integral(const VectorMartingale& m, int n, const Polygonal& gamma) {
  gamma.validate(m.dim());
  if (n < 0 || n > m.depth()) throw std::invalid_argument("line_integral: bad generation");
  double total = 0;
  for (size_t s = 1; s < gamma.vertices.size(); ++s) {
    const Point& p = gamma.vertices[s - 1];
    const Point& q = gamma.vertices[s];
    Point dir = q - p;
    std::vector<double> cuts = {0.0, 1.0};
    for (int i = 0; i < m.dim(); ++i) {
      if (dir[i] == 0.0) continue;
      double scale = std::ldexp(1.0, n);
      double a = p[i] * scale, b = q[i] * scale;
      int64_t lo = static_cast<int64_t>(std::ceil(std::min(a, b)));
      int64_t hi = static_cast<int64_t>(std::floor(std::max(a, b)));
      for (int64_t k = lo; k <= hi; ++k) {
        double t = (static_cast<double>(k) / scale - p[i]) / dir[i];
        if (t > 0.0 && t < 1.0) cuts.push_back(t);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (size_t c = 1; c < cuts.size(); ++c) {
      double t0 = cuts[c - 1], t1 = cuts[c];
      if (t1 <= t0) continue;
      Point mid = p + (0.5 * (t0 + t1)) * dir;
      const Point& v = m.at(n, mid);
      total += dot(v, dir) * (t1 - t0);
    }
  }
  return total;
}

// |int_gamma S_{n+k} - int_gamma S_n| for gamma inside the closure of Q
// joining two different parallel faces of Q; n is the level of Q.
inline double conservative_defect(const VectorMartingale& m, const DyadicCube& q,
                                  const Polygonal& gamma, int k) {
  gamma.validate(m.dim());
  if (k < 0 || q.level + k > m.depth())
    throw std::invalid_argument("conservative_defect: generation out of range");
  // endpoints must lie on two different parallel faces
  const Point& a = gamma.vertices.front();
  const Point& b = gamma.vertices.back();
  Point lo = q.origin();
  double l = q.side();
  bool spans = false;
  for (int i = 0; i < m.dim(); ++i) {
    bool a_lo = a[i] == lo[i], a_hi = a[i] == lo[i] + l;
    bool b_lo = b[i] == lo[i], b_hi = b[i] == lo[i] + l;
    if ((a_lo && b_hi) || (a_hi && b_lo)) spans = true;
  }
  if (!spans)
    throw std::invalid_argument("conservative_defect: polygonal must join two parallel faces of Q");
  for (const auto& v : gamma.vertices)
    for (int i = 0; i < m.dim(); ++i)
      if (v[i] < lo[i] || v[i] > lo[i] + l)
        throw std::invalid_argument("conservative_defect: polygonal leaves the closure of Q");
  double a1 = line_integral(m, q.level + k, gamma);
  double a0 = line_integral(m, q.level, gamma);
  return std::fabs(a1 - a0);
}

// Deepest-generation cubes whose whole ancestry keeps ||S_n|| <= threshold.
inline std::vector<DyadicCube> boundedness_set(const VectorMartingale& m, double threshold) {
  if (!(threshold > 0)) throw std::invalid_argument("boundedness_set: threshold > 0");
  std::vector<DyadicCube> frontier;
  if (norm(m.value(0, DyadicCube::root(m.dim()))) <= threshold)
    frontier.push_back(DyadicCube::root(m.dim()));
  for (int n = 1; n <= m.depth() && !frontier.empty(); ++n) {
    std::vector<DyadicCube> next;
    for (const auto& q : frontier)
      for (unsigned mask = 0; mask < (1u << m.dim()); ++mask) {
        DyadicCube c = q.child(mask);
        if (norm(m.value(n, c)) <= threshold) next.push_back(c);
      }
    frontier = std::move(next);
  }
  std::sort(frontier.begin(), frontier.end());
  return frontier;
}

// Axis-biased random polygonal inside Q joining the two faces orthogonal to
// `axis`; seeded and reproducible.
inline Polygonal random_admissible_polygonal(const DyadicCube& q, int axis, Rng& rng,
                                             int interior_vertices = 2) {
  Polygonal g;
  Point lo = q.origin();
  double l = q.side();
  Point a = lo;
  for (int i = 0; i < q.dim; ++i)
    if (i != axis) a[i] = lo[i] + l * rng.uniform01();
  a[axis] = lo[axis];
  g.vertices.push_back(a);
  for (int v = 0; v < interior_vertices; ++v) {
    Point p = lo;
    double frac = (v + 1.0) / (interior_vertices + 1.0);
    double ax = std::min(0.999, std::max(0.001, frac + 0.3 * (rng.uniform01() - 0.5)));
    p[axis] = lo[axis] + l * ax;
    for (int i = 0; i < q.dim; ++i)
      if (i != axis) p[i] = lo[i] + l * rng.uniform01();
    g.vertices.push_back(p);
  }
  Point b = lo;
  b[axis] = lo[axis] + l;
  for (int i = 0; i < q.dim; ++i)
    if (i != axis) b[i] = lo[i] + l * rng.uniform01();
  g.vertices.push_back(b);
  return g;
}

}  // namespace zyg
