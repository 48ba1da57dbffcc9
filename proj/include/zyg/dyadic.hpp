#pragma once

// Exact integer geometry for half-open dyadic cubes
//
//   [k1/2^n, (k1+1)/2^n) x ... x [kd/2^n, (kd+1)/2^n),  k_i in Z, n >= 0.
//
// Cube coordinates are 64-bit integers, so nesting/adjacency/containment up
// to level 60 are exact. Real coordinates appear only at evaluation
// boundaries (origin(), center(), locate()). Boundary points belong to the
// cube on their lower side, i.e. a cube owns its lower faces.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace zyg {

inline constexpr int kMaxDim = 4;
inline constexpr int kMaxLevel = 60;

struct Point {
  int dim = 0;
  std::array<double, kMaxDim> x{};

  Point() = default;
  explicit Point(int d) : dim(d) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("Point: dim out of range");
  }
  Point(std::initializer_list<double> v) : dim(static_cast<int>(v.size())) {
    if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("Point: dim out of range");
    int i = 0;
    for (double c : v) x[i++] = c;
  }
  static Point zeros(int d) { return Point(d); }

  double& operator[](int i) { return x[static_cast<size_t>(i)]; }
  double operator[](int i) const { return x[static_cast<size_t>(i)]; }

  bool finite() const {
    for (int i = 0; i < dim; ++i)
      if (!std::isfinite(x[static_cast<size_t>(i)])) return false;
    return true;
  }
};

inline Point operator+(const Point& a, const Point& b) {
  Point r(a.dim);
  for (int i = 0; i < a.dim; ++i) r[i] = a[i] + b[i];
  return r;
}
inline Point operator-(const Point& a, const Point& b) {
  Point r(a.dim);
  for (int i = 0; i < a.dim; ++i) r[i] = a[i] - b[i];
  return r;
}
inline Point operator*(double s, const Point& a) {
  Point r(a.dim);
  for (int i = 0; i < a.dim; ++i) r[i] = s * a[i];
  return r;
}
inline double dot(const Point& a, const Point& b) {
  double s = 0;
  for (int i = 0; i < a.dim; ++i) s += a[i] * b[i];
  return s;
}
inline double norm2(const Point& a) { return dot(a, a); }
inline double norm(const Point& a) { return std::sqrt(norm2(a)); }
inline double norm_inf(const Point& a) {
  double m = 0;
  for (int i = 0; i < a.dim; ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}
inline Point unit(const Point& a) {
  double n = norm(a);
  if (n == 0) throw std::invalid_argument("unit: zero vector");
  return (1.0 / n) * a;
}
inline Point axis_vector(int dim, int axis, double s = 1.0) {
  Point r(dim);
  r[axis] = s;
  return r;
}

// Axis-aligned box [lo, hi].
struct Box {
  Point lo, hi;
  int dim() const { return lo.dim; }
  bool contains(const Point& p, bool closed = true) const {
    for (int i = 0; i < lo.dim; ++i) {
      if (closed ? (p[i] < lo[i] || p[i] > hi[i]) : (p[i] <= lo[i] || p[i] >= hi[i]))
        return false;
    }
    return true;
  }
  Point center() const { return 0.5 * (lo + hi); }
  static Box unit(int d) {
    Box b;
    b.lo = Point::zeros(d);
    b.hi = Point::zeros(d);
    for (int i = 0; i < d; ++i) b.hi[i] = 1.0;
    return b;
  }
};

struct DyadicCube {
  int dim = 0;
  int level = 0;
  std::array<int64_t, kMaxDim> k{};

  DyadicCube() = default;
  DyadicCube(int d, int n, std::initializer_list<int64_t> coords) : dim(d), level(n) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("DyadicCube: dim out of range");
    if (n < 0 || n > kMaxLevel) throw std::invalid_argument("DyadicCube: level out of range");
    if (static_cast<int>(coords.size()) != d) throw std::invalid_argument("DyadicCube: coord count");
    int i = 0;
    for (int64_t c : coords) k[static_cast<size_t>(i++)] = c;
  }
  static DyadicCube root(int d) { return DyadicCube(d, 0, d == 1 ? std::initializer_list<int64_t>{0} : d == 2 ? std::initializer_list<int64_t>{0, 0} : d == 3 ? std::initializer_list<int64_t>{0, 0, 0} : std::initializer_list<int64_t>{0, 0, 0, 0}); }

  double side() const { return std::ldexp(1.0, -level); }

  Point origin() const {
    Point p(dim);
    for (int i = 0; i < dim; ++i) p[i] = std::ldexp(static_cast<double>(k[static_cast<size_t>(i)]), -level);
    return p;
  }
  Point center() const {
    Point p(dim);
    for (int i = 0; i < dim; ++i)
      p[i] = std::ldexp(static_cast<double>(k[static_cast<size_t>(i)]) + 0.5, -level);
    return p;
  }

  DyadicCube parent() const {
    if (level == 0) throw std::logic_error("parent of level-0 cube");
    DyadicCube q;
    q.dim = dim;
    q.level = level - 1;
    for (int i = 0; i < dim; ++i) {
      int64_t c = k[static_cast<size_t>(i)];
      // floor division by 2
      q.k[static_cast<size_t>(i)] = (c >= 0) ? c / 2 : (c - 1) / 2;
    }
    return q;
  }

  DyadicCube child(unsigned mask) const {
    if (level >= kMaxLevel) throw std::logic_error("child below max level");
    DyadicCube q;
    q.dim = dim;
    q.level = level + 1;
    for (int i = 0; i < dim; ++i)
      q.k[static_cast<size_t>(i)] = 2 * k[static_cast<size_t>(i)] + ((mask >> i) & 1u);
    return q;
  }
  std::vector<DyadicCube> children() const {
    std::vector<DyadicCube> out;
    out.reserve(static_cast<size_t>(1) << dim);
    for (unsigned m = 0; m < (1u << dim); ++m) out.push_back(child(m));
    return out;
  }

  DyadicCube ancestor(int lvl) const {
    if (lvl > level || lvl < 0) throw std::invalid_argument("ancestor: bad level");
    DyadicCube q;
    q.dim = dim;
    q.level = lvl;
    int shift = level - lvl;
    for (int i = 0; i < dim; ++i) {
      int64_t c = k[static_cast<size_t>(i)];
      q.k[static_cast<size_t>(i)] = (c >= 0) ? (c >> shift) : ~((~c) >> shift);
    }
    return q;
  }

  bool contains_cube(const DyadicCube& q) const {
    if (q.dim != dim || q.level < level) return false;
    return q.ancestor(level) == *this;
  }
  bool contains_point(const Point& p) const {
    for (int i = 0; i < dim; ++i) {
      double s = std::ldexp(p[i], level);
      double c = static_cast<double>(k[static_cast<size_t>(i)]);
      if (s < c || s >= c + 1.0) return false;
    }
    return true;
  }

  friend bool operator==(const DyadicCube& a, const DyadicCube& b) {
    if (a.dim != b.dim || a.level != b.level) return false;
    for (int i = 0; i < a.dim; ++i)
      if (a.k[static_cast<size_t>(i)] != b.k[static_cast<size_t>(i)]) return false;
    return true;
  }
  friend bool operator!=(const DyadicCube& a, const DyadicCube& b) { return !(a == b); }
  friend bool operator<(const DyadicCube& a, const DyadicCube& b) {
    if (a.level != b.level) return a.level < b.level;
    for (int i = 0; i < a.dim; ++i) {
      if (a.k[static_cast<size_t>(i)] != b.k[static_cast<size_t>(i)])
        return a.k[static_cast<size_t>(i)] < b.k[static_cast<size_t>(i)];
    }
    return false;
  }

  std::string str() const {
    std::string s = "L" + std::to_string(level) + "(";
    for (int i = 0; i < dim; ++i)
      s += std::to_string(k[static_cast<size_t>(i)]) + (i + 1 < dim ? "," : ")");
    return s;
  }
};

struct CubeHash {
  size_t operator()(const DyadicCube& q) const {
    uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<uint64_t>(q.level);
    for (int i = 0; i < q.dim; ++i) {
      uint64_t v = static_cast<uint64_t>(q.k[static_cast<size_t>(i)]);
      v *= 0xbf58476d1ce4e5b9ull;
      v ^= v >> 31;
      h = (h ^ v) * 0x94d049bb133111ebull;
    }
    return static_cast<size_t>(h ^ (h >> 29));
  }
};

// Unique level-n dyadic cube containing x: k_i = floor(x_i * 2^n).
inline DyadicCube locate(const Point& x, int n) {
  if (n < 0 || n > kMaxLevel) throw std::invalid_argument("locate: level out of range");
  if (!x.finite()) throw std::invalid_argument("locate: non-finite point");
  DyadicCube q;
  q.dim = x.dim;
  q.level = n;
  for (int i = 0; i < x.dim; ++i) {
    double s = std::ldexp(x[i], n);
    if (std::fabs(s) >= 4.6e18) throw std::invalid_argument("locate: coordinate overflow");
    q.k[static_cast<size_t>(i)] = static_cast<int64_t>(std::floor(s));
  }
  return q;
}

// The 2^d corner points x + l(Q)*(eps_1 e_1 + ... + eps_d e_d), eps in {0,1}.
inline std::vector<Point> vertexes(const DyadicCube& q) {
  Point o = q.origin();
  double l = q.side();
  std::vector<Point> out;
  out.reserve(static_cast<size_t>(1) << q.dim);
  for (unsigned m = 0; m < (1u << q.dim); ++m) {
    Point p = o;
    for (int i = 0; i < q.dim; ++i)
      if ((m >> i) & 1u) p[i] += l;
    out.push_back(p);
  }
  return out;
}

// Closed neighbor relation at equal level: closures intersect iff all
// coordinate offsets are in {-1, 0, 1}.
inline bool adjacent(const DyadicCube& a, const DyadicCube& b) {
  if (a.dim != b.dim) throw std::invalid_argument("adjacent: dim mismatch");
  if (a.level != b.level) throw std::invalid_argument("adjacent: level mismatch");
  for (int i = 0; i < a.dim; ++i) {
    int64_t d = a.k[static_cast<size_t>(i)] - b.k[static_cast<size_t>(i)];
    if (d < -1 || d > 1) return false;
  }
  return true;
}

// Concentric box with sidelength factor * l(Q); factor 3 is the "3R" cube,
// factor 1/2 the half-cube used by the descent construction.
inline Box dilate(const DyadicCube& q, double factor) {
  if (!(factor > 0)) throw std::invalid_argument("dilate: factor must be positive");
  Point c = q.center();
  double h = 0.5 * factor * q.side();
  Box b;
  b.lo = Point(q.dim);
  b.hi = Point(q.dim);
  for (int i = 0; i < q.dim; ++i) {
    b.lo[i] = c[i] - h;
    b.hi[i] = c[i] + h;
  }
  return b;
}

// Euclidean distance from a point to the closed cube.
inline double dist_to_cube(const Point& p, const DyadicCube& q) {
  Point o = q.origin();
  double l = q.side();
  double s = 0;
  for (int i = 0; i < q.dim; ++i) {
    double d = 0;
    if (p[i] < o[i]) d = o[i] - p[i];
    else if (p[i] > o[i] + l) d = p[i] - (o[i] + l);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace zyg
