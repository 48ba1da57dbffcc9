#include <catch2/catch_amalgamated.hpp>

#include "zyg/martingale.hpp"

using namespace zyg;
using Catch::Approx;

namespace {
WeierstrassParams w2() {
  WeierstrassParams p;
  p.b = 2;
  return p;
}
}  // namespace

TEST_CASE("linear field: S is the coefficient vector on every cube") {
  Point c{2.0, -1.5};
  ScalarField f = linear_field(c, 0.25);
  VectorMartingale m = face_integral_martingale(f, 4);
  for (int n = 0; n <= 4; ++n) {
    for (size_t idx = 0; idx < m.cells(n); ++idx) {
      const Point& v = m.value(n, m.cube_of(n, idx));
      REQUIRE(v[0] == Approx(c[0]).margin(1e-11));
      REQUIRE(v[1] == Approx(c[1]).margin(1e-11));
    }
  }
  REQUIRE(m.build_residual <= 1e-10);
}

TEST_CASE("constant field: S vanishes") {
  ScalarField f = linear_field(Point{0.0, 0.0}, 3.7);
  VectorMartingale m = face_integral_martingale(f, 3);
  for (int n = 0; n <= 3; ++n)
    for (size_t idx = 0; idx < m.cells(n); ++idx)
      REQUIRE(norm(m.value(n, m.cube_of(n, idx))) <= 1e-12);
}

TEST_CASE("tensor weierstrass martingale satisfies the martingale property") {
  ScalarField f = tensor_sum_field(w2(), 2);
  VectorMartingale m = face_integral_martingale(f, 6);
  REQUIRE(m.build_residual <= 1e-9);
}

TEST_CASE("quadrature fallback matches the exact edge path") {
  // strip the edge hook to force quadrature, then compare
  ScalarField exact = tensor_sum_field(w2(), 2);
  ScalarField noquad(2, [exact](const Point& x) { return exact(x); });
  VectorMartingale a = face_integral_martingale(exact, 3);
  VectorMartingale b = face_integral_martingale(noquad, 3, 1e-8);
  for (int n = 0; n <= 3; ++n)
    for (size_t idx = 0; idx < a.cells(n); ++idx) {
      const Point& va = a.value(n, a.cube_of(n, idx));
      const Point& vb = b.value(n, b.cube_of(n, idx));
      REQUIRE(norm(va - vb) <= 2e-4);
    }
}

TEST_CASE("bloch norm of hand-built depth-3 scalar trees") {
  // brute-force oracle over all adjacent pairs at each generation
  VectorMartingale m(1, 3);
  Rng rng(5);
  // random martingale: assign leaves, average upward
  for (size_t idx = 0; idx < m.cells(3); ++idx)
    m.value(3, m.cube_of(3, idx))[0] = rng.uniform(-2, 2);
  for (int n = 2; n >= 0; --n)
    for (size_t idx = 0; idx < m.cells(n); ++idx) {
      DyadicCube q = m.cube_of(n, idx);
      double s = 0;
      for (unsigned msk = 0; msk < 2; ++msk) s += m.value(n + 1, q.child(msk))[0];
      m.value(n, q)[0] = s / 2.0;
    }
  REQUIRE(m.martingale_property_residual() <= 1e-14);

  BlochReport rep = bloch_norm(m);
  double oracle = 0;
  for (int n = 1; n <= 3; ++n) {
    int64_t side = int64_t(1) << n;
    for (int64_t i = 0; i < side; ++i)
      for (int64_t j = 0; j < side; ++j)
        if (std::llabs(i - j) == 1) {
          double d = std::fabs(m.value(n, DyadicCube(1, n, {i}))[0] -
                               m.value(n, DyadicCube(1, n, {j}))[0]);
          oracle = std::max(oracle, d);
        }
    (void)side;
  }
  REQUIRE(rep.norm == Approx(oracle).margin(1e-14));

  // constant-per-generation martingale has Bloch norm zero
  VectorMartingale flat(2, 2);
  for (int n = 0; n <= 2; ++n)
    for (size_t idx = 0; idx < flat.cells(n); ++idx) {
      flat.value(n, flat.cube_of(n, idx))[0] = 3.0;
      flat.value(n, flat.cube_of(n, idx))[1] = -1.0;
    }
  REQUIRE(bloch_norm(flat).norm == 0.0);
}

TEST_CASE("line integrals of constant martingales obey the gradient theorem") {
  VectorMartingale m(2, 3);
  Point c{1.5, -0.5};
  for (int n = 0; n <= 3; ++n)
    for (size_t idx = 0; idx < m.cells(n); ++idx) m.value(n, m.cube_of(n, idx)) = c;
  Polygonal g;
  g.vertices = {Point{0.1, 0.2}, Point{0.6, 0.1}, Point{0.9, 0.8}};
  double li = line_integral(m, 3, g);
  REQUIRE(li == Approx(dot(c, g.vertices.back() - g.vertices.front())).margin(1e-13));

  // closed polygon integrates to zero
  Polygonal closed;
  closed.vertices = {Point{0.1, 0.1}, Point{0.7, 0.2}, Point{0.4, 0.8}, Point{0.1, 0.1}};
  REQUIRE(line_integral(m, 2, closed) == Approx(0.0).margin(1e-13));
}

TEST_CASE("line integral matches a hand decomposition across two cubes") {
  VectorMartingale m(2, 2);
  // depth-2, only generation 1 is queried: set values by quadrant
  m.value(1, DyadicCube(2, 1, {0, 0})) = Point{1.0, 0.0};
  m.value(1, DyadicCube(2, 1, {1, 0})) = Point{3.0, 0.0};
  m.value(1, DyadicCube(2, 1, {0, 1})) = Point{5.0, 0.0};
  m.value(1, DyadicCube(2, 1, {1, 1})) = Point{7.0, 0.0};
  Polygonal g;
  g.vertices = {Point{0.25, 0.25}, Point{0.75, 0.25}};
  // hand decomposition: 0.25 length in cube (0,0) value 1, 0.25 in cube (1,0) value 3
  double expect = 0.25 * 1.0 + 0.25 * 3.0;
  REQUIRE(line_integral(m, 1, g) == Approx(expect).margin(1e-14));
}

TEST_CASE("line integral additivity over concatenation") {
  ScalarField f = tensor_sum_field(w2(), 2);
  VectorMartingale m = face_integral_martingale(f, 5);
  Polygonal whole;
  whole.vertices = {Point{0.1, 0.9}, Point{0.5, 0.5}, Point{0.8, 0.2}};
  Polygonal first, second;
  first.vertices = {whole.vertices[0], whole.vertices[1]};
  second.vertices = {whole.vertices[1], whole.vertices[2]};
  double a = line_integral(m, 4, whole);
  double b = line_integral(m, 4, first) + line_integral(m, 4, second);
  REQUIRE(a == Approx(b).margin(1e-13));
}

TEST_CASE("conservative defect vanishes for linear fields and k = 0") {
  ScalarField lin = linear_field(Point{2.0, 1.0});
  VectorMartingale m = face_integral_martingale(lin, 6);
  DyadicCube q(2, 1, {1, 0});
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    Polygonal g = random_admissible_polygonal(q, it % 2, rng);
    REQUIRE(conservative_defect(m, q, g, 0) == 0.0);
    REQUIRE(conservative_defect(m, q, g, 3) <= 1e-10);
  }
}

TEST_CASE("axis-segment specialization of the conservative property") {
  ScalarField f = tensor_sum_field(w2(), 2);
  VectorMartingale m = face_integral_martingale(f, 6);
  DyadicCube q0 = DyadicCube::root(2);
  Polygonal seg;
  seg.vertices = {Point{0.0, 0.375}, Point{1.0, 0.375}};
  for (int k = 1; k <= 4; ++k) {
    double defect = conservative_defect(m, q0, seg, k);
    // identity: defect equals |mean of <S_k, e1> along the segment - <S_0, e1>|
    double mean_k = line_integral(m, k, seg);
    double base = line_integral(m, 0, seg);
    REQUIRE(defect == Approx(std::fabs(mean_k - base)).margin(1e-13));
  }
}

TEST_CASE("conservative defect rejects non-spanning polygonals") {
  ScalarField lin = linear_field(Point{1.0, 0.0});
  VectorMartingale m = face_integral_martingale(lin, 3);
  DyadicCube q = DyadicCube::root(2);
  Polygonal bad;
  bad.vertices = {Point{0.2, 0.2}, Point{0.8, 0.8}};
  REQUIRE_THROWS_AS(conservative_defect(m, q, bad, 1), std::invalid_argument);
}

TEST_CASE("boundedness set") {
  VectorMartingale m(2, 3);
  Point c{1.0, 1.0};
  for (int n = 0; n <= 3; ++n)
    for (size_t idx = 0; idx < m.cells(n); ++idx) m.value(n, m.cube_of(n, idx)) = c;
  // threshold above ||c||: every deepest cube survives
  auto all = boundedness_set(m, 2.0);
  REQUIRE(all.size() == m.cells(3));
  // threshold below the generation-1 values: empty
  auto none = boundedness_set(m, 1.0);
  REQUIRE(none.empty());
}
