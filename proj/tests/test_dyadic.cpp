#include <catch2/catch_amalgamated.hpp>

#include "zyg/dyadic.hpp"
#include "zyg/rng.hpp"

using namespace zyg;

TEST_CASE("locate picks the floor cube") {
  DyadicCube q = locate(Point{0.3, 0.7}, 1);
  REQUIRE(q.level == 1);
  REQUIRE(q.k[0] == 0);
  REQUIRE(q.k[1] == 1);

  DyadicCube q3 = locate(Point{0.3, 0.7}, 3);
  REQUIRE(q3.k[0] == 2);
  REQUIRE(q3.k[1] == 5);

  for (int n : {0, 1, 5, 17}) {
    DyadicCube o = locate(Point::zeros(3), n);
    REQUIRE(o.level == n);
    for (int i = 0; i < 3; ++i) REQUIRE(o.k[static_cast<size_t>(i)] == 0);
  }
}

TEST_CASE("locate handles negative coordinates") {
  DyadicCube q = locate(Point{-0.3}, 1);
  REQUIRE(q.k[0] == -1);
  REQUIRE(q.contains_point(Point{-0.3}));
}

TEST_CASE("vertexes of the unit square") {
  DyadicCube q(2, 0, {0, 0});
  auto vs = vertexes(q);
  REQUIRE(vs.size() == 4);
  std::vector<std::pair<double, double>> expect = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (auto [a, b] : expect) {
    bool found = false;
    for (const auto& v : vs) found |= (v[0] == a && v[1] == b);
    REQUIRE(found);
  }
}

TEST_CASE("vertexes at level 1 and in 1-d") {
  DyadicCube q(2, 1, {1, 1});
  auto vs = vertexes(q);
  bool seen_origin = false, seen_far = false;
  for (const auto& v : vs) {
    seen_origin |= (v[0] == 0.5 && v[1] == 0.5);
    seen_far |= (v[0] == 1.0 && v[1] == 1.0);
  }
  REQUIRE(seen_origin);
  REQUIRE(seen_far);

  DyadicCube s(1, 2, {3});
  auto vs1 = vertexes(s);
  REQUIRE(vs1.size() == 2);
  REQUIRE(vs1[0][0] == 0.75);
  REQUIRE(vs1[1][0] == 1.0);
}

TEST_CASE("adjacency by corner touch and gaps") {
  DyadicCube a(2, 3, {0, 0}), b(2, 3, {1, 1}), c(2, 3, {2, 0});
  REQUIRE(adjacent(a, b));
  REQUIRE(!adjacent(a, c));
  REQUIRE(adjacent(a, a));
  REQUIRE_THROWS_AS(adjacent(a, DyadicCube(2, 4, {0, 0})), std::invalid_argument);
}

TEST_CASE("adjacency is symmetric with brute-force neighbor counts on a 4x4 grid") {
  std::vector<DyadicCube> grid;
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j) grid.push_back(DyadicCube(2, 2, {i, j}));
  for (const auto& a : grid) {
    int n = 0;
    for (const auto& b : grid) {
      REQUIRE(adjacent(a, b) == adjacent(b, a));
      if (adjacent(a, b) && a != b) ++n;
    }
    REQUIRE(n <= 8);  // 3^2 - 1
    bool interior = a.k[0] > 0 && a.k[0] < 3 && a.k[1] > 0 && a.k[1] < 3;
    if (interior) REQUIRE(n == 8);
  }
}

TEST_CASE("dilate") {
  DyadicCube q(2, 0, {0, 0});
  Box b1 = dilate(q, 1.0);
  REQUIRE(b1.lo[0] == 0.0);
  REQUIRE(b1.hi[1] == 1.0);

  Box b3 = dilate(q, 3.0);
  REQUIRE(b3.lo[0] == -1.0);
  REQUIRE(b3.hi[0] == 2.0);

  Box bh = dilate(q, 0.5);
  REQUIRE(bh.lo[0] == 0.25);
  REQUIRE(bh.hi[0] == 0.75);

  REQUIRE_THROWS_AS(dilate(q, 0.0), std::invalid_argument);
}

TEST_CASE("round-trip and nesting properties") {
  Rng rng(42);
  Box region;
  region.lo = Point{-2.0, -2.0};
  region.hi = Point{3.0, 3.0};
  for (int it = 0; it < 100000; ++it) {
    Point x = rng.point_in(region);
    int n = rng.uniform_int(0, 30);
    DyadicCube q = locate(x, n);
    REQUIRE(q.contains_point(x));
    if (n > 0) {
      DyadicCube up = locate(x, n - 1);
      REQUIRE(q.parent() == up);
      REQUIRE(up.contains_cube(q));
    }
    // locate of an interior point returns the same cube
    Point c = q.center();
    REQUIRE(locate(c, n) == q);
  }
}

TEST_CASE("children partition the parent") {
  DyadicCube q(3, 4, {3, -5, 9});
  auto cs = q.children();
  REQUIRE(cs.size() == 8);
  for (const auto& c : cs) {
    REQUIRE(c.level == q.level + 1);
    REQUIRE(c.parent() == q);
    REQUIRE(q.contains_cube(c));
  }
  // distinct
  for (size_t i = 0; i < cs.size(); ++i)
    for (size_t j = i + 1; j < cs.size(); ++j) REQUIRE(cs[i] != cs[j]);
}

TEST_CASE("ancestor arithmetic is exact for negative coords") {
  DyadicCube q(2, 6, {-37, 41});
  DyadicCube a = q.ancestor(2);
  DyadicCube walk = q;
  for (int i = 0; i < 4; ++i) walk = walk.parent();
  REQUIRE(a == walk);
}
