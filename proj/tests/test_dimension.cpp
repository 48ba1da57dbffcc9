#include <catch2/catch_amalgamated.hpp>

#include "zyg/dimension.hpp"

using namespace zyg;
using Catch::Approx;

TEST_CASE("dimension formula") {
  // s=1, eta0=1/4, K0=1/2 matches the similarity dimension log2/log4
  REQUIRE(dimension_formula(1.0, 0.25, 0.5) == 0.5);

  // K0 = eta0^s cancels to zero
  REQUIRE(dimension_formula(1.0, 0.3, 0.3) == Approx(0.0).margin(1e-15));

  // K0 -> 1- pushes alpha -> s-
  REQUIRE(dimension_formula(1.0, 0.5, 0.999) == Approx(1.0).epsilon(0.01));
  REQUIRE(dimension_formula(1.0, 0.5, 0.999) < 1.0);

  REQUIRE_THROWS_AS(dimension_formula(1.0, 0.5, 0.25), std::invalid_argument);
  REQUIRE_THROWS_AS(dimension_formula(1.0, 0.5, 1.5), std::invalid_argument);
}

TEST_CASE("uniform binary splitting gives masses 2^-(n-1)") {
  // d=1, every cube two children of equal length
  std::vector<GenerationFamily> gens(4);
  gens[0].index = 1;
  gens[0].cubes.push_back(DyadicCube(1, 0, {0}));
  for (int n = 1; n < 4; ++n) {
    gens[n].index = n + 1;
    for (const auto& par : gens[n - 1].cubes) {
      for (const auto& c : par.children()) {
        gens[n].cubes.push_back(c);
        gens[n].parent_links[c] = par;
      }
    }
  }
  MassMeasure mu = build_mass_measure(gens, 1.0);
  for (int n = 0; n < 4; ++n) {
    for (const auto& q : gens[n].cubes) {
      REQUIRE(mu.mass(q) == Rational(1, 1 << n));
    }
  }
  REQUIRE(mu.conservation_defect() == 0.0);
}

TEST_CASE("children of lengths l and 2l split mass 1:2 at s=1") {
  std::vector<GenerationFamily> gens(2);
  gens[0].index = 1;
  DyadicCube root(1, 0, {0});
  gens[0].cubes.push_back(root);
  gens[1].index = 2;
  DyadicCube small(1, 2, {0});  // length 1/4
  DyadicCube big(1, 1, {1});    // length 1/2
  gens[1].cubes = {small, big};
  gens[1].parent_links[small] = root;
  gens[1].parent_links[big] = root;
  MassMeasure mu = build_mass_measure(gens, 1.0);
  REQUIRE(mu.mass(small) == Rational(1, 3));
  REQUIRE(mu.mass(big) == Rational(2, 3));
}

TEST_CASE("ratio-1/4 cantor masses match a brute-force tree walk") {
  auto gens = cantor_quarter_fixture(7);
  MassMeasure mu = build_mass_measure(gens, 1.0);

  // oracle: unroll the recursion by hand; equal halves at every step
  for (int n = 0; n < 7; ++n) {
    Rational expect(1, int64_t(1) << n);
    for (const auto& q : gens[static_cast<size_t>(n)].cubes) REQUIRE(mu.mass(q) == expect);
  }
  REQUIRE(mu.conservation_defect() == 0.0);
}

TEST_CASE("childless interior cube is an error") {
  std::vector<GenerationFamily> gens(2);
  gens[0].index = 1;
  gens[0].cubes.push_back(DyadicCube(1, 1, {0}));
  gens[0].cubes.push_back(DyadicCube(1, 1, {1}));
  gens[1].index = 2;
  DyadicCube c(1, 2, {0});
  gens[1].cubes.push_back(c);
  gens[1].parent_links[c] = gens[0].cubes[0];
  REQUIRE_THROWS_AS(build_mass_measure(gens, 1.0), std::invalid_argument);
}

TEST_CASE("overlapping generation cubes are rejected") {
  std::vector<GenerationFamily> gens(1);
  gens[0].index = 1;
  gens[0].cubes.push_back(DyadicCube(1, 0, {0}));
  gens[0].cubes.push_back(DyadicCube(1, 1, {0}));
  REQUIRE_THROWS_AS(build_mass_measure(gens, 1.0), std::invalid_argument);
}

TEST_CASE("frostman audit of the ratio-1/4 cantor at alpha = 1/2") {
  auto gens = cantor_quarter_fixture(7);  // deepest level 12
  MassMeasure mu = build_mass_measure(gens, 1.0);
  FrostmanReport rep = frostman_audit(mu, 0.5, 12);
  REQUIRE(rep.max_ratio <= 10.0);
  REQUIRE(rep.max_ratio >= 1.0);  // generation cubes achieve ratio 1

  // depth must reach the deepest generation
  REQUIRE_THROWS_AS(frostman_audit(mu, 0.5, 5), std::invalid_argument);
}

TEST_CASE("frostman audit detects an overclaimed alpha") {
  // at alpha + 0.2 the ratio grows geometrically with depth
  auto shallow = build_mass_measure(cantor_quarter_fixture(4), 1.0);
  auto deep = build_mass_measure(cantor_quarter_fixture(7), 1.0);
  double r1 = frostman_audit(shallow, 0.7, 6).max_ratio;
  double r2 = frostman_audit(deep, 0.7, 12).max_ratio;
  REQUIRE(r2 > 2.0 * r1);
}

TEST_CASE("single-cube generations at alpha = 0 have ratio exactly 1") {
  std::vector<GenerationFamily> gens(3);
  DyadicCube q(1, 0, {0});
  for (int n = 0; n < 3; ++n) {
    gens[n].index = n + 1;
    DyadicCube c(1, n, {0});
    gens[n].cubes.push_back(c);
    if (n > 0) gens[n].parent_links[c] = gens[n - 1].cubes[0];
  }
  MassMeasure mu = build_mass_measure(gens, 1.0);
  FrostmanReport rep = frostman_audit(mu, 0.0, 4);
  REQUIRE(rep.max_ratio == 1.0);
}

TEST_CASE("box counts") {
  // unit square sampled densely at scale 2^-k gives 4^k boxes
  std::vector<Point> pts;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j)
      pts.push_back(Point{(i + 0.5) / 64.0, (j + 0.5) / 64.0});
  for (int k = 1; k <= 4; ++k)
    REQUIRE(box_count(pts, k) == (int64_t(1) << (2 * k)));

  // single point: one box at every scale
  std::vector<Point> one = {Point{0.37, 0.61}};
  for (int k = 0; k <= 10; ++k) REQUIRE(box_count(one, k) == 1);

  // ratio-1/4 cantor family: counts 2^k at the construction scales 2^-2k
  auto gens = cantor_quarter_fixture(7);
  const auto& deepest = gens.back().cubes;
  for (int g = 1; g <= 6; ++g)
    REQUIRE(box_count(deepest, 2 * g) == (int64_t(1) << g));

  // refinement monotonicity: each level-k cube meets <= 2^d level-(k+1) cubes
  for (int k = 2; k < 12; ++k) {
    int64_t a = box_count(deepest, k), b = box_count(deepest, k + 1);
    REQUIRE(b >= a);
    REQUIRE(b <= (int64_t(1) << 1) * a);  // d = 1
  }
}

TEST_CASE("boxdim fit") {
  // counts 4^k at scales 2^-k: slope 2 exactly
  std::vector<std::pair<double, int64_t>> counts;
  for (int k = 1; k <= 6; ++k) counts.emplace_back(std::ldexp(1.0, -k), int64_t(1) << (2 * k));
  BoxFit fit = boxdim_fit(counts);
  REQUIRE(fit.slope == Approx(2.0).margin(1e-12));
  REQUIRE(fit.residual <= 1e-12);

  // counts c*2^{k/2}: slope 1/2 by log-linear algebra
  counts.clear();
  for (int k = 2; k <= 12; k += 2)
    counts.emplace_back(std::ldexp(1.0, -k), int64_t(3) * (int64_t(1) << (k / 2)));
  REQUIRE(boxdim_fit(counts).slope == Approx(0.5).margin(1e-12));

  // degenerate constant counts
  counts = {{0.5, 7}, {0.25, 7}, {0.125, 7}};
  BoxFit flat = boxdim_fit(counts);
  REQUIRE(flat.degenerate);
  REQUIRE(flat.slope == 0.0);

  // ratio-1/4 cantor: slope 0.5 +- 0.05 over scales 2^-2..2^-12
  auto gens = cantor_quarter_fixture(7);
  const auto& deepest = gens.back().cubes;
  counts.clear();
  for (int k = 2; k <= 12; ++k)
    counts.emplace_back(std::ldexp(1.0, -k), box_count(deepest, k));
  BoxFit cf = boxdim_fit(counts);
  REQUIRE(cf.slope == Approx(0.5).margin(0.05));
}

TEST_CASE("measure-formula consistency on the fixture") {
  // measured constants of the fixture: eta0 = 1/4, K0 = 1/2, Ktilde = 1;
  // the audit at alpha = dimension_formula stays below the proof constant
  // 3^s Ktilde eta0^{-log K0/log eta0}
  auto gens = cantor_quarter_fixture(7);
  MassMeasure mu = build_mass_measure(gens, 1.0);
  double alpha = dimension_formula(1.0, 0.25, 0.5);
  double proof_c = 3.0 * 1.0 * std::pow(0.25, -std::log2(0.5) / std::log2(0.25));
  FrostmanReport rep = frostman_audit(mu, alpha, 12);
  REQUIRE(rep.max_ratio <= proof_c * (1 + 1e-9));
}
