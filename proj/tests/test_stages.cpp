#include <catch2/catch_amalgamated.hpp>

#include "zyg/stages.hpp"

using namespace zyg;
using Catch::Approx;

namespace {
std::vector<double> eps3() {
  return {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(3.0), 0.5};
}
}  // namespace

TEST_CASE("psi: grid zeros, midpoint maximum, periodicity, exact slopes") {
  REQUIRE(psi(0.0, 0.5, 8) == 0.0);
  REQUIRE(psi(1.0 / 16.0, 0.5, 8) == Approx(0.5 / 16.0).margin(1e-16));
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    double t = rng.uniform(-2, 2);
    REQUIRE(psi(t + 1.0 / 8.0, 0.5, 8) == Approx(psi(t, 0.5, 8)).margin(1e-14));
    // evenness about grid midpoints
    REQUIRE(psi(1.0 / 16.0 + t, 0.5, 8) == Approx(psi(1.0 / 16.0 - t, 0.5, 8)).margin(1e-13));
  }
  // finite-difference slopes on the linear pieces are exactly +-eps
  for (int i = 0; i < 100; ++i) {
    double t = rng.uniform(0.01, 1.0 / 16.0 - 0.01);
    double d = 1e-7;
    double slope = (psi(t + d, 0.5, 8) - psi(t, 0.5, 8)) / d;
    REQUIRE(std::fabs(std::fabs(slope) - 0.5) <= 1e-12);
  }
}

TEST_CASE("profile: exact derivative off corners, smoothing at corners") {
  double eps = 0.5, n = 16, beta = 1.0 / 256.0, sigma = 0.02;
  Profile phi = smooth_profile(eps, sigma, n, beta);

  // midpoint between corners: untouched linear piece
  double mid = 1.0 / (4.0 * n);
  REQUIRE(std::fabs(phi.deriv(mid)) == eps);
  REQUIRE(phi.value(mid) == Approx(eps * mid).margin(1e-15));

  // corner centers: smoothed below eps, derivative zero
  REQUIRE(std::fabs(phi.deriv(0.0)) < eps);
  REQUIRE(std::fabs(phi.deriv(0.5 / n)) < 1e-12);

  // derivative is continuous across the clamp boundary
  double at = beta / 2.0;
  REQUIRE(phi.deriv(at - 1e-12) == Approx(phi.deriv(at + 1e-12)).margin(1e-6));

  // sup bound
  REQUIRE(phi.sup_value() <= sigma);
  REQUIRE(phi.sup_value() == Approx(eps / (2 * n)).epsilon(0.02));

  // declared bad-interval measure: 4n intervals of length beta per [-1,1]
  // measured by scanning where |phi'| != eps
  int hits = 0;
  const int grid = 400000;
  for (int i = 0; i < grid; ++i) {
    double t = -1.0 + 2.0 * i / grid;
    if (std::fabs(std::fabs(phi.deriv(t)) - eps) > 1e-12) ++hits;
  }
  double measured = 2.0 * hits / grid;
  REQUIRE(measured == Approx(4.0 * n * beta).epsilon(0.05));

  REQUIRE_THROWS_AS(smooth_profile(0.5, 0.02, 16.0, 0.04), std::invalid_argument);
}

TEST_CASE("bump: plateau, support, gradient constant") {
  int N = 3;
  double alpha = 0.25 * std::ldexp(1.0, -N - 2);
  Point center{0.5, 0.5};
  BumpEval at_center = bump(center, center, N, alpha);
  REQUIRE(at_center.value == 1.0);
  REQUIRE(norm(at_center.gradient) == 0.0);

  double h = std::ldexp(1.0, -N - 1);
  BumpEval outside = bump(Point{0.5 + h + 1e-9, 0.5}, center, N, alpha);
  REQUIRE(outside.value == 0.0);

  // dense 1-d profile scan: max alpha*|grad| <= the dimensional constant
  double cmax = 0;
  Bump b(N, alpha);
  for (int i = 0; i <= 100000; ++i) {
    double t = -h + 2.0 * h * i / 100000.0;
    cmax = std::max(cmax, alpha * std::fabs(b.du(t)));
  }
  REQUIRE(cmax <= 1.5 + 1e-9);
  REQUIRE(cmax == Approx(1.5).epsilon(0.01));
}

TEST_CASE("schedule for three stages passes every invariant family") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 800;
  StagedFunction fn = build_stages(eps3(), cfg);
  REQUIRE(fn.stage_count() == 3);
  auto bad = fn.schedule().audit();
  for (const auto& b : bad) INFO(b);
  REQUIRE(bad.empty());

  // stage 0 built on f_0 = 0: minimum resolution is admissible
  REQUIRE(fn.schedule().stages[0].resolution == cfg.min_resolution);
  // eps = (k+2)^{-1/2}: partial sums of eps^2 are 1/2, 1/2+1/3, ...
  const auto& st = fn.schedule().stages;
  REQUIRE(st[0].eps * st[0].eps == Approx(0.5).margin(1e-12));
  REQUIRE(st[1].eps * st[1].eps == Approx(1.0 / 3.0).margin(1e-12));

  REQUIRE_THROWS_AS(build_stages({0.5, 0.6}, cfg), std::invalid_argument);
}

TEST_CASE("stage 0 on f_0 = 0 uses the default normal everywhere") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 200;
  StagedFunction fn = build_stages({0.5}, cfg);
  const Stage& st = fn.stage(0);
  for (int64_t i = -2; i < 3; ++i)
    for (int64_t j = -2; j < 3; ++j) {
      Point e = st.normal(i, j);
      REQUIRE(e[0] == 1.0);
      REQUIRE(e[1] == 0.0);
    }
  // a globally coherent oscillation along one direction: g depends on x0
  // through the teeth while constant crossings happen along x1 inside a cell
  Point a{0.30000001, 0.3}, bpt{0.30000001, 0.31};
  REQUIRE(fn.stage_value(0, a) == Approx(fn.stage_value(0, bpt)).margin(1e-12));
}

TEST_CASE("stage normals are orthogonal to the previous gradient") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(3.0)}, cfg);
  const Stage& st1 = fn.stage(1);
  Rng rng(17);
  Box region = stage_audit_region(st1.params.resolution);
  for (int it = 0; it < 100; ++it) {
    Point x = rng.point_in(region);
    auto loc = st1.locate_local(x);
    Point center{std::ldexp(static_cast<double>(loc.kx) + 0.5, -st1.params.resolution),
                 std::ldexp(static_cast<double>(loc.ky) + 0.5, -st1.params.resolution)};
    Point g = fn.gradient(center, 1);
    REQUIRE(std::fabs(dot(g, loc.e)) <= 1e-9 * std::max(1.0, norm(g)));
    REQUIRE(norm(loc.e) == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("stage sup-norm bound has no violations") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  Rng rng(23);
  for (int k = 0; k < 3; ++k) {
    const StageParams& p = fn.schedule().stages[static_cast<size_t>(k)];
    Box region = stage_audit_region(p.resolution);
    double worst = 0;
    for (int i = 0; i < 20000; ++i) {
      Point x = rng.point_in(region);
      worst = std::max(worst, std::fabs(fn.stage_value(k, x)));
    }
    REQUIRE(worst <= p.sigma);  // (d-1) sigma_k, no tolerance
  }
}

TEST_CASE("off-cover gradient of a stage is exactly eps") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  Rng rng(29);
  for (int k = 0; k < 3; ++k) {
    const StageParams& p = fn.schedule().stages[static_cast<size_t>(k)];
    Box region = stage_audit_region(p.resolution);
    int accepted = 0;
    while (accepted < 2000) {
      Point x = rng.point_in(region);
      if (fn.in_cover(k, x)) continue;
      ++accepted;
      REQUIRE(norm(fn.stage_gradient(k, x)) == Approx(p.eps).margin(1e-9));
    }
  }
}

TEST_CASE("growth audit: stage 0 increment reduces to the squared lower bound") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  StageAudit a0 = growth_audit(fn, 0, 4000, 7);
  REQUIRE(a0.supnorm_violations == 0);
  REQUIRE(a0.cover_escapes == 0);
  // f_0 = 0: increment = ||grad g_1||^2 / eps^2 = 1 off cover
  REQUIRE(a0.min_sq_increment == Approx(1.0).margin(1e-9));
  REQUIRE(a0.orth_max <= 1e-12);
}

TEST_CASE("growth audit: later stages keep a positive increment constant") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  for (int k = 1; k < 3; ++k) {
    StageAudit a = growth_audit(fn, k, 3000, 11);
    const StageParams& p = fn.schedule().stages[static_cast<size_t>(k)];
    REQUIRE(a.supnorm_violations == 0);
    REQUIRE(a.cover_escapes == 0);
    REQUIRE(a.min_sq_increment > 0.3);
    // orthogonality against eps * sqrt(eta)
    REQUIRE(a.orth_max <= p.eps * std::sqrt(p.eta));
    REQUIRE(a.dd_probe_defect <= a.dd_probe_bound);
  }
}

TEST_CASE("exceptional cover: membership oracle agrees with raw geometry") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  Rng rng(31);
  for (int k = 0; k < 2; ++k) {
    const Stage& st = fn.stage(k);
    const StageParams& p = st.params;
    Box region = stage_audit_region(p.resolution);
    for (int i = 0; i < 4000; ++i) {
      Point x = rng.point_in(region);
      auto loc = st.locate_local(x);
      // independent oracle: frame via coordinates, strip via distance to the
      // corner grid of half-spacing 1/(2n)
      double edge = std::ldexp(1.0, -p.resolution - 1) - p.alpha;
      bool frame = std::fabs(loc.y0) > edge || std::fabs(loc.y1) > edge;
      double r = loc.s * 2.0 * p.teeth;
      bool strip = std::fabs(r - std::round(r)) < 2.0 * p.beta * p.teeth;
      REQUIRE(st.covers(x) == (frame || strip));
    }
  }
}

TEST_CASE("cover completeness: low-gradient points are covered") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  Rng rng(37);
  for (int k = 0; k < 3; ++k) {
    const StageParams& p = fn.schedule().stages[static_cast<size_t>(k)];
    Box region = stage_audit_region(p.resolution);
    for (int i = 0; i < 20000; ++i) {
      Point x = rng.point_in(region);
      if (norm(fn.stage_gradient(k, x)) < 0.5 * p.eps) REQUIRE(fn.in_cover(k, x));
    }
  }
}

TEST_CASE("cover content report") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  Box region;
  region.lo = Point{0.0, 0.0};
  region.hi = Point{1.0, 1.0};
  CoverReport rep = exceptional_cover(fn, 0, region);
  REQUIRE(rep.cells == 16);
  REQUIRE(rep.frame_content > 0);
  REQUIRE(rep.strip_content > 0);
  REQUIRE(rep.active_strips > 0);
  REQUIRE(!rep.materialized);

  // degenerate widths: the frame cover content approaches the frame skeleton
  // 1-content 4 * 2^-N per cell (one cube row per side)
  double per_cell_frame = rep.frame_content / 16.0;
  double skeleton = 4.0 * std::ldexp(1.0, -fn.stage(0).params.resolution);
  REQUIRE(per_cell_frame == Approx(skeleton).epsilon(0.35));

  // stage-1/2 covers over the full square exceed the cell cap
  REQUIRE_THROWS_AS(exceptional_cover(fn, 1, region), std::invalid_argument);
}

TEST_CASE("convergence tail: partial sums differ by at most twice the sigma tail") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  Rng rng(41);
  const auto& st = fn.schedule().stages;
  for (int i = 0; i < 5000; ++i) {
    Point x{rng.uniform01(), rng.uniform01()};
    double f3 = fn.value(x, 3), f1 = fn.value(x, 1), f2 = fn.value(x, 2);
    REQUIRE(std::fabs(f3 - f1) <= 2.0 * st[1].sigma);
    REQUIRE(std::fabs(f3 - f2) <= 2.0 * st[2].sigma);
  }
}

TEST_CASE("shell audit holds with decreasing per-shell bounds") {
  BuilderConfig cfg;
  cfg.continuity_pairs = 400;
  StagedFunction fn = build_stages(eps3(), cfg);
  ShellAudit audit = shell_zygmund_audit(fn, 3, 200, 43);
  REQUIRE(audit.shells.size() == 2);
  REQUIRE(audit.all_ok);
  for (const auto& s : audit.shells) {
    REQUIRE(s.scales_sampled > 0);
    REQUIRE(s.max_ratio <= s.bound);
  }
  // small-Zygmund trend: the shell bounds decrease
  REQUIRE(audit.shells[1].bound < audit.shells[0].bound);
}
