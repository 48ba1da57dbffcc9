#pragma once

// Stagewise construction of a small-Zygmund function on R^2 whose gradient
// sums diverge off a thin exceptional set. Each stage k lays a sawtooth
// profile phi_k across a grid of cubes of side 2^-N_k, oriented along a unit
// vector orthogonal to the accumulated gradient at each cube center, and
// glued by plateau bumps. Quantifiers are chosen greedily at a configured
// fraction (default 1/2) of their admissible bounds; the grid resolution N_k
// comes from an analytic Lipschitz bound on grad f_k, confirmed by a sampled
// oscillation audit.
//
// Numerics: stage resolutions reach 2^-50 and below by stage three, so cube
// coordinates are manipulated in ldexp-scaled integer space, audits sample
// stage-adapted regions near the origin where the grid is resolvable in
// doubles, and tooth counts n_k are stored as integer-valued doubles (they
// exceed 2^63 by stage three).

#include <cmath>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "zyg/dyadic.hpp"
#include "zyg/field.hpp"
#include "zyg/rng.hpp"

namespace zyg {

// sup alpha*||grad w|| for the smoothstep plateau bump in d = 2
inline constexpr double kBumpGradConstant = 2.1213203435596426;  // 1.5 * sqrt(2)

struct StageParams {
  int stage = 0;          // k
  double eps = 0;         // eps_k
  double eta = 0;         // eta_k
  int resolution = 0;     // N_k
  double alpha = 0;       // alpha_k
  double sigma = 0;       // sigma_k
  double teeth = 0;       // n_k (integer-valued double)
  double beta = 0;        // beta_k
  double grad_sup = 0;    // analytic bound on sup||grad f_k|| entering the stage
  double g_grad_sup = 0;  // analytic bound on sup||grad g_{k+1}||
  double lip_after = 0;   // analytic Lipschitz bound on grad f_{k+1}
  double continuity_audit_max = 0;  // sampled max oscillation of grad f_k at scale 2^-N_k
};

struct QuantifierSchedule {
  std::vector<StageParams> stages;
  double fraction = 0.5;
  double bump_c = 1.0;  // C(d) in the beta bound

  // Re-derives every inequality family from the emitted numbers alone.
  std::vector<std::string> audit() const {
    std::vector<std::string> bad;
    auto fail = [&](int k, const std::string& what) {
      bad.push_back("stage " + std::to_string(k) + ": " + what);
    };
    double sq_partial = 0, prev_sq = 0, prev_eps = 2.0;
    for (const auto& s : stages) {
      if (!(s.eps > 0 && s.eps <= 1)) fail(s.stage, "eps outside (0,1]");
      if (!(s.eps < prev_eps)) fail(s.stage, "eps not decreasing");
      prev_eps = s.eps;
      sq_partial += s.eps * s.eps;
      if (!(sq_partial > prev_sq)) fail(s.stage, "sum eps^2 not strictly increasing");
      prev_sq = sq_partial;
      if (!(s.eta <= s.eps * s.eps * s.eps)) fail(s.stage, "eta > eps^3");
      if (s.grad_sup > 0 && !(s.eta < std::exp2(-s.stage) / s.grad_sup))
        fail(s.stage, "eta >= 2^-k / M_k");
      if (!(s.alpha < std::ldexp(1.0, -(s.resolution + 2)))) fail(s.stage, "alpha >= 2^-(N+2)");
      if (!(s.sigma < s.eps * s.alpha * s.eta / (1.0 + s.grad_sup)))
        fail(s.stage, "sigma >= eps*alpha*eta/(1+M)");
      if (!(s.teeth > 2.0 / s.sigma)) fail(s.stage, "n <= 2/sigma");
      if (!(s.beta < bump_c * std::ldexp(1.0, -s.resolution) / s.teeth))
        fail(s.stage, "beta >= C(d) 2^-N / n");
      if (!(s.continuity_audit_max < s.eta)) fail(s.stage, "continuity audit at 2^-N reached eta");
    }
    // sum_{j>=k} sigma_j <= 2 sigma_k
    for (size_t k = 0; k < stages.size(); ++k) {
      double tail = 0;
      for (size_t j = k; j < stages.size(); ++j) tail += stages[j].sigma;
      if (!(tail <= 2.0 * stages[k].sigma)) fail(static_cast<int>(k), "sigma tail > 2 sigma_k");
    }
    return bad;
  }
};

// exact sawtooth  psi(t) = eps * inf_i |t - i/n|
inline double psi(double t, double eps, double n) {
  if (!(n >= 1) || !(eps > 0)) throw std::invalid_argument("psi: need n >= 1, eps > 0");
  double u = t * n;
  return eps * std::fabs(u - std::round(u)) / n;
}

// C^1 smoothing of psi: parabolic caps of width beta at valleys and peaks,
// |phi'| = eps on the remaining linear pieces, period 1/n.
class Profile {
 public:
  double eps = 0, sigma = 0, n = 0, beta = 0;

  Profile() = default;
  Profile(double eps_, double sigma_, double n_, double beta_)
      : eps(eps_), sigma(sigma_), n(n_), beta(beta_) {
    if (!(beta < 0.5 / n)) throw std::invalid_argument("profile: corner caps overlap");
    if (!(eps / (2.0 * n) <= sigma)) throw std::invalid_argument("profile: sup bound exceeds sigma");
  }

  // distance to the nearest valley in t-units, in [0, 1/(2n)]
  double tooth_dist(double t, double& sgn) const {
    double u = t * n - std::round(t * n);
    sgn = (u >= 0) ? 1.0 : -1.0;
    return std::fabs(u) / n;
  }

  double value(double t) const {
    double sgn;
    double d = tooth_dist(t, sgn);
    double half = beta / 2.0;
    double peak = 0.5 / n;
    if (d < half) return eps * beta / 4.0 + eps * d * d / beta;
    if (d > peak - half) {
      double r = peak - d;
      return eps / (2.0 * n) - eps * beta / 4.0 - eps * r * r / beta;
    }
    return eps * d;
  }

  double deriv(double t) const {
    double sgn;
    double d = tooth_dist(t, sgn);
    double half = beta / 2.0;
    double peak = 0.5 / n;
    if (d < half) return sgn * 2.0 * eps * d / beta;
    if (d > peak - half) return sgn * 2.0 * eps * (peak - d) / beta;
    return sgn * eps;
  }

  // |phi'| < eps only within beta/2 of a corner; the cover widens to beta
  bool in_corner(double t, double widen = 1.0) const {
    double r = t * (2.0 * n);
    return std::fabs(r - std::round(r)) < widen * beta * n;
  }

  double sup_value() const { return eps / (2.0 * n) - eps * beta / 4.0; }
  double corners_per_two_units() const { return 4.0 * n; }
};

inline Profile smooth_profile(double eps, double sigma, double n, double beta) {
  return Profile(eps, sigma, n, beta);
}

// plateau bump on [-h, h]^2, h = 2^{-N-1}: 1 on the inner square shrunk by
// alpha, 0 outside, smoothstep ramps
class Bump {
 public:
  int resolution = 0;
  double alpha = 0, half = 0;

  Bump() = default;
  Bump(int N, double alpha_) : resolution(N), alpha(alpha_), half(std::ldexp(1.0, -N - 1)) {
    if (!(alpha > 0 && alpha < std::ldexp(1.0, -N - 2)))
      throw std::invalid_argument("bump: need 0 < alpha < 2^-(N+2)");
  }

  // 1-d plateau profile and derivative
  double u(double t) const {
    double d = (half - std::fabs(t)) / alpha;
    if (d <= 0) return 0.0;
    if (d >= 1) return 1.0;
    return d * d * (3.0 - 2.0 * d);
  }
  double du(double t) const {
    double d = (half - std::fabs(t)) / alpha;
    if (d <= 0 || d >= 1) return 0.0;
    double s = (t >= 0) ? -1.0 : 1.0;  // d(half - |t|)/dt
    return s * 6.0 * d * (1.0 - d) / alpha;
  }

  double value(double y0, double y1) const { return u(y0) * u(y1); }
  Point gradient(double y0, double y1) const {
    return Point{du(y0) * u(y1), u(y0) * du(y1)};
  }
};

struct BumpEval {
  double value;
  Point gradient;
};

// standalone bump evaluation relative to a center, as used by unit audits
inline BumpEval bump(const Point& x, const Point& center, int N, double alpha) {
  Bump b(N, alpha);
  double y0 = x[0] - center[0], y1 = x[1] - center[1];
  return {b.value(y0, y1), b.gradient(y0, y1)};
}

namespace detail {

struct CellKey {
  int64_t kx, ky;
  bool operator==(const CellKey& o) const { return kx == o.kx && ky == o.ky; }
};
struct CellKeyHash {
  size_t operator()(const CellKey& c) const {
    uint64_t h = splitmix64(static_cast<uint64_t>(c.kx));
    h ^= splitmix64(static_cast<uint64_t>(c.ky) + 0x9e3779b97f4a7c15ull);
    return static_cast<size_t>(h);
  }
};

}  // namespace detail

// One construction stage: the grid, profile, bump, and cached unit normals
// e(a_j) orthogonal to grad f_k at cell centers.
class Stage {
 public:
  StageParams params;
  Profile phi;
  Bump bump;

  Stage(const StageParams& p, std::function<Point(const Point&)> prev_gradient)
      : params(p),
        phi(p.eps, p.sigma, p.teeth, p.beta),
        bump(p.resolution, p.alpha),
        prev_gradient_(std::move(prev_gradient)) {}

  struct Local {
    int64_t kx, ky;      // cell coords at level N
    double y0, y1;       // offset from the cell center
    Point e;             // cell normal
    double s;            // <y, e>
  };

  Local locate_local(const Point& x) const {
    const int N = params.resolution;
    Local loc;
    double tx = std::ldexp(x[0], N), ty = std::ldexp(x[1], N);
    double fx = std::floor(tx), fy = std::floor(ty);
    loc.kx = static_cast<int64_t>(fx);
    loc.ky = static_cast<int64_t>(fy);
    loc.y0 = std::ldexp(tx - fx - 0.5, -N);
    loc.y1 = std::ldexp(ty - fy - 0.5, -N);
    loc.e = normal(loc.kx, loc.ky);
    loc.s = loc.y0 * loc.e[0] + loc.y1 * loc.e[1];
    return loc;
  }

  double value(const Point& x) const {
    Local loc = locate_local(x);
    return bump.value(loc.y0, loc.y1) * phi.value(loc.s);
  }

  Point gradient(const Point& x) const {
    Local loc = locate_local(x);
    double w = bump.value(loc.y0, loc.y1);
    double ph = phi.value(loc.s);
    double dph = phi.deriv(loc.s);
    Point gw = bump.gradient(loc.y0, loc.y1);
    return Point{ph * gw[0] + w * dph * loc.e[0], ph * gw[1] + w * dph * loc.e[1]};
  }

  // frame-or-strip membership for the stage's exceptional set
  bool covers(const Point& x) const {
    Local loc = locate_local(x);
    double edge = bump.half - params.alpha;
    if (std::fabs(loc.y0) > edge || std::fabs(loc.y1) > edge) return true;
    return phi.in_corner(loc.s, /*widen=*/2.0);
  }

  Point normal(int64_t kx, int64_t ky) const {
    detail::CellKey key{kx, ky};
    {
      std::shared_lock lock(mutex_);
      auto it = normals_.find(key);
      if (it != normals_.end()) return it->second;
    }
    const int N = params.resolution;
    Point center{std::ldexp(static_cast<double>(kx) + 0.5, -N),
                 std::ldexp(static_cast<double>(ky) + 0.5, -N)};
    Point g = prev_gradient_(center);
    Point e{1.0, 0.0};
    double nn = norm(g);
    if (nn >= 1e-12) e = Point{-g[1] / nn, g[0] / nn};
    std::unique_lock lock(mutex_);
    normals_.emplace(key, e);
    return e;
  }

  size_t cached_normals() const {
    std::shared_lock lock(mutex_);
    return normals_.size();
  }

 private:
  std::function<Point(const Point&)> prev_gradient_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<detail::CellKey, Point, detail::CellKeyHash> normals_;
};

// The partial sums f_k = g_1 + ... + g_k (g_0 = 0).
class StagedFunction {
 public:
  int stage_count() const { return static_cast<int>(stages_.size()); }
  const Stage& stage(int k) const { return *stages_[static_cast<size_t>(k)]; }
  std::vector<std::shared_ptr<const Stage>> stage_ptrs() const { return stages_; }
  const QuantifierSchedule& schedule() const { return schedule_; }

  // f_upto: sum of g_1..g_upto; upto = -1 means all stages
  double value(const Point& x, int upto = -1) const {
    int kk = upto < 0 ? stage_count() : upto;
    double v = 0;
    for (int j = 0; j < kk; ++j) v += stages_[static_cast<size_t>(j)]->value(x);
    return v;
  }
  Point gradient(const Point& x, int upto = -1) const {
    int kk = upto < 0 ? stage_count() : upto;
    Point g{0.0, 0.0};
    for (int j = 0; j < kk; ++j) {
      Point s = stages_[static_cast<size_t>(j)]->gradient(x);
      g[0] += s[0];
      g[1] += s[1];
    }
    return g;
  }
  double stage_value(int k, const Point& x) const { return stages_[static_cast<size_t>(k)]->value(x); }
  Point stage_gradient(int k, const Point& x) const {
    return stages_[static_cast<size_t>(k)]->gradient(x);
  }
  bool in_cover(int k, const Point& x) const { return stages_[static_cast<size_t>(k)]->covers(x); }

  ScalarField as_field(int upto = -1) const {
    auto self = stages_;
    int kk = upto < 0 ? static_cast<int>(stages_.size()) : upto;
    double scale = 0;
    for (int j = 0; j < kk; ++j) scale += stages_[static_cast<size_t>(j)]->params.sigma;
    double slop = 1e-15 * (1.0 + scale);
    return ScalarField(2, [self, kk, slop](const Point& x) {
      double v = 0;
      for (int j = 0; j < kk; ++j) v += self[static_cast<size_t>(j)]->value(x);
      return FieldEval{v, slop};
    });
  }

  void push(std::shared_ptr<const Stage> s, const StageParams& p) {
    stages_.push_back(std::move(s));
    schedule_.stages.push_back(p);
  }
  void set_config(double fraction, double bump_c) {
    schedule_.fraction = fraction;
    schedule_.bump_c = bump_c;
  }

 private:
  std::vector<std::shared_ptr<const Stage>> stages_;
  QuantifierSchedule schedule_;
};

struct BuilderConfig {
  double fraction = 0.5;       // each quantifier at this fraction of its bound
  int min_resolution = 2;      // N floor (stage 0 with f_0 = 0 uses it directly)
  double bump_c = 1.0;         // C(d) in the beta constraint
  uint64_t seed = 1;
  int continuity_pairs = 2000; // sampled sufficient check of the N_k condition
  int max_resolution = 58;
};

// audit region where the level-N grid is still resolvable in doubles
inline Box stage_audit_region(int resolution) {
  double hw = std::min(1.0, std::ldexp(1.0, 42 - resolution));
  Box b;
  b.lo = Point{0.0, 0.0};
  b.hi = Point{hw, hw};
  return b;
}

// Builds K stages for the given eps sequence. Quantifier order per stage:
// eta from (eps, M_k); N from the Lipschitz bound plus a sampled check;
// alpha; sigma; n; beta.
inline StagedFunction build_stages(const std::vector<double>& epsilons,
                                   const BuilderConfig& config = {}) {
  if (epsilons.empty()) throw std::invalid_argument("build_stages: empty eps sequence");
  StagedFunction fn;
  fn.set_config(config.fraction, config.bump_c);
  double grad_sup = 0;  // M_k bound
  double lip = 0;       // Lipschitz bound on grad f_k
  double prev_eps = 2.0, prev_sigma = 0;

  for (size_t k = 0; k < epsilons.size(); ++k) {
    double eps = epsilons[k];
    if (!(eps > 0 && eps <= 1)) throw std::invalid_argument("build_stages: eps outside (0,1]");
    if (!(eps < prev_eps)) throw std::invalid_argument("build_stages: eps must decrease");
    prev_eps = eps;

    StageParams p;
    p.stage = static_cast<int>(k);
    p.eps = eps;
    p.grad_sup = grad_sup;
    double cap = eps * eps * eps;
    if (grad_sup > 0) cap = std::min(cap, std::exp2(-static_cast<double>(k)) / grad_sup);
    p.eta = config.fraction * cap;

    // resolution: analytic candidate, then the sampled oscillation check
    int N = config.min_resolution;
    if (lip > 0)
      N = std::max(N, static_cast<int>(std::ceil(std::log2(lip / p.eta))) + 1);
    auto grad_fk = [&fn, k](const Point& x) { return fn.gradient(x, static_cast<int>(k)); };
    for (;; ++N) {
      if (N > config.max_resolution)
        throw std::runtime_error("build_stages: resolution exceeds double-precision budget");
      Box region = stage_audit_region(N);
      Rng rng(derive_seed(config.seed, 0xc017 + k));
      double worst = 0;
      double scale = std::ldexp(1.0, -N);
      for (int i = 0; i < config.continuity_pairs; ++i) {
        Point x = rng.point_in(region);
        Point d = (rng.uniform01() * scale) * rng.unit_vector(2);
        worst = std::max(worst, norm(grad_fk(x + d) - grad_fk(x)));
      }
      if (worst < p.eta * 0.999) {
        p.continuity_audit_max = worst;
        break;
      }
    }
    p.resolution = N;

    p.alpha = config.fraction * std::ldexp(1.0, -(N + 2));
    p.sigma = config.fraction * eps * p.alpha * p.eta / (1.0 + grad_sup);
    if (k > 0) p.sigma = std::min(p.sigma, 0.5 * prev_sigma);
    prev_sigma = p.sigma;
    p.teeth = std::max(4.0, std::ceil((2.0 / p.sigma) * (1.0 + 1e-9)) + 1.0);
    p.beta = config.fraction * config.bump_c * std::ldexp(1.0, -N) / p.teeth;

    p.g_grad_sup = kBumpGradConstant * p.sigma / p.alpha + eps;
    p.lip_after = lip + 2.0 * eps / p.beta + 2.0 * kBumpGradConstant * eps / p.alpha +
                  16.5 * p.sigma / (p.alpha * p.alpha);

    // the new stage owns its predecessors, so the gradient chain stays valid
    // however the function object is copied
    std::vector<std::shared_ptr<const Stage>> chain = fn.stage_ptrs();
    auto frozen = std::make_shared<Stage>(
        p, [chain](const Point& x) {
          Point g{0.0, 0.0};
          for (const auto& s : chain) {
            Point v = s->gradient(x);
            g[0] += v[0];
            g[1] += v[1];
          }
          return g;
        });
    fn.push(frozen, p);
    grad_sup += p.g_grad_sup;
    lip = p.lip_after;
  }
  return fn;
}

// ---------------------------------------------------------------------------
// Exceptional cover

// length of the chord {y in [-s/2,s/2]^2 : <y,e> = c}
inline double square_chord_length(double side, const Point& e, double c) {
  // clip the line to the square; parametrize by the tangent direction
  Point t{-e[1], e[0]};
  double h = side / 2.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 2; ++i) {
    // coordinate i along the line: c*e[i] + u*t[i] must stay in [-h, h]
    if (std::fabs(t[i]) < 1e-300) {
      if (std::fabs(c * e[i]) > h) return 0.0;
      continue;
    }
    double a = (-h - c * e[i]) / t[i];
    double b = (h - c * e[i]) / t[i];
    lo = std::max(lo, std::min(a, b));
    hi = std::min(hi, std::max(a, b));
  }
  return std::max(0.0, hi - lo);
}

struct CoverReport {
  int stage = 0;
  Box region;
  uint64_t cells = 0;
  int frame_level = 0;          // covering level for frames (side ~ alpha)
  int strip_level = 0;          // covering level for strips (side ~ 2 beta)
  double frame_content = 0;     // sum of cube sidelengths over the frame cover
  double strip_content = 0;     // idem for strips, chord-length based
  uint64_t active_strips = 0;   // corner hyperplanes meeting some cell
  double formal_strips_per_cell = 0;  // the 4n count over [-1,1]
  std::vector<DyadicCube> cubes;      // explicit cover when materializable
  bool materialized = false;
};

struct CoverOptions {
  uint64_t max_cells = 1 << 16;
  uint64_t materialize_limit = 0;  // 0: report content only
};

// Explicit description of the stage-k exceptional set within a region:
// per-cell frames Q \ (1 - 2^{N+1} alpha) Q plus the strips around the
// profile's corner hyperplanes. Contents are measured at the covering
// levels; the cube list is filled only under the materialization cap.
inline CoverReport exceptional_cover(const StagedFunction& fn, int k, const Box& region,
                                     const CoverOptions& opts = {}) {
  const Stage& st = fn.stage(k);
  const int N = st.params.resolution;
  CoverReport rep;
  rep.stage = k;
  rep.region = region;
  rep.formal_strips_per_cell = st.phi.corners_per_two_units();
  rep.frame_level = std::min(kMaxLevel, static_cast<int>(std::ceil(-std::log2(st.params.alpha))));
  rep.strip_level =
      std::min(kMaxLevel, static_cast<int>(std::ceil(-std::log2(2.0 * st.params.beta))));

  DyadicCube lo_cell = locate(region.lo, N);
  DyadicCube hi_cell = locate(Point{std::nextafter(region.hi[0], -1e300),
                                    std::nextafter(region.hi[1], -1e300)},
                              N);
  uint64_t nx = static_cast<uint64_t>(hi_cell.k[0] - lo_cell.k[0] + 1);
  uint64_t ny = static_cast<uint64_t>(hi_cell.k[1] - lo_cell.k[1] + 1);
  if (nx * ny > opts.max_cells)
    throw std::invalid_argument("exceptional_cover: region holds " + std::to_string(nx * ny) +
                                " cells at level " + std::to_string(N) +
                                "; shrink the region or raise max_cells");
  rep.cells = nx * ny;

  const double side = st.bump.half * 2.0;
  const double delta_frame = std::ldexp(1.0, -rep.frame_level);
  const double delta_strip = std::ldexp(1.0, -rep.strip_level);
  const bool materialize = opts.materialize_limit > 0;

  for (int64_t cx = lo_cell.k[0]; cx <= hi_cell.k[0]; ++cx) {
    for (int64_t cy = lo_cell.k[1]; cy <= hi_cell.k[1]; ++cy) {
      Point e = st.normal(cx, cy);
      // frame: ring of width alpha inside the cell boundary, covered by a
      // one-cube-deep layer at the frame level
      double cubes_along = side / delta_frame;
      double ring_rows = std::ceil(st.params.alpha / delta_frame);
      double frame_cubes = 4.0 * (cubes_along + 1.0) * ring_rows;
      rep.frame_content += frame_cubes * delta_frame;

      // strips: corner hyperplanes <y, e> = i/(2n) crossing the cell
      double reach = (std::fabs(e[0]) + std::fabs(e[1])) * side / 2.0;
      double spacing = 0.5 / st.phi.n;
      double max_index = std::floor(reach / spacing);
      // enumerate only when the count is sane; otherwise integrate the
      // chord-length profile (the strips are far below double resolution
      // anyway once n is astronomically large)
      if (max_index <= 4e6) {
        for (int64_t i = -static_cast<int64_t>(max_index); i <= static_cast<int64_t>(max_index);
             ++i) {
          double c = static_cast<double>(i) * spacing;
          double chord = square_chord_length(side, e, c);
          if (chord <= 0) continue;
          ++rep.active_strips;
          double along = std::ceil(chord / delta_strip) + 1.0;
          double across = std::ceil(2.0 * st.params.beta / delta_strip) + 1.0;
          rep.strip_content += along * across * delta_strip;
        }
      } else {
        // average chord over offsets times strip count
        rep.active_strips += static_cast<uint64_t>(2.0 * max_index) + 1;
        double avg_chord = side * side / (2.0 * reach);  // area / offset range
        rep.strip_content += (2.0 * max_index + 1.0) * (avg_chord + 2.0 * delta_strip);
      }

      if (materialize) {
        // frame cubes: one layer per cell edge at the frame level
        int64_t per = static_cast<int64_t>(std::ldexp(1.0, rep.frame_level - N));
        for (int64_t i = 0; i <= per; ++i) {
          for (int64_t row = 0; row < static_cast<int64_t>(ring_rows); ++row) {
            int64_t bx = cx * per, by = cy * per;
            auto push = [&](int64_t x, int64_t y) {
              if (rep.cubes.size() < opts.materialize_limit) {
                DyadicCube c;
                c.dim = 2;
                c.level = rep.frame_level;
                c.k[0] = x;
                c.k[1] = y;
                rep.cubes.push_back(c);
              }
            };
            int64_t ii = std::min(i, per - 1);
            push(bx + ii, by + row);
            push(bx + ii, by + per - 1 - row);
            push(bx + row, by + ii);
            push(bx + per - 1 - row, by + ii);
          }
        }
        rep.materialized = rep.cubes.size() < opts.materialize_limit;
      }
    }
  }
  if (materialize) {
    std::sort(rep.cubes.begin(), rep.cubes.end());
    rep.cubes.erase(std::unique(rep.cubes.begin(), rep.cubes.end()), rep.cubes.end());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Stage audits

struct StageAudit {
  int stage = 0;
  Box region;
  uint64_t samples = 0;
  double rejection_rate = 0;       // fraction of draws landing in the cover
  double supnorm_max = 0;          // max |g_{k+1}| over all draws
  double supnorm_bound = 0;        // (d-1) sigma_k
  uint64_t supnorm_violations = 0;
  double orth_max = 0;             // max |<grad f_k, grad g_{k+1}>| off cover
  double orth_ratio = 0;           // orth_max / (eps_k sqrt(eta_k))
  double orth_ratio_batch2 = 0;
  double min_gradg_off = 0;        // min ||grad g_{k+1}|| off cover
  double min_sq_increment = 0;     // min (||grad f_{k+1}||^2 - ||grad f_k||^2)/eps^2
  uint64_t cover_escapes = 0;      // ||grad g|| < eps/2 while off cover
  double dd_probe_defect = 0;      // paragraph-14 probe at offset sigma_k
  double dd_probe_bound = 0;       // 2 eta_k + 2(d-1)
};

inline StageAudit growth_audit(const StagedFunction& fn, int k, uint64_t samples, uint64_t seed) {
  const Stage& st = fn.stage(k);
  const StageParams& p = st.params;
  StageAudit audit;
  audit.stage = k;
  audit.region = stage_audit_region(p.resolution);
  audit.supnorm_bound = p.sigma;  // (d-1) sigma with d = 2
  audit.dd_probe_bound = 2.0 * p.eta + 2.0;
  audit.min_gradg_off = std::numeric_limits<double>::infinity();
  audit.min_sq_increment = std::numeric_limits<double>::infinity();

  auto run_batch = [&](uint64_t batch_seed, bool primary) {
    Rng rng(batch_seed);
    uint64_t accepted = 0, rejected = 0;
    double orth_max = 0;
    while (accepted < samples) {
      Point x = rng.point_in(audit.region);
      double g_abs = std::fabs(fn.stage_value(k, x));
      if (primary) {
        audit.supnorm_max = std::max(audit.supnorm_max, g_abs);
        if (g_abs > audit.supnorm_bound) ++audit.supnorm_violations;
      }
      if (fn.in_cover(k, x)) {
        ++rejected;
        if (rejected > 50 * samples + 1000)
          throw std::runtime_error("growth_audit: cover rejects nearly all samples");
        continue;
      }
      ++accepted;
      Point gf = fn.gradient(x, k);
      Point gg = fn.stage_gradient(k, x);
      double ip = std::fabs(dot(gf, gg));
      orth_max = std::max(orth_max, ip);
      if (primary) {
        double ng = norm(gg);
        audit.min_gradg_off = std::min(audit.min_gradg_off, ng);
        if (ng < 0.5 * p.eps) ++audit.cover_escapes;
        Point gf1{gf[0] + gg[0], gf[1] + gg[1]};
        double inc = (norm2(gf1) - norm2(gf)) / (p.eps * p.eps);
        audit.min_sq_increment = std::min(audit.min_sq_increment, inc);
        // divided-difference probe along grad f_k at offset sigma_k
        double nf = norm(gf);
        if (nf > 1e-12) {
          Point u{gf[0] / nf, gf[1] / nf};
          Point z = x + p.sigma * u;
          double dd = (fn.value(z) - fn.value(x)) / p.sigma;
          if (norm(z - x) == 0.0) dd = 0.0;  // offset below double resolution
          audit.dd_probe_defect = std::max(audit.dd_probe_defect, std::fabs(dd - nf));
        }
      }
    }
    if (primary) {
      audit.samples = accepted;
      audit.rejection_rate =
          static_cast<double>(rejected) / static_cast<double>(accepted + rejected);
    }
    return orth_max;
  };

  audit.orth_max = run_batch(derive_seed(seed, 0xa0d1 + static_cast<uint64_t>(k)), true);
  double denom = p.eps * std::sqrt(p.eta);
  audit.orth_ratio = audit.orth_max / denom;
  double second = run_batch(derive_seed(seed, 0xb0d2 + static_cast<uint64_t>(k)), false);
  audit.orth_ratio_batch2 = second / denom;
  return audit;
}

struct ShellAudit {
  struct Shell {
    int j = 0;              // shell index: 2^-N_{j+1} < |h| <= 2^-N_j
    double max_ratio = 0;   // sampled max |D2 f_{k+1}(x,h)| / |h|
    double bound = 0;       // sum_{i=j..k} eta_i + 2 G_j
    int scales_sampled = 0;
    bool ok = true;
  };
  std::vector<Shell> shells;
  bool all_ok = true;
};

// Second-difference audit of f_{k+1} shell by shell; offsets are exact
// dyadics and sampling stays above the double-precision noise floor.
inline ShellAudit shell_zygmund_audit(const StagedFunction& fn, int upto, uint64_t samples_per_scale,
                                      uint64_t seed, int noise_floor_exp = 40) {
  ShellAudit audit;
  const auto& st = fn.schedule().stages;
  int k = upto - 1;  // f_{k+1} = f_upto
  for (int j = 0; j < k; ++j) {
    ShellAudit::Shell shell;
    shell.j = j;
    int hi = st[static_cast<size_t>(j)].resolution;      // |h| <= 2^-N_j
    int lo = st[static_cast<size_t>(j + 1)].resolution;  // |h| > 2^-N_{j+1}
    double bound = 2.0 * st[static_cast<size_t>(j)].g_grad_sup;
    for (int i = j; i <= k; ++i) bound += st[static_cast<size_t>(i)].eta;
    shell.bound = bound;
    Rng rng(derive_seed(seed, 0x5e11 + static_cast<uint64_t>(j)));
    for (int m = hi + 1; m <= std::min(lo, noise_floor_exp); ++m) {
      ++shell.scales_sampled;
      double h = std::ldexp(1.0, -m);
      for (uint64_t i = 0; i < samples_per_scale; ++i) {
        // x on a grid two levels finer than h so x +- h is exact
        double gx = std::ldexp(1.0, -(m + 12));
        Point x{std::floor(rng.uniform(2.0 * h, 0.5) / gx) * gx,
                std::floor(rng.uniform(2.0 * h, 0.5) / gx) * gx};
        int axis = static_cast<int>(rng.index(2));
        Point hp{0.0, 0.0};
        hp[axis] = h;
        double d2 = fn.value(x + hp, upto) + fn.value(x - hp, upto) - 2.0 * fn.value(x, upto);
        shell.max_ratio = std::max(shell.max_ratio, std::fabs(d2) / h);
      }
    }
    shell.ok = shell.max_ratio <= shell.bound;
    audit.all_ok &= shell.ok;
    audit.shells.push_back(shell);
  }
  return audit;
}

}  // namespace zyg
