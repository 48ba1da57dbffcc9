#pragma once

// Nested cube generations, the recursive mass measure, the growth audit
// behind the mass distribution principle, and box-counting estimation.
//
// Masses satisfy  mu(Q) / l(Q)^s = mu(parent) / sum_children l^s  and are
// kept as exact rationals; the weights l(Q)^s are exact whenever s is an
// integer (the only case used by the headline pipeline is s = 1). For
// fractional s the weights are rationalized from their double values, which
// still makes per-family conservation exact by construction.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <map>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zyg/dyadic.hpp"

namespace zyg {

using Rational = boost::multiprecision::cpp_rational;

struct GenerationFamily {
  int index = 0;  // 1-based generation number
  std::vector<DyadicCube> cubes;
  std::unordered_map<DyadicCube, DyadicCube, CubeHash> parent_links;  // child -> generation n-1 cube
};

// alpha = s - log K0 / log eta0, the lower bound certified by the measure.
inline double dimension_formula(double s, double eta0, double K0) {
  if (!(eta0 > 0 && eta0 < K0 && K0 < 1))
    throw std::invalid_argument("dimension_formula: need 0 < eta0 < K0 < 1");
  if (!(s > 0)) throw std::invalid_argument("dimension_formula: need s > 0");
  return s - std::log2(K0) / std::log2(eta0);
}

namespace detail {

inline Rational dyadic_weight(int level, double s) {
  double si;
  if (std::modf(s, &si) == 0.0 && s >= 0) {
    // l^s = 2^{-level*s} exactly
    Rational r(1);
    r /= Rational(boost::multiprecision::cpp_int(1) << static_cast<unsigned>(level * static_cast<int>(s)));
    return r;
  }
  return Rational(std::exp2(-static_cast<double>(level) * s));
}

}  // namespace detail

class MassMeasure {
 public:
  MassMeasure(std::vector<GenerationFamily> gens,
              std::vector<std::unordered_map<DyadicCube, Rational, CubeHash>> masses)
      : gens_(std::move(gens)), masses_(std::move(masses)) {}

  int generations() const { return static_cast<int>(gens_.size()); }
  const GenerationFamily& family(int n) const { return gens_[static_cast<size_t>(n)]; }

  const Rational& mass(const DyadicCube& q) const {
    for (auto it = masses_.rbegin(); it != masses_.rend(); ++it) {
      auto f = it->find(q);
      if (f != it->end()) return f->second;
    }
    throw std::invalid_argument("mass: cube not in any generation");
  }

  // mu of an arbitrary cube: sum of deepest-generation masses over cubes
  // whose closures meet R.
  Rational query(const DyadicCube& r) const {
    Rational total = 0;
    const auto& deepest = gens_.back().cubes;
    for (const auto& q : deepest) {
      if (closures_meet(q, r)) total += mass(q);
    }
    return total;
  }

  int deepest_level() const {
    int m = 0;
    for (const auto& q : gens_.back().cubes) m = std::max(m, q.level);
    return m;
  }

  double conservation_defect() const {
    double worst = 0;
    for (size_t n = 0; n + 1 < gens_.size(); ++n) {
      std::unordered_map<DyadicCube, Rational, CubeHash> sums;
      for (const auto& child : gens_[n + 1].cubes) {
        const DyadicCube& par = gens_[n + 1].parent_links.at(child);
        sums[par] += masses_[n + 1].at(child);
      }
      for (const auto& [par, s] : sums) {
        Rational diff = s - masses_[n].at(par);
        worst = std::max(worst, std::fabs(static_cast<double>(diff)));
      }
    }
    return worst;
  }

  static bool closures_meet(const DyadicCube& a, const DyadicCube& b) {
    // compare corner coordinates as integers at the finer level
    int lvl = std::max(a.level, b.level);
    for (int i = 0; i < a.dim; ++i) {
      int64_t alo = a.k[static_cast<size_t>(i)] << (lvl - a.level);
      int64_t ahi = (a.k[static_cast<size_t>(i)] + 1) << (lvl - a.level);
      int64_t blo = b.k[static_cast<size_t>(i)] << (lvl - b.level);
      int64_t bhi = (b.k[static_cast<size_t>(i)] + 1) << (lvl - b.level);
      if (ahi < blo || bhi < alo) return false;
    }
    return true;
  }

 private:
  std::vector<GenerationFamily> gens_;
  std::vector<std::unordered_map<DyadicCube, Rational, CubeHash>> masses_;
};

// Recursive mass construction over nested generations. Generation 1 gets
// total mass 1 split proportionally to l^s; each later generation splits its
// parent's mass proportionally to l^s among the children.
inline MassMeasure build_mass_measure(const std::vector<GenerationFamily>& gens, double s) {
  if (gens.empty()) throw std::invalid_argument("build_mass_measure: no generations");
  // disjoint interiors within a generation: no cube may contain another,
  // and equal-level duplicates are rejected
  for (const auto& g : gens) {
    std::unordered_set<DyadicCube, CubeHash> seen;
    for (const auto& q : g.cubes) {
      if (!seen.insert(q).second) throw std::invalid_argument("generation has duplicate cubes");
    }
    for (const auto& q : g.cubes) {
      for (int lvl = 0; lvl < q.level; ++lvl) {
        if (seen.count(q.ancestor(lvl)))
          throw std::invalid_argument("generation cubes have overlapping interiors");
      }
    }
  }
  // nesting via parent links
  for (size_t n = 1; n < gens.size(); ++n) {
    for (const auto& q : gens[n].cubes) {
      auto it = gens[n].parent_links.find(q);
      if (it == gens[n].parent_links.end())
        throw std::invalid_argument("generation cube lacks a parent link");
      if (!it->second.contains_cube(q))
        throw std::invalid_argument("parent link does not contain its child");
    }
  }

  std::vector<std::unordered_map<DyadicCube, Rational, CubeHash>> masses(gens.size());

  // generation 1
  {
    Rational total_w = 0;
    for (const auto& q : gens[0].cubes) total_w += detail::dyadic_weight(q.level, s);
    for (const auto& q : gens[0].cubes)
      masses[0][q] = detail::dyadic_weight(q.level, s) / total_w;
  }

  for (size_t n = 1; n < gens.size(); ++n) {
    std::unordered_map<DyadicCube, Rational, CubeHash> weight_sums;
    for (const auto& q : gens[n].cubes)
      weight_sums[gens[n].parent_links.at(q)] += detail::dyadic_weight(q.level, s);
    // a parent with mass but no children strands its mass
    for (const auto& [par, m] : masses[n - 1]) {
      if (m != 0 && weight_sums.find(par) == weight_sums.end())
        throw std::invalid_argument("childless interior cube: mass would strand at " + par.str());
    }
    for (const auto& q : gens[n].cubes) {
      const DyadicCube& par = gens[n].parent_links.at(q);
      masses[n][q] =
          masses[n - 1].at(par) * detail::dyadic_weight(q.level, s) / weight_sums.at(par);
    }
  }

  return MassMeasure(gens, std::move(masses));
}

struct FrostmanReport {
  double max_ratio = 0;
  DyadicCube witness;
  int64_t cubes_audited = 0;
};

// max over all dyadic cubes up to `depth` of mu(R)/l(R)^alpha. The descent
// visits only cubes meeting the support.
inline FrostmanReport frostman_audit(const MassMeasure& mu, double alpha, int depth) {
  if (depth < mu.deepest_level())
    throw std::invalid_argument("frostman_audit: depth shallower than deepest generation");
  const auto& deepest = mu.family(mu.generations() - 1).cubes;
  if (deepest.empty()) throw std::invalid_argument("frostman_audit: empty measure");
  const int d = deepest.front().dim;

  FrostmanReport rep;
  struct Item {
    DyadicCube cube;
    std::vector<uint32_t> touching;  // indexes of deepest cubes meeting this cube
  };

  // roots: level-0 cubes meeting the support
  std::map<DyadicCube, std::vector<uint32_t>> roots;
  for (uint32_t i = 0; i < deepest.size(); ++i) {
    // all level-0 cubes whose closure meets cube i
    DyadicCube a = deepest[i].ancestor(0);
    std::vector<int64_t> lo(static_cast<size_t>(d)), hi(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) {
      lo[static_cast<size_t>(c)] = a.k[static_cast<size_t>(c)] - 1;
      hi[static_cast<size_t>(c)] = a.k[static_cast<size_t>(c)] + 1;
    }
    std::vector<int64_t> idx = lo;
    while (true) {
      DyadicCube r;
      r.dim = d;
      r.level = 0;
      for (int c = 0; c < d; ++c) r.k[static_cast<size_t>(c)] = idx[static_cast<size_t>(c)];
      if (MassMeasure::closures_meet(deepest[i], r)) roots[r].push_back(i);
      int c = 0;
      while (c < d && ++idx[static_cast<size_t>(c)] > hi[static_cast<size_t>(c)]) {
        idx[static_cast<size_t>(c)] = lo[static_cast<size_t>(c)];
        ++c;
      }
      if (c == d) break;
    }
  }

  std::vector<Item> stack;
  for (auto& [r, touch] : roots) stack.push_back({r, std::move(touch)});

  while (!stack.empty()) {
    Item it = std::move(stack.back());
    stack.pop_back();
    Rational m = 0;
    for (uint32_t i : it.touching) m += mu.mass(deepest[i]);
    double ratio =
        static_cast<double>(m) / std::pow(it.cube.side(), alpha);
    ++rep.cubes_audited;
    if (ratio > rep.max_ratio) {
      rep.max_ratio = ratio;
      rep.witness = it.cube;
    }
    if (it.cube.level >= depth) continue;
    for (const auto& child : it.cube.children()) {
      std::vector<uint32_t> sub;
      for (uint32_t i : it.touching)
        if (MassMeasure::closures_meet(deepest[i], child)) sub.push_back(i);
      if (!sub.empty()) stack.push_back({child, std::move(sub)});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Box counting

inline int64_t box_count(const std::vector<DyadicCube>& cubes, int scale_exp) {
  if (cubes.empty()) throw std::invalid_argument("box_count: empty input");
  if (scale_exp < 0 || scale_exp > kMaxLevel) throw std::invalid_argument("box_count: bad scale");
  std::unordered_set<DyadicCube, CubeHash> seen;
  for (const auto& q : cubes) {
    if (q.level >= scale_exp) {
      seen.insert(q.ancestor(scale_exp));
    } else {
      // count descendants: 2^{(scale-level)d} boxes, enumerated only when small
      int shift = scale_exp - q.level;
      if (shift * q.dim > 26)
        throw std::invalid_argument("box_count: refinement of coarse input too large");
      std::vector<DyadicCube> frontier = {q};
      for (int s = 0; s < shift; ++s) {
        std::vector<DyadicCube> next;
        next.reserve(frontier.size() << q.dim);
        for (const auto& c : frontier)
          for (const auto& ch : c.children()) next.push_back(ch);
        frontier = std::move(next);
      }
      for (const auto& c : frontier) seen.insert(c);
    }
  }
  return static_cast<int64_t>(seen.size());
}

inline int64_t box_count(const std::vector<Point>& points, int scale_exp) {
  if (points.empty()) throw std::invalid_argument("box_count: empty input");
  std::unordered_set<DyadicCube, CubeHash> seen;
  for (const auto& p : points) seen.insert(locate(p, scale_exp));
  return static_cast<int64_t>(seen.size());
}

struct BoxFit {
  double slope = 0;
  double residual = 0;  // rms residual of the log-log fit
  bool degenerate = false;
};

// least-squares slope of log(count) against log(1/scale)
inline BoxFit boxdim_fit(const std::vector<std::pair<double, int64_t>>& counts) {
  if (counts.size() < 3) throw std::invalid_argument("boxdim_fit: need at least 3 scales");
  BoxFit fit;
  bool constant = true;
  for (size_t i = 1; i < counts.size(); ++i)
    if (counts[i].second != counts[0].second) constant = false;
  if (constant) {
    fit.degenerate = true;
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(counts.size());
  for (auto [scale, c] : counts) {
    double x = std::log2(1.0 / scale);
    double y = std::log2(static_cast<double>(c));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double icept = (sy - fit.slope * sx) / n;
  double ss = 0;
  for (auto [scale, c] : counts) {
    double x = std::log2(1.0 / scale);
    double y = std::log2(static_cast<double>(c));
    double r = y - (fit.slope * x + icept);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// The two-children ratio-1/4 fixture: generation n has 2^{n-1} cubes of
// level 2(n-1); each cube keeps its first and last quarter.
inline std::vector<GenerationFamily> cantor_quarter_fixture(int generations) {
  if (generations < 1) throw std::invalid_argument("cantor_quarter_fixture: need >= 1 generations");
  std::vector<GenerationFamily> gens(static_cast<size_t>(generations));
  gens[0].index = 1;
  gens[0].cubes.push_back(DyadicCube(1, 0, {0}));
  for (int n = 1; n < generations; ++n) {
    gens[static_cast<size_t>(n)].index = n + 1;
    for (const auto& par : gens[static_cast<size_t>(n - 1)].cubes) {
      DyadicCube left;
      left.dim = 1;
      left.level = par.level + 2;
      left.k[0] = 4 * par.k[0];
      DyadicCube right = left;
      right.k[0] = 4 * par.k[0] + 3;
      gens[static_cast<size_t>(n)].cubes.push_back(left);
      gens[static_cast<size_t>(n)].cubes.push_back(right);
      gens[static_cast<size_t>(n)].parent_links[left] = par;
      gens[static_cast<size_t>(n)].parent_links[right] = par;
    }
  }
  return gens;
}

}  // namespace zyg
