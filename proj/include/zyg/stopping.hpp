#pragma once

// Stopping-time selection of dyadic subcubes by discrete-gradient deviation,
// the cone subfamily, the labeled-cover polygonal descent with its mean-value
// audit, and the generation pipeline that feeds the dimension module.
//
// Selection explores the subtree of Q depth-first and emits a cube the first
// time ||V(cube) - V(Q)|| reaches the threshold; descendants of emitted cubes
// are not explored. Cubes still below threshold at the depth cap are
// "unresolved" and tracked by count and length only (at depth 14 in d=2 there
// can be ~10^8 of them). Families whose selected count exceeds the
// materialization cap keep streamed statistics and answer membership queries
// by recomputing the deviation chain, which is exact.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_set>
#include <vector>

#include "zyg/dimension.hpp"
#include "zyg/dyadic.hpp"
#include "zyg/gradient.hpp"
#include "zyg/parallel.hpp"

namespace zyg {

struct StoppingParams {
  double M = 50.0;
  double epsilon = 0.5;
  Point u;              // cone direction; defaults to -e when empty
  int max_depth = 12;   // relative to the root cube
  double eta = 0.25;    // residual-cover tolerance, reported against measurement

  double threshold() const { return epsilon * M; }
};

struct SelectedCube {
  DyadicCube cube;
  Point v;              // V(cube)
  double deviation;     // ||V(cube) - V(root)||
  double cone_ip;       // <V(cube) - V(root), u>, filled by cone_filter
  double error_bound;   // evaluation error of V(cube)
};

struct SelectionStats {
  uint64_t selected_count = 0;
  uint64_t unresolved_count = 0;
  uint64_t visited = 0;
  double selected_length_sum = 0;
  double unresolved_length_sum = 0;
  double min_deviation = std::numeric_limits<double>::infinity();
  double max_deviation = 0;
  double max_parent_child_jump = 0;  // max ||V(child)-V(parent)|| along explored edges
  int deepest_selected = 0;          // relative depth
  uint64_t ancestry_violations = 0;  // explored cubes at/above threshold (must stay 0)
};

struct SelectionOptions {
  uint64_t materialize_limit = 2'000'000;
  int threads = 1;
  int parallel_split_depth = 2;  // subtree roots claimed by the worker pool
};

class SelectedFamily {
 public:
  DyadicCube root;
  DiscreteGradient base;
  double threshold = 0;
  int max_depth = 0;
  SelectionStats stats;
  bool truncated = false;  // cube list capped; stats still cover everything

  const std::vector<SelectedCube>& cubes() const { return cubes_; }
  std::vector<SelectedCube>& mutable_cubes() { return cubes_; }

  // exact membership: selected iff deviation >= threshold and every proper
  // ancestor (within the root) stays below
  bool is_selected(const ScalarField& f, const DyadicCube& q) const {
    if (!root.contains_cube(q) || q.level <= root.level) return false;
    if (q.level - root.level > max_depth) return false;
    double dev = norm(discrete_gradient(f, q).vec - base.vec);
    if (dev < threshold) return false;
    for (int lvl = q.level - 1; lvl > root.level; --lvl) {
      double a = norm(discrete_gradient(f, q.ancestor(lvl)).vec - base.vec);
      if (a >= threshold) return false;
    }
    return true;
  }
  // unresolved iff at the depth cap with the whole chain below threshold
  bool is_unresolved(const ScalarField& f, const DyadicCube& q) const {
    if (!root.contains_cube(q) || q.level - root.level != max_depth) return false;
    for (int lvl = q.level; lvl > root.level; --lvl) {
      double a = norm(discrete_gradient(f, q.ancestor(lvl)).vec - base.vec);
      if (a >= threshold) return false;
    }
    return true;
  }

  void finalize_sort() {
    std::sort(cubes_.begin(), cubes_.end(),
              [](const SelectedCube& a, const SelectedCube& b) { return a.cube < b.cube; });
  }

 private:
  std::vector<SelectedCube> cubes_;
};

namespace detail {

struct SelectSink {
  SelectionStats stats;
  std::vector<SelectedCube> cubes;
  uint64_t limit = 0;
  bool truncated = false;

  void selected(const DyadicCube& q, const Point& v, double dev, double err, int rel_depth) {
    ++stats.selected_count;
    stats.selected_length_sum += q.side();
    stats.min_deviation = std::min(stats.min_deviation, dev);
    stats.max_deviation = std::max(stats.max_deviation, dev);
    stats.deepest_selected = std::max(stats.deepest_selected, rel_depth);
    if (cubes.size() < limit) {
      SelectedCube s;
      s.cube = q;
      s.v = v;
      s.deviation = dev;
      s.cone_ip = 0;
      s.error_bound = err;
      cubes.push_back(std::move(s));
    } else {
      truncated = true;
    }
  }
  void unresolved(const DyadicCube& q) {
    ++stats.unresolved_count;
    stats.unresolved_length_sum += q.side();
  }
  void merge_from(SelectSink&& o) {
    stats.selected_count += o.stats.selected_count;
    stats.unresolved_count += o.stats.unresolved_count;
    stats.visited += o.stats.visited;
    stats.selected_length_sum += o.stats.selected_length_sum;
    stats.unresolved_length_sum += o.stats.unresolved_length_sum;
    stats.min_deviation = std::min(stats.min_deviation, o.stats.min_deviation);
    stats.max_deviation = std::max(stats.max_deviation, o.stats.max_deviation);
    stats.max_parent_child_jump = std::max(stats.max_parent_child_jump, o.stats.max_parent_child_jump);
    stats.deepest_selected = std::max(stats.deepest_selected, o.stats.deepest_selected);
    stats.ancestry_violations += o.stats.ancestry_violations;
    for (auto& c : o.cubes) {
      if (cubes.size() < limit) cubes.push_back(std::move(c));
      else truncated = true;
    }
    truncated |= o.truncated;
  }
};

inline void select_dfs(const ScalarField& f, const DyadicCube& q, const Point& basev,
                       double thr, int rel_depth, int max_depth, SelectSink& sink,
                       const Point* parentv) {
  ++sink.stats.visited;
  DiscreteGradient g = discrete_gradient(f, q);
  double dev = norm(g.vec - basev);
  if (parentv)
    sink.stats.max_parent_child_jump =
        std::max(sink.stats.max_parent_child_jump, norm(g.vec - *parentv));
  if (dev >= thr) {
    sink.selected(q, g.vec, dev, g.error_bound, rel_depth);
    return;
  }
  if (rel_depth == max_depth) {
    sink.unresolved(q);
    return;
  }
  for (unsigned m = 0; m < (1u << q.dim); ++m)
    select_dfs(f, q.child(m), basev, thr, rel_depth + 1, max_depth, sink, &g.vec);
}

}  // namespace detail

inline SelectedFamily maximal_deviation_cubes(const ScalarField& f, const DyadicCube& q,
                                              double threshold, int max_depth,
                                              const SelectionOptions& opts = {}) {
  if (!(threshold > 0)) throw std::invalid_argument("maximal_deviation_cubes: threshold > 0");
  if (max_depth < 0 || q.level + max_depth > kMaxLevel)
    throw std::invalid_argument("maximal_deviation_cubes: depth out of range");

  SelectedFamily fam;
  fam.root = q;
  fam.base = discrete_gradient(f, q);
  fam.threshold = threshold;
  fam.max_depth = max_depth;

  int split = std::min(opts.parallel_split_depth, max_depth);
  if (opts.threads <= 1 || split == 0) {
    detail::SelectSink sink;
    sink.limit = opts.materialize_limit;
    if (max_depth > 0)
      for (unsigned m = 0; m < (1u << q.dim); ++m)
        detail::select_dfs(f, q.child(m), fam.base.vec, threshold, 1, max_depth, sink, &fam.base.vec);
    fam.stats = sink.stats;
    fam.mutable_cubes() = std::move(sink.cubes);
    fam.truncated = sink.truncated;
  } else {
    // expand the top of the tree breadth-first, then run subtrees in parallel
    struct Top {
      DyadicCube cube;
      Point parentv;
      int depth;
    };
    detail::SelectSink head;
    head.limit = opts.materialize_limit;
    std::vector<Top> frontier;
    std::vector<Top> next;
    frontier.push_back({q, fam.base.vec, 0});
    for (int dlev = 0; dlev < split; ++dlev) {
      next.clear();
      for (const auto& t : frontier) {
        for (unsigned m = 0; m < (1u << q.dim); ++m) {
          DyadicCube c = t.cube.child(m);
          ++head.stats.visited;
          DiscreteGradient g = discrete_gradient(f, c);
          double dev = norm(g.vec - fam.base.vec);
          head.stats.max_parent_child_jump =
              std::max(head.stats.max_parent_child_jump, norm(g.vec - t.parentv));
          if (dev >= threshold) {
            head.selected(c, g.vec, dev, g.error_bound, t.depth + 1);
          } else if (t.depth + 1 == max_depth) {
            head.unresolved(c);
          } else {
            next.push_back({c, g.vec, t.depth + 1});
          }
        }
      }
      frontier.swap(next);
    }
    std::vector<detail::SelectSink> sinks(frontier.size());
    parallel_chunks(static_cast<int>(frontier.size()), opts.threads, [&](int i) {
      const Top& t = frontier[static_cast<size_t>(i)];
      sinks[static_cast<size_t>(i)].limit = opts.materialize_limit;
      for (unsigned m = 0; m < (1u << q.dim); ++m)
        detail::select_dfs(f, t.cube.child(m), fam.base.vec, threshold, t.depth + 1, max_depth,
                           sinks[static_cast<size_t>(i)], &t.parentv);
    });
    for (auto& s : sinks) head.merge_from(std::move(s));
    fam.stats = head.stats;
    fam.mutable_cubes() = std::move(head.cubes);
    fam.truncated = head.truncated;
  }
  fam.finalize_sort();
  return fam;
}

// Subfamily with <V(Q_j) - V(root), u> >= (2/3) eps^2 M, M = ||V(root)||.
inline SelectedFamily cone_filter(const SelectedFamily& family, const DiscreteGradient& base,
                                  const Point& u, double epsilon) {
  if (family.truncated)
    throw std::logic_error("cone_filter: family cube list was truncated; re-run selection with a larger materialize_limit");
  double M = norm(base.vec);
  double bound = (2.0 / 3.0) * epsilon * epsilon * M;
  SelectedFamily out;
  out.root = family.root;
  out.base = family.base;
  out.threshold = family.threshold;
  out.max_depth = family.max_depth;
  out.stats = family.stats;
  out.stats.selected_count = 0;
  out.stats.selected_length_sum = 0;
  out.stats.min_deviation = std::numeric_limits<double>::infinity();
  out.stats.max_deviation = 0;
  out.stats.deepest_selected = 0;
  for (const auto& s : family.cubes()) {
    double ip = dot(s.v - base.vec, u);
    if (ip >= bound) {
      SelectedCube c = s;
      c.cone_ip = ip;
      out.mutable_cubes().push_back(std::move(c));
      ++out.stats.selected_count;
      out.stats.selected_length_sum += c.cube.side();
      out.stats.min_deviation = std::min(out.stats.min_deviation, s.deviation);
      out.stats.max_deviation = std::max(out.stats.max_deviation, s.deviation);
      out.stats.deepest_selected =
          std::max(out.stats.deepest_selected, s.cube.level - family.root.level);
    }
  }
  return out;
}

inline double length_ratio(const SelectedFamily& fam) {
  return fam.stats.selected_length_sum / fam.root.side();
}

// ---------------------------------------------------------------------------
// Polygonal descent through a labeled cover

struct LabeledBox {
  Box box;       // open box
  Point label;   // unit direction
  bool residual; // true when the label is e rather than V/||V||
  Point v;       // V of the underlying cube (selected boxes only)
  double diam;
};

struct PathStep {
  Point from, to, label;
  bool residual;
  double diam;
  DyadicCube cube;  // the cover cube that produced this step
  Point v;          // V(cube) for selected steps; zero vector for residual steps
};

struct PolygonalPath {
  std::vector<Point> vertices;
  std::vector<PathStep> steps;
  bool exited = false;
};

inline LabeledBox labeled_box_from_cube(const DyadicCube& q, const Point& label, bool residual,
                                        const Point& v) {
  LabeledBox b;
  b.box = dilate(q, 2.0);
  b.label = label;
  b.residual = residual;
  b.v = v;
  b.diam = 2.0 * q.side() * std::sqrt(static_cast<double>(q.dim));
  return b;
}

// Explicit-cover variant: every vertex inside the half-dilate must lie in
// some open box of the cover.
inline PolygonalPath polygonal_descent_cover(const DyadicCube& q,
                                             const std::vector<LabeledBox>& cover,
                                             uint64_t max_steps = 10'000'000) {
  Box half = dilate(q, 0.5);
  PolygonalPath path;
  Point a = q.center();
  path.vertices.push_back(a);
  for (uint64_t step = 0; step < max_steps; ++step) {
    if (!half.contains(a)) {
      path.exited = true;
      return path;
    }
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < cover.size(); ++i) {
      if (!cover[i].box.contains(a, /*closed=*/false)) continue;
      double d2 = norm2(a - cover[i].box.center());
      if (d2 < best_d2 - 1e-18 || (std::fabs(d2 - best_d2) <= 1e-18 && best == -1)) {
        best = static_cast<int>(i);
        best_d2 = d2;
      }
    }
    if (best < 0)
      throw std::runtime_error("polygonal descent: cover misses point (" +
                               std::to_string(a[0]) + (q.dim > 1 ? "," + std::to_string(a[1]) : "") +
                               ")");
    const LabeledBox& c = cover[static_cast<size_t>(best)];
    Point b = a + c.diam * c.label;
    PathStep st;
    st.from = a;
    st.to = b;
    st.label = c.label;
    st.residual = c.residual;
    st.diam = c.diam;
    st.v = c.v;
    path.steps.push_back(std::move(st));
    path.vertices.push_back(b);
    a = b;
  }
  throw std::runtime_error("polygonal descent: step limit exceeded");
}

// Family-backed variant: the cover is the doubled selected cubes plus the
// doubled unresolved depth-cap cubes, queried implicitly. Residual boxes are
// labeled with e = V(root)/||V(root)||.
inline PolygonalPath polygonal_descent(const ScalarField& f, const SelectedFamily& fam,
                                       const Point& e, uint64_t max_steps = 10'000'000) {
  const DyadicCube& q = fam.root;
  Box half = dilate(q, 0.5);
  std::unordered_set<DyadicCube, CubeHash> selected_set;
  const bool have_list = !fam.truncated;
  std::unordered_map<DyadicCube, Point, CubeHash> selected_v;
  if (have_list) {
    for (const auto& s : fam.cubes()) {
      selected_set.insert(s.cube);
      selected_v[s.cube] = s.v;
    }
  }

  auto selected_at = [&](const DyadicCube& c) -> bool {
    if (have_list) return selected_set.count(c) > 0;
    return fam.is_selected(f, c);
  };

  PolygonalPath path;
  Point a = q.center();
  path.vertices.push_back(a);
  for (uint64_t step = 0; step < max_steps; ++step) {
    if (!half.contains(a)) {
      path.exited = true;
      return path;
    }
    // candidates: for each level, the up-to-3^d cubes whose double can hold a
    struct Cand {
      DyadicCube cube;
      bool residual;
      double d2;
    };
    std::optional<Cand> best;
    auto consider = [&](const DyadicCube& c, bool residual) {
      Box bb = dilate(c, 2.0);
      if (!bb.contains(a, /*closed=*/false)) return;
      double d2 = norm2(a - bb.center());
      if (!best || d2 < best->d2 - 1e-18 ||
          (std::fabs(d2 - best->d2) <= 1e-18 && c < best->cube)) {
        best = Cand{c, residual, d2};
      }
    };
    for (int lvl = q.level + 1; lvl <= q.level + fam.max_depth; ++lvl) {
      DyadicCube center_cube = locate(a, lvl);
      std::vector<int64_t> off(static_cast<size_t>(q.dim), -1);
      while (true) {
        DyadicCube c = center_cube;
        for (int i = 0; i < q.dim; ++i) c.k[static_cast<size_t>(i)] += off[static_cast<size_t>(i)];
        if (q.contains_cube(c)) {
          if (lvl < q.level + fam.max_depth) {
            if (selected_at(c)) consider(c, false);
          } else {
            if (selected_at(c)) consider(c, false);
            else if (fam.is_unresolved(f, c)) consider(c, true);
          }
        }
        int i = 0;
        while (i < q.dim && ++off[static_cast<size_t>(i)] > 1) {
          off[static_cast<size_t>(i)] = -1;
          ++i;
        }
        if (i == q.dim) break;
      }
    }
    if (!best)
      throw std::runtime_error("polygonal descent: cover misses point (" +
                               std::to_string(a[0]) + "," + std::to_string(a[1]) + ")");
    PathStep st;
    st.from = a;
    st.residual = best->residual;
    st.cube = best->cube;
    if (best->residual) {
      st.label = e;
      st.v = Point(q.dim);
    } else {
      st.v = have_list ? selected_v[best->cube] : discrete_gradient(f, best->cube).vec;
      st.label = unit(st.v);
    }
    st.diam = 2.0 * best->cube.side() * std::sqrt(static_cast<double>(q.dim));
    st.to = a + st.diam * st.label;
    path.vertices.push_back(st.to);
    a = st.to;
    path.steps.push_back(std::move(st));
  }
  throw std::runtime_error("polygonal descent: step limit exceeded");
}

struct MeanValueAudit {
  double weighted_sum = 0;  // sum over selected steps of ||V||^2/<V,e> * (pi advance)
  double rhs = 0;           // M * (pi(a_n) - pi(a_1))
  double defect = 0;        // |weighted_sum - rhs|
  double c_measured = 0;    // defect / l(Q)
  double min_pi_step = std::numeric_limits<double>::infinity();
  bool monotone = true;
};

// One-dimensional mean value audit along a descent path; e is the direction
// with V(root) = M e.
inline MeanValueAudit mean_value_audit(const SelectedFamily& fam, const PolygonalPath& path,
                                       const Point& e) {
  MeanValueAudit audit;
  double M = norm(fam.base.vec);
  for (const auto& st : path.steps) {
    double dpi = dot(st.to, e) - dot(st.from, e);
    audit.min_pi_step = std::min(audit.min_pi_step, dpi);
    if (dpi <= 0) audit.monotone = false;
    if (st.residual) continue;
    audit.weighted_sum += norm2(st.v) / dot(st.v, e) * dpi;
  }
  audit.rhs = M * (dot(path.vertices.back(), e) - dot(path.vertices.front(), e));
  audit.defect = std::fabs(audit.weighted_sum - audit.rhs);
  audit.c_measured = audit.defect / fam.root.side();
  return audit;
}

// ---------------------------------------------------------------------------
// Full single-cube run: selection, cone subfamily, descent path, audits.

struct Prop1Run {
  SelectedFamily family;
  SelectedFamily coned;
  PolygonalPath path;
  MeanValueAudit audit;
  Point e;                       // V(root)/||V(root)||
  double measured_eta = 0;       // unresolved length sum / l(Q)
  double length_ratio_all = 0;   // selected length sum / l(Q)
  double length_ratio_cone = 0;
};

inline Prop1Run prop1_run(const ScalarField& f, const DyadicCube& q, const StoppingParams& params,
                          const SelectionOptions& opts = {}) {
  Prop1Run run;
  run.family = maximal_deviation_cubes(f, q, params.threshold(), params.max_depth, opts);
  if (norm(run.family.base.vec) == 0)
    throw std::invalid_argument("prop1_run: V(Q) = 0; the run needs V(Q) = M e");
  run.e = unit(run.family.base.vec);
  Point u = params.u.dim == q.dim ? params.u : -1.0 * run.e;
  run.coned = cone_filter(run.family, run.family.base, u, params.epsilon);
  run.path = polygonal_descent(f, run.family, run.e);
  run.audit = mean_value_audit(run.family, run.path, run.e);
  run.measured_eta = run.family.stats.unresolved_length_sum / q.side();
  run.length_ratio_all = length_ratio(run.family);
  run.length_ratio_cone = length_ratio(run.coned);
  return run;
}

// ---------------------------------------------------------------------------
// Generation pipeline
//
// Each generation refines every cube Q of the previous one in two stages:
// maximal subcubes R meeting the segment L(Q) = {origin + t e_1} with
// ||V(R)|| >= M, then deviation selection with threshold eps*M and the
// -e cone inside each R. The search for R only explores cubes meeting L,
// which is exact because ancestors of segment cubes meet the segment too.

struct PipelineParams {
  double M = 2.0;
  double epsilon = 0.5;
  int generations = 3;
  int segment_depth_cap = 16;      // relative depth of the per-cube row search
  int prop_depth_cap = 10;         // relative depth of each deviation selection
  bool relative_threshold = false; // threshold against ||V(R) - V(Q)|| instead of ||V(R)||
  std::vector<double> M_schedule;  // optional per-generation M override
  int threads = 1;

  double gen_M(int gen_index) const {  // gen_index >= 1 builds generation gen_index+1
    if (!M_schedule.empty()) {
      size_t i = std::min(static_cast<size_t>(gen_index - 1), M_schedule.size() - 1);
      return M_schedule[i];
    }
    return M;
  }
};

struct GenerationReport {
  int index = 0;  // generation number (>= 2; generation 1 is the root cube)
  uint64_t cube_count = 0;
  uint64_t segment_cubes_found = 0;
  uint64_t segment_unresolved = 0;
  double threshold_used = 0;  // M for this generation
  double eta0 = 0;            // max l(child)/l(parent)
  double K0 = 0;              // min over parents of sum l(children)/l(parent)
  double Ktilde = 0;          // sup over cubes R of sum_{Q in gen, Q subset R} l(Q)/l(R)
  double C0 = 0;              // max(1/K0, Ktilde)
  double dim_bound = 0;       // 1 - log2(C0)/N with N = eps*M
  double max_grad_norm = 0;   // max ||V(Q)|| over the generation
  double max_dev_over_threshold = 0;
};

struct PipelineResult {
  std::vector<GenerationFamily> generations;
  std::vector<GenerationReport> reports;
  bool completed = false;
  std::string termination;
};

namespace detail {

// maximal row cubes with the crossing condition; emits (cube, V)
template <class Emit>
inline void segment_search(const ScalarField& f, const DyadicCube& c, const Point& base_v,
                           double M, bool relative, int rel_depth, int cap, Emit&& emit,
                           uint64_t& unresolved) {
  DiscreteGradient g = discrete_gradient(f, c);
  double v = relative ? norm(g.vec - base_v) : norm(g.vec);
  if (v >= M) {
    emit(c, g.vec);
    return;
  }
  if (rel_depth == cap) {
    ++unresolved;
    return;
  }
  // the two children meeting the bottom edge of the row
  segment_search(f, c.child(0), base_v, M, relative, rel_depth + 1, cap, emit, unresolved);
  segment_search(f, c.child(1), base_v, M, relative, rel_depth + 1, cap, emit, unresolved);
}

}  // namespace detail

inline PipelineResult theorem1_generations(const ScalarField& f, const DyadicCube& root,
                                           const PipelineParams& params) {
  if (f.dim() != 2) throw std::invalid_argument("theorem1_generations: d = 2 pipeline");
  PipelineResult result;
  GenerationFamily first;
  first.index = 1;
  first.cubes.push_back(root);
  result.generations.push_back(first);

  std::unordered_map<DyadicCube, Point, CubeHash> grad_of;
  grad_of[root] = discrete_gradient(f, root).vec;

  for (int gen = 1; gen < params.generations; ++gen) {
    const double M = params.gen_M(gen);
    const double N = params.epsilon * M;
    GenerationFamily next;
    next.index = gen + 1;
    GenerationReport rep;
    rep.index = gen + 1;
    rep.threshold_used = M;

    std::unordered_map<DyadicCube, Point, CubeHash> next_grads;
    const auto& current = result.generations.back().cubes;

    std::vector<std::vector<std::pair<DyadicCube, Point>>> per_parent_rows(current.size());
    std::vector<uint64_t> per_parent_unresolved(current.size(), 0);
    parallel_chunks(static_cast<int>(current.size()), params.threads, [&](int ci) {
      const DyadicCube& q = current[static_cast<size_t>(ci)];
      const Point& vq = grad_of.at(q);
      auto emit = [&](const DyadicCube& r, const Point& v) {
        per_parent_rows[static_cast<size_t>(ci)].emplace_back(r, v);
      };
      double vroot = params.relative_threshold ? 0.0 : norm(vq);
      if (vroot >= M) {
        per_parent_rows[static_cast<size_t>(ci)].emplace_back(q, vq);
      } else if (q.level + params.segment_depth_cap <= kMaxLevel) {
        detail::segment_search(f, q.child(0), vq, M, params.relative_threshold, 1,
                               params.segment_depth_cap, emit,
                               per_parent_unresolved[static_cast<size_t>(ci)]);
        detail::segment_search(f, q.child(1), vq, M, params.relative_threshold, 1,
                               params.segment_depth_cap, emit,
                               per_parent_unresolved[static_cast<size_t>(ci)]);
      }
    });

    for (size_t ci = 0; ci < current.size(); ++ci) {
      rep.segment_cubes_found += per_parent_rows[ci].size();
      rep.segment_unresolved += per_parent_unresolved[ci];
      const DyadicCube& q = current[ci];
      for (const auto& [r, vr] : per_parent_rows[ci]) {
        if (r.level + params.prop_depth_cap > kMaxLevel) continue;
        SelectionOptions opts;
        opts.threads = 1;
        SelectedFamily fam = maximal_deviation_cubes(f, r, N, params.prop_depth_cap, opts);
        Point e_r = unit(vr);
        SelectedFamily coned = cone_filter(fam, fam.base, -1.0 * e_r, params.epsilon);
        for (const auto& s : coned.cubes()) {
          next.cubes.push_back(s.cube);
          next.parent_links[s.cube] = q;
          next_grads[s.cube] = s.v;
          rep.max_dev_over_threshold = std::max(rep.max_dev_over_threshold, s.deviation - N);
        }
      }
    }

    if (next.cubes.empty()) {
      result.termination = "generation " + std::to_string(gen + 1) + " is empty";
      result.reports.push_back(rep);
      return result;
    }
    std::sort(next.cubes.begin(), next.cubes.end());

    // measured Lemma-1 constants
    rep.cube_count = next.cubes.size();
    std::unordered_map<DyadicCube, double, CubeHash> child_length;
    for (const auto& c : next.cubes) {
      const DyadicCube& par = next.parent_links.at(c);
      child_length[par] += c.side();
      rep.eta0 = std::max(rep.eta0, c.side() / par.side());
      rep.max_grad_norm = std::max(rep.max_grad_norm, norm(next_grads.at(c)));
    }
    rep.K0 = std::numeric_limits<double>::infinity();
    for (const auto& [par, s] : child_length) rep.K0 = std::min(rep.K0, s / par.side());
    // Ktilde: accumulate lengths along every ancestor of every generation cube
    std::unordered_map<DyadicCube, double, CubeHash> anc_length;
    for (const auto& c : next.cubes)
      for (int lvl = c.level; lvl >= 0; --lvl) anc_length[c.ancestor(lvl)] += c.side();
    for (const auto& [r, s] : anc_length) rep.Ktilde = std::max(rep.Ktilde, s / r.side());
    rep.C0 = std::max(1.0 / rep.K0, rep.Ktilde);
    rep.dim_bound = 1.0 - std::log2(rep.C0) / N;

    result.generations.push_back(std::move(next));
    result.reports.push_back(rep);
    grad_of = std::move(next_grads);
  }
  result.completed = true;
  result.termination = "completed";
  return result;
}

struct TrajectoryAuditReport {
  double sup_norm = 0;    // max over sampled points and levels of ||V(Q_n(x))||
  double bound = 0;       // 2M + 1
  uint64_t points = 0;
  bool within_bound = true;
};

// sup_n ||V(Q_n(x))|| over points of the deepest generation, checked against
// 2M + 1.
inline TrajectoryAuditReport pipeline_trajectory_audit(const ScalarField& f,
                                                       const PipelineResult& result, double M,
                                                       size_t max_points = 256) {
  TrajectoryAuditReport rep;
  rep.bound = 2.0 * M + 1.0;
  const auto& deepest = result.generations.back().cubes;
  size_t stride = std::max<size_t>(1, deepest.size() / max_points);
  for (size_t i = 0; i < deepest.size(); i += stride) {
    Point x = deepest[i].center();
    ++rep.points;
    for (int n = 0; n <= deepest[i].level; ++n) {
      double nv = norm(discrete_gradient(f, locate(x, n)).vec);
      rep.sup_norm = std::max(rep.sup_norm, nv);
    }
  }
  rep.within_bound = rep.sup_norm <= rep.bound;
  return rep;
}

}  // namespace zyg
