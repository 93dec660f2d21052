#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <vector>

#include "spheremap/cost_model.hpp"
#include "spheremap/node_index.hpp"
#include "spheremap/obstacle_index.hpp"
#include "spheremap/planner.hpp"
#include "spheremap/voxel_grid.hpp"

namespace spheremap {

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Obstacle distance at every free voxel centre of `grid`, zero elsewhere.
struct ClearanceField {
  OccupancyGrid grid;
  std::vector<double> values;

  double at(const Index3& i) const { return grid.in_bounds(i) ? values[grid.linear(i)] : 0.0; }
};

/// Exact per-voxel distances: every free centre queries the obstacle index.
/// `obstacles` may be built from a finer grid than `grid`.
inline ClearanceField compute_clearance_field(const OccupancyGrid& grid, const ObstacleIndex& obstacles) {
  ClearanceField field{grid, std::vector<double>(grid.voxel_count(), 0.0)};
  for (std::size_t n = 0; n < grid.voxel_count(); ++n) {
    const Index3 i = grid.unlinear(n);
    if (grid.is_free(i)) field.values[n] = obstacles.nearest_distance(grid.center(i));
  }
  return field;
}

enum class GridCostMode { safety, length_only };

struct GridSearchOptions {
  GridCostMode mode = GridCostMode::safety;
  std::size_t expansion_budget = 50'000'000;
};

/// A* over the 26-connected graph of free voxels with clearance > r_min.
/// Voxel clearances stand in for r in the transition cost.
inline std::optional<PlanResult> grid_astar(const ClearanceField& field, const Vec3& start, const Vec3& goal,
                                            const PlannerParams& params, GridSearchOptions options = {}) {
  const detail::Stopwatch watch;
  const OccupancyGrid& grid = field.grid;
  const Index3 si = grid.voxel_of(start), gi = grid.voxel_of(goal);
  const double floor = params.r_min + kClearanceSlack;
  auto usable = [&](const Index3& i) { return grid.is_free(i) && field.at(i) > floor; };
  if (!usable(si) || !usable(gi)) return std::nullopt;
  // Point clearance bounded through the enclosing voxel's sphere.
  const double rs = field.at(si) - (start - grid.center(si)).norm();
  const double rg = field.at(gi) - (goal - grid.center(gi)).norm();
  if (!(rs > floor) || !(rg > floor)) return std::nullopt;

  const bool safety = options.mode == GridCostMode::safety;
  auto step_cost = [&](const Vec3& a, double ra, const Vec3& b, double rb) {
    const TransitionCost t = transition_cost(a, ra, b, rb, params);
    return safety ? t.total() : t.length;
  };
  const PlanMode mode = safety ? PlanMode::grid : PlanMode::grid_length;

  auto finish = [&](PlanResult r) {
    r.mode = mode;
    detail::finalize(r, params);
    r.planning_time = watch.seconds();
    return r;
  };
  if (si == gi) {
    return finish(PlanResult{{{start, rs}, {goal, rg}}});
  }

  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  const std::size_t n = grid.voxel_count();
  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> parent(n, kNone);
  struct Entry {
    double f, h;
    std::uint32_t id;
    double g;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.id > b.id;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);

  const std::uint32_t s = std::uint32_t(grid.linear(si)), t = std::uint32_t(grid.linear(gi));
  const Vec3 cs = grid.center(si);
  g[s] = step_cost(start, rs, cs, field.values[s]);
  open.push({g[s] + (cs - goal).norm(), (cs - goal).norm(), s, g[s]});

  std::size_t expansions = 0;
  bool reached = false;
  while (!open.empty()) {
    const Entry top = open.top();
    open.pop();
    if (top.g > g[top.id]) continue;
    if (top.id == t) {
      reached = true;
      break;
    }
    if (++expansions > options.expansion_budget) throw BudgetExceeded("grid A*: node expansion budget exceeded");
    const Index3 i = grid.unlinear(top.id);
    const Vec3 ci = grid.center(i);
    const double ri = field.values[top.id];
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Index3 j{i.x + dx, i.y + dy, i.z + dz};
          if (!usable(j)) continue;
          const std::uint32_t jn = std::uint32_t(grid.linear(j));
          const Vec3 cj = grid.center(j);
          const double rj = field.values[jn];
          if (!edge_traversable(ci, ri, cj, rj, floor)) continue;
          const double gj = top.g + step_cost(ci, ri, cj, rj);
          if (gj >= g[jn]) continue;
          g[jn] = gj;
          parent[jn] = top.id;
          const double h = (cj - goal).norm();
          open.push({gj + h, h, jn, gj});
        }
      }
    }
  }
  if (!reached) return std::nullopt;

  std::vector<std::uint32_t> chain;
  for (std::uint32_t v = t; v != kNone; v = parent[v]) chain.push_back(v);
  std::reverse(chain.begin(), chain.end());
  PlanResult r;
  r.waypoints.push_back({start, rs});
  for (std::uint32_t v : chain) r.waypoints.push_back({grid.center(grid.unlinear(v)), field.values[v]});
  r.waypoints.push_back({goal, rg});
  return finish(std::move(r));
}

struct RrtOptions {
  double timeout = 10.0;  ///< seconds
  double step = 1.0;
  double rewire_radius = 3.0;
  std::uint32_t seed = 0;
  std::size_t max_iterations = std::numeric_limits<std::size_t>::max();
  /// Extra iterations spent improving the tree after the first solution; 0
  /// returns the first solution.
  std::size_t refine_iterations = 0;
};

/// RRT* returning its first solution, or the best one after an optional
/// refinement budget. Segments are accepted when samples
/// at quarter-voxel spacing keep clearance above r_min plus half the spacing,
/// so the continuous segment stays clear of every obstacle point.
inline std::optional<PlanResult> rrt_star(const OccupancyGrid& grid, const ObstacleIndex& obstacles,
                                          const Vec3& start, const Vec3& goal, const PlannerParams& params,
                                          RrtOptions options = {}) {
  const detail::Stopwatch watch;
  auto clearance = [&](const Vec3& p) { return obstacles.nearest_distance(p); };
  auto point_ok = [&](const Vec3& p, double margin) {
    return grid.state_at(p) == Occupancy::free && clearance(p) > params.r_min + margin;
  };
  const double spacing = grid.resolution() / 4.0;
  auto segment_ok = [&](const Vec3& a, const Vec3& b) {
    const double len = (b - a).norm();
    const int n = std::max(1, int(std::ceil(len / spacing)));
    const double margin = len / n / 2.0;
    for (int k = 0; k <= n; ++k) {
      if (!point_ok(a + (b - a) * (double(k) / n), margin)) return false;
    }
    return true;
  };
  if (!point_ok(start, 0.0) || !point_ok(goal, 0.0)) return std::nullopt;

  struct Vertex {
    Vec3 p;
    double clearance;
    std::uint32_t parent;
    double cost;
    std::vector<std::uint32_t> children;
  };
  constexpr std::uint32_t kRoot = std::numeric_limits<std::uint32_t>::max();
  std::vector<Vertex> tree{{start, clearance(start), kRoot, 0.0, {}}};
  NodeIndex index(std::max(options.rewire_radius, options.step));
  index.insert(0, start);
  const double r_goal = clearance(goal);
  auto edge = [&](const Vertex& a, const Vec3& b, double rb) {
    return transition_cost(a.p, a.clearance, b, rb, params).total();
  };

  auto solution = [&](std::uint32_t last) {
    std::vector<std::uint32_t> chain;
    for (std::uint32_t v = last; v != kRoot; v = tree[v].parent) chain.push_back(v);
    std::reverse(chain.begin(), chain.end());
    PlanResult r;
    for (std::uint32_t v : chain) r.waypoints.push_back({tree[v].p, tree[v].clearance});
    r.waypoints.push_back({goal, r_goal});
    r.mode = PlanMode::rrt_star;
    detail::finalize(r, params);
    r.planning_time = watch.seconds();
    return r;
  };
  if ((goal - start).norm() <= options.step && segment_ok(start, goal)) return solution(0);

  // Vertices with a clear straight hop to the goal. Rewiring can lower their
  // costs later, so the best one is picked at the end.
  std::vector<std::uint32_t> exits;
  std::size_t refine_left = options.refine_iterations;
  auto consider_exit = [&](std::uint32_t id) {
    if ((goal - tree[id].p).norm() <= options.step && segment_ok(tree[id].p, goal)) exits.push_back(id);
  };
  auto best_exit = [&] {
    std::uint32_t out = exits.front();
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t id : exits) {
      const double c = tree[id].cost + edge(tree[id], goal, r_goal);
      if (c < best) best = c, out = id;
    }
    return out;
  };
  auto shift_subtree = [&](std::uint32_t root, double delta) {
    std::vector<std::uint32_t> stack{root};
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      for (std::uint32_t c : tree[v].children) {
        tree[c].cost += delta;
        stack.push_back(c);
      }
    }
  };

  std::mt19937_64 rng(options.seed);
  const Vec3 lo = grid.origin(), hi = grid.origin() + grid.extent();
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()), uz(lo.z(), hi.z());
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    if ((iter & 63) == 0 && watch.seconds() > options.timeout) break;
    if (!exits.empty() && refine_left-- == 0) break;
    const Vec3 sample(ux(rng), uy(rng), uz(rng));
    const std::uint32_t near_id = index.nearest_k(sample, 1).front().id;
    const Vertex& nearest = tree[near_id];
    Vec3 p = sample;
    const double d = (sample - nearest.p).norm();
    if (d > options.step) p = nearest.p + (sample - nearest.p) * (options.step / d);
    if (!point_ok(p, 0.0)) continue;
    const double rp = clearance(p);

    // Choose the cheapest valid parent in the rewire ball, then rewire.
    const std::vector<Neighbor> near = index.within_radius(p, options.rewire_radius);
    std::uint32_t parent = kRoot;
    double best = std::numeric_limits<double>::infinity();
    std::vector<char> valid(near.size(), 0);
    for (std::size_t k = 0; k < near.size(); ++k) {
      const Vertex& v = tree[near[k].id];
      if (!segment_ok(v.p, p)) continue;
      valid[k] = 1;
      const double c = v.cost + edge(v, p, rp);
      if (c < best) {
        best = c;
        parent = near[k].id;
      }
    }
    if (parent == kRoot) continue;
    const std::uint32_t id = std::uint32_t(tree.size());
    tree.push_back({p, rp, parent, best, {}});
    tree[parent].children.push_back(id);
    index.insert(id, p);
    for (std::size_t k = 0; k < near.size(); ++k) {
      const std::uint32_t vid = near[k].id;
      if (!valid[k] || vid == parent) continue;
      const double c = best + edge(tree[id], tree[vid].p, tree[vid].clearance);
      if (!(c < tree[vid].cost)) continue;
      auto& siblings = tree[tree[vid].parent].children;
      siblings.erase(std::find(siblings.begin(), siblings.end(), vid));
      tree[id].children.push_back(vid);
      const double delta = c - tree[vid].cost;
      tree[vid].parent = id;
      tree[vid].cost = c;
      shift_subtree(vid, delta);
    }
    consider_exit(id);
    if (!exits.empty() && options.refine_iterations == 0) return solution(best_exit());
  }
  if (!exits.empty()) return solution(best_exit());
  return std::nullopt;
}

}  // namespace spheremap
