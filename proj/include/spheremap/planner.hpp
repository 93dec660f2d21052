#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spheremap/cost_model.hpp"
#include "spheremap/graph_search.hpp"
#include "spheremap/sphere_map.hpp"

namespace spheremap {

enum class PlanMode { cached, full_graph, grid, grid_length, rrt_star };

inline const char* to_string(PlanMode m) {
  switch (m) {
    case PlanMode::cached: return "cached";
    case PlanMode::full_graph: return "full";
    case PlanMode::grid: return "grid";
    case PlanMode::grid_length: return "grid-length";
    case PlanMode::rrt_star: return "rrt";
  }
  return "?";
}

inline std::optional<PlanMode> parse_plan_mode(std::string_view s) {
  for (PlanMode m : {PlanMode::cached, PlanMode::full_graph, PlanMode::grid, PlanMode::grid_length, PlanMode::rrt_star}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

struct Waypoint {
  Vec3 p = Vec3::Zero();
  double clearance = 0.0;
};

struct PlanResult {
  std::vector<Waypoint> waypoints;
  double length = 0.0;
  double risk = 0.0;
  double cost = 0.0;
  PlanMode mode = PlanMode::full_graph;
  double planning_time = 0.0;  ///< seconds
};

struct PathEvaluation {
  double length = 0.0;
  double risk = 0.0;
  double cost = 0.0;
  double min_clearance = 0.0;
};

/// Sums the discretised length and risk increments over consecutive
/// waypoints; clearances come from `clearance(point)`.
template <typename ClearanceFn>
PathEvaluation evaluate_path(std::span<const Vec3> points, ClearanceFn&& clearance, const PlannerParams& params) {
  PathEvaluation ev;
  if (points.empty()) return ev;
  double prev_c = clearance(points[0]);
  ev.min_clearance = prev_c;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double c = clearance(points[i]);
    const TransitionCost t = transition_cost(points[i - 1], prev_c, points[i], c, params);
    ev.length += t.length;
    ev.risk += t.risk;
    ev.min_clearance = std::min(ev.min_clearance, c);
    prev_c = c;
  }
  ev.cost = ev.length + ev.risk;
  return ev;
}

/// Evaluation using the clearances recorded on the waypoints themselves.
inline PathEvaluation evaluate_path(std::span<const Waypoint> waypoints, const PlannerParams& params) {
  PathEvaluation ev;
  if (waypoints.empty()) return ev;
  ev.min_clearance = waypoints[0].clearance;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const TransitionCost t = transition_cost(waypoints[i - 1].p, waypoints[i - 1].clearance, waypoints[i].p,
                                             waypoints[i].clearance, params);
    ev.length += t.length;
    ev.risk += t.risk;
    ev.min_clearance = std::min(ev.min_clearance, waypoints[i].clearance);
  }
  ev.cost = ev.length + ev.risk;
  return ev;
}

inline std::vector<Vec3> waypoint_positions(const PlanResult& r) {
  std::vector<Vec3> out;
  out.reserve(r.waypoints.size());
  for (const Waypoint& w : r.waypoints) out.push_back(w.p);
  return out;
}

namespace detail {

inline void finalize(PlanResult& r, const PlannerParams& params) {
  const PathEvaluation ev = evaluate_path(std::span<const Waypoint>(r.waypoints), params);
  r.length = ev.length;
  r.risk = ev.risk;
  r.cost = ev.length + ev.risk;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// A point attached to the sphere graph: the node whose sphere contains it
/// with at least r_min to spare, plus a lower bound on the point's clearance.
struct Attachment {
  NodeId node;
  double clearance;
};

/// Nearest-centre node whose sphere, shrunk by r_min, contains `p`.
inline std::optional<Attachment> attach_point(const SphereMap& map, const Vec3& p, double r_min,
                                              std::optional<SegmentId> restrict = std::nullopt) {
  std::optional<Attachment> best;
  double best_d = std::numeric_limits<double>::infinity();
  map.node_index().for_each_within(p, map.params().max_radius, [&](NodeId id, const Vec3& q, double r) {
    const double d = (q - p).norm();
    if (!(d < r - r_min)) return;
    if (restrict && map.at(id).segment != *restrict) return;
    if (d < best_d || (d == best_d && id < best->node)) {
      best_d = d;
      best = Attachment{id, r - d};
    }
  });
  return best;
}

/// Every graph edge already clears the build r_min, so only a stricter
/// planner threshold needs per-edge checks.
inline bool needs_edge_checks(const SphereMap& map, const PlannerParams& params) {
  return params.r_min > map.params().r_min;
}

/// Optimal path over the sphere graph (optionally one segment's subgraph)
/// under the safety-aware transition cost, with the Euclidean heuristic.
inline std::optional<PlanResult> astar_sphere_graph(const SphereMap& map, const Vec3& start, const Vec3& goal,
                                                    const PlannerParams& params,
                                                    std::optional<SegmentId> restrict = std::nullopt) {
  const detail::Stopwatch watch;
  const auto s = attach_point(map, start, params.r_min, restrict);
  const auto g = attach_point(map, goal, params.r_min, restrict);
  if (!s || !g) return std::nullopt;
  const SphereNode& entry = map.at(s->node);
  auto cost = [&](const Vec3& a, double ra, const Vec3& b, double rb) {
    return transition_cost(a, ra, b, rb, params).total();
  };
  const bool check_edges = needs_edge_checks(map, params);

  const SearchSource src{s->node, cost(start, s->clearance, entry.p, entry.r)};
  auto found = astar_search(
      std::span<const SearchSource>(&src, 1), g->node,
      [&](NodeId id, auto&& relax) {
        const SphereNode& a = map.at(id);
        for (NodeId n : map.neighbors(id)) {
          const SphereNode& b = map.at(n);
          if (restrict && b.segment != *restrict) continue;
          if (check_edges && !edge_traversable(a.p, a.r, b.p, b.r, params.r_min)) continue;
          relax(n, cost(a.p, a.r, b.p, b.r));
        }
      },
      [&](NodeId id) { return (map.at(id).p - goal).norm(); });

  std::optional<PlanResult> best;
  if (found) {
    PlanResult r;
    r.mode = PlanMode::full_graph;
    r.waypoints.push_back({start, s->clearance});
    for (NodeId id : found->nodes) r.waypoints.push_back({map.at(id).p, map.at(id).r});
    r.waypoints.push_back({goal, g->clearance});
    detail::finalize(r, params);
    best = std::move(r);
  }
  if (s->node == g->node) {
    // Both points sit in the same shrunk sphere, so the straight segment is safe.
    PlanResult direct;
    direct.mode = PlanMode::full_graph;
    direct.waypoints = {{start, s->clearance}, {goal, g->clearance}};
    detail::finalize(direct, params);
    if (!best || direct.cost <= best->cost) best = std::move(direct);
  }
  if (best) best->planning_time = watch.seconds();
  return best;
}

/// Long-distance planning over portals: the start and goal are connected to
/// the portals of their own segments through the segment subgraphs, and the
/// cached portal-to-portal paths cover everything in between.
inline std::optional<PlanResult> plan_cached(const SphereMap& map, const Vec3& start, const Vec3& goal,
                                             const PlannerParams& params) {
  const detail::Stopwatch watch;
  if (params.xi != map.cost_params().xi || params.d_max != map.cost_params().d_max) {
    throw ConfigError("plan_cached: planner cost parameters differ from the ones the path cache was built with");
  }
  const auto s = attach_point(map, start, params.r_min);
  const auto g = attach_point(map, goal, params.r_min);
  if (!s || !g) return std::nullopt;
  const SegmentId seg_s = map.at(s->node).segment;
  const SegmentId seg_g = map.at(g->node).segment;
  if (seg_s == kNoSegment || seg_g == kNoSegment) return std::nullopt;

  std::optional<PlanResult> best;
  if (seg_s == seg_g) best = astar_sphere_graph(map, start, goal, params, seg_s);

  const bool check_edges = needs_edge_checks(map, params);
  auto relax_all = [&](const CompactGraph& graph, std::uint32_t i, auto&& relax) {
    for (std::uint32_t k = graph.offsets[i]; k < graph.offsets[i + 1]; ++k) {
      if (check_edges && !(graph.widths[k] > params.r_min)) continue;
      relax(graph.targets[k], graph.costs[k]);
    }
  };
  const PortalGraph& pg = map.portal_graph();
  // Costs and chains from an attached node to the portal endpoints of its
  // segment. The precomputed trees hold them unless edges must be filtered,
  // in which case a Dijkstra over the admissible edges replaces them.
  struct Attachment {
    const Segment* seg;
    std::uint32_t from;
    std::optional<DenseSearch> search;
  };
  auto attach = [&](const Segment& seg, NodeId from) {
    Attachment a{&seg, seg.local_index(from), std::nullopt};
    if (!check_edges) return a;
    std::vector<char> wanted(seg.members.size(), 0);
    std::size_t remaining = seg.roots.size();
    for (NodeId root : seg.roots) wanted[seg.local_index(root)] = 1;
    const std::pair<std::uint32_t, double> src{a.from, 0.0};
    a.search = dense_search(
        seg.members.size(), std::span(&src, 1),
        [&](std::uint32_t i, auto&& relax) { relax_all(seg.graph, i, relax); }, [](std::uint32_t) { return 0.0; },
        [&](std::uint32_t i) { return wanted[i] && --remaining == 0; });
    return a;
  };
  auto cost_to = [](const Attachment& a, std::size_t k) {
    const Segment& seg = *a.seg;
    if (a.search) return a.search->g[seg.local_index(seg.roots[k])];
    return seg.root_cost[k * seg.members.size() + a.from];
  };
  // attached node first, endpoint last
  auto chain_to = [](const Attachment& a, std::size_t k) {
    const Segment& seg = *a.seg;
    std::vector<NodeId> out;
    if (a.search) {
      for (std::uint32_t i : a.search->path_to(seg.local_index(seg.roots[k]))) out.push_back(seg.members[i]);
      return out;
    }
    const std::uint32_t* next = seg.toward_root.data() + k * seg.members.size();
    for (std::uint32_t i = a.from; i != detail::kNoParent; i = next[i]) out.push_back(seg.members[i]);
    return out;
  };
  auto root_slot = [](const Segment& seg, NodeId id) {
    return std::size_t(std::lower_bound(seg.roots.begin(), seg.roots.end(), id) - seg.roots.begin());
  };
  const Segment& sa = *map.segment(seg_s);
  const Segment& sb = *map.segment(seg_g);
  const SphereNode& entry = map.at(s->node);
  const SphereNode& exit = map.at(g->node);
  const double entry_cost = transition_cost(start, s->clearance, entry.p, entry.r, params).total();
  const double exit_cost = transition_cost(exit.p, exit.r, goal, g->clearance, params).total();
  const Attachment attach_s = attach(sa, s->node);
  const Attachment attach_g = attach(sb, g->node);

  const auto n = std::uint32_t(pg.nodes.size());
  const std::uint32_t goal_index = n;
  std::vector<std::pair<std::uint32_t, double>> sources;
  std::vector<double> to_goal(n, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < sa.roots.size(); ++k) {
    const double c = cost_to(attach_s, k);
    if (std::isfinite(c)) sources.push_back({*pg.index_of(sa.roots[k]), entry_cost + c});
  }
  std::vector<std::pair<std::uint32_t, double>> exits;
  for (std::size_t k = 0; k < sb.roots.size(); ++k) {
    const std::uint32_t e = *pg.index_of(sb.roots[k]);
    to_goal[e] = cost_to(attach_g, k) + exit_cost;
    if (std::isfinite(to_goal[e])) exits.push_back({e, to_goal[e]});
  }
  const DenseSearch meta = dense_search(
      n + 1, std::span<const std::pair<std::uint32_t, double>>(sources),
      [&](std::uint32_t i, auto&& relax) {
        if (i == goal_index) return;
        relax_all(pg.hops, i, relax);
        if (std::isfinite(to_goal[i])) relax(goal_index, to_goal[i]);
      },
      [&](std::uint32_t i) {
        if (i == goal_index) return 0.0;
        double h = std::numeric_limits<double>::infinity();
        for (const auto& [e, c] : exits) h = std::min(h, pg.lower_bound(i, e) + c);
        return h;
      },
      [&](std::uint32_t i) { return i == goal_index; });

  if (std::isfinite(meta.g[goal_index])) {
    const std::vector<std::uint32_t> hops = meta.path_to(goal_index);  // endpoints ..., goal_index
    PlanResult r;
    auto emit = [&](NodeId id) {
      const SphereNode& node = map.at(id);
      r.waypoints.push_back({node.p, node.r});
    };
    r.waypoints.push_back({start, s->clearance});
    for (NodeId id : chain_to(attach_s, root_slot(sa, pg.nodes[hops.front()]))) emit(id);
    for (std::size_t i = 0; i + 2 < hops.size(); ++i) {
      const NodeId a = pg.nodes[hops[i]], b = pg.nodes[hops[i + 1]];
      if (pg.segments[hops[i]] == pg.segments[hops[i + 1]]) {
        const std::vector<NodeId>& leg = map.segment(pg.segments[hops[i]])->paths.at(make_node_pair(a, b)).nodes;
        if (leg.front() == a) std::for_each(leg.begin() + 1, leg.end(), emit);
        else std::for_each(leg.rbegin() + 1, leg.rend(), emit);
      } else {
        emit(b);
      }
    }
    // from the last endpoint in to the exit node
    const std::vector<NodeId> tail = chain_to(attach_g, root_slot(sb, pg.nodes[hops[hops.size() - 2]]));
    std::for_each(tail.rbegin() + 1, tail.rend(), emit);
    r.waypoints.push_back({goal, g->clearance});
    detail::finalize(r, params);
    if (!best || r.cost < best->cost) best = std::move(r);
  }
  if (best) {
    best->mode = PlanMode::cached;
    best->planning_time = watch.seconds();
  }
  return best;
}

// Text record:
//   mode <name>
//   time <seconds>
//   length <L>
//   risk <Z>
//   cost <J>
//   waypoints <n>
//   <x> <y> <z> <clearance>   (n lines)
inline std::string to_text_record(const PlanResult& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "mode " << to_string(r.mode) << '\n'
      << "time " << r.planning_time << '\n'
      << "length " << r.length << '\n'
      << "risk " << r.risk << '\n'
      << "cost " << r.cost << '\n'
      << "waypoints " << r.waypoints.size() << '\n';
  for (const Waypoint& w : r.waypoints) {
    out << w.p.x() << ' ' << w.p.y() << ' ' << w.p.z() << ' ' << w.clearance << '\n';
  }
  return out.str();
}

inline PlanResult parse_text_record(const std::string& text) {
  std::istringstream in(text);
  PlanResult r;
  std::string key, mode;
  std::size_t n = 0;
  auto expect = [&](const char* k) {
    if (!(in >> key) || key != k) throw std::invalid_argument(std::string("plan record: expected ") + k);
  };
  expect("mode");
  in >> mode;
  const auto m = parse_plan_mode(mode);
  if (!m) throw std::invalid_argument("plan record: unknown mode " + mode);
  r.mode = *m;
  expect("time");
  in >> r.planning_time;
  expect("length");
  in >> r.length;
  expect("risk");
  in >> r.risk;
  expect("cost");
  in >> r.cost;
  expect("waypoints");
  in >> n;
  for (std::size_t i = 0; i < n; ++i) {
    Waypoint w;
    if (!(in >> w.p.x() >> w.p.y() >> w.p.z() >> w.clearance)) throw std::invalid_argument("plan record: truncated");
    r.waypoints.push_back(w);
  }
  if (!in && !in.eof()) throw std::invalid_argument("plan record: malformed");
  return r;
}

}  // namespace spheremap
