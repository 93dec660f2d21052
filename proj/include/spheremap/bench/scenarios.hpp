#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "spheremap/bench/mission.hpp"
#include "spheremap/bench/world_gen.hpp"
#include "spheremap/grid_planner.hpp"
#include "spheremap/ltv_map.hpp"
#include "spheremap/planner.hpp"
#include "spheremap/sphere_map.hpp"

namespace spheremap::bench {

inline constexpr const char* kTimingNote =
    "timing excludes obstacle-index and clearance-field precomputation for grid baselines "
    "and SphereMap build time for sphere planners; build cost is reported by the mission";

/// Worlds up to 250 m across at 0.2 m or finer keep the grid baselines to minutes.
inline void check_desk_scale(const WorldSpec& spec) {
  if (spec.extent.maxCoeff() > 250.0) throw ConfigError("bench worlds are limited to 250 m extent");
  if (spec.resolution > 0.2 + 1e-12) throw ConfigError("bench worlds need a resolution of 0.2 m or finer");
}

/// Build settings used by the planning scenarios.
inline BuildParams bench_build_params(std::uint32_t seed = 0) {
  BuildParams b;
  b.cube_side = 20.0;
  b.kappa = 0.7;
  b.voxel_stride = 2;
  b.max_radius = 5.0;
  b.r_exp = 5.0;
  b.r_merge = 12.0;
  b.seed = seed;
  return b;
}

/// Builds a map over a fully revealed world by sweeping the update cube over
/// it twice. Used where a scenario needs a complete map to plan on.
inline MissionResult sweep_build(const World& world, const BuildParams& params, const PlannerParams& cost = {},
                                 MissionOptions options = {}) {
  options.reveal = RevealMode::full;
  return run_mission(world.grid, sweep_positions(world.grid, params.cube_side, 2), params, cost, options);
}

// ------------------------------------------------------------------ validation

struct PathCheck {
  double min_clearance = std::numeric_limits<double>::infinity();  ///< capped at the search window
  bool safe = false;
};

/// Brute-force clearance along the polyline: exact distance from every
/// piece (at most one voxel long) to every occupied voxel centre in a window
/// large enough to hold all centres nearer than the cap.
inline PathCheck check_path_clearance(const OccupancyGrid& truth, std::span<const Vec3> points, double r_min) {
  PathCheck out;
  const double res = truth.resolution();
  const double window = r_min + 2 * res;
  auto scan = [&](const Vec3& a, const Vec3& b) {
    const Vec3 mid = 0.5 * (a + b), d = b - a;
    const double len2 = d.squaredNorm();
    const int reach = int(std::ceil((window + 0.5 * std::sqrt(len2)) / res)) + 1;
    const Index3 c = truth.voxel_of(mid);
    double best = window;
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const Index3 i{c.x + dx, c.y + dy, c.z + dz};
          if (!truth.in_bounds(i) || truth.state(i) != Occupancy::occupied) continue;
          const Vec3 q = truth.center(i);
          const double t = len2 > 0 ? std::clamp((q - a).dot(d) / len2, 0.0, 1.0) : 0.0;
          best = std::min(best, (a + t * d - q).norm());
        }
    out.min_clearance = std::min(out.min_clearance, best);
  };
  if (points.empty()) return out;
  scan(points[0], points[0]);
  for (std::size_t k = 1; k < points.size(); ++k) {
    const Vec3 a = points[k - 1], b = points[k];
    const int n = std::max(1, int(std::ceil((b - a).norm() / res)));
    for (int j = 0; j < n; ++j) scan(a + (b - a) * (double(j) / n), a + (b - a) * (double(j + 1) / n));
  }
  out.safe = out.min_clearance > r_min + kClearanceSlack;
  return out;
}

// -------------------------------------------------------------------- planning

/// Everything the planner modes need, precomputed once per world and map.
struct PlanningContext {
  const OccupancyGrid* truth = nullptr;
  const SphereMap* map = nullptr;
  PlannerParams params;
  std::shared_ptr<const ObstacleIndex> obstacles;  ///< from the truth grid
  std::shared_ptr<const ClearanceField> field;     ///< grid baseline
  RrtOptions rrt;
  GridSearchOptions grid;
};

/// `grid_factor` downsamples the truth grid for the grid baselines (2 turns a
/// 0.2 m map into a 0.4 m search grid). Clearances still come from the truth.
inline PlanningContext make_context(const OccupancyGrid& truth, const SphereMap& map, const PlannerParams& params,
                                    int grid_factor = 2) {
  PlanningContext ctx;
  ctx.truth = &truth;
  ctx.map = &map;
  ctx.params = params;
  auto obstacles = std::make_shared<ObstacleIndex>(surface_obstacle_points(truth, truth.full_box()));
  ctx.field = std::make_shared<ClearanceField>(
      compute_clearance_field(grid_factor > 1 ? downsample(truth, grid_factor) : truth, *obstacles));
  ctx.obstacles = std::move(obstacles);
  return ctx;
}

inline std::optional<PlanResult> run_planner(const PlanningContext& ctx, PlanMode mode, const Vec3& start,
                                             const Vec3& goal) {
  switch (mode) {
    case PlanMode::cached: return plan_cached(*ctx.map, start, goal, ctx.params);
    case PlanMode::full_graph: return astar_sphere_graph(*ctx.map, start, goal, ctx.params);
    case PlanMode::grid:
    case PlanMode::grid_length: {
      GridSearchOptions opt = ctx.grid;
      opt.mode = mode == PlanMode::grid ? GridCostMode::safety : GridCostMode::length_only;
      try {
        return grid_astar(*ctx.field, start, goal, ctx.params, opt);
      } catch (const BudgetExceeded&) {
        return std::nullopt;
      }
    }
    case PlanMode::rrt_star: return rrt_star(*ctx.truth, *ctx.obstacles, start, goal, ctx.params, ctx.rrt);
  }
  return std::nullopt;
}

inline const std::vector<PlanMode>& all_modes() {
  static const std::vector<PlanMode> modes{PlanMode::grid, PlanMode::grid_length, PlanMode::rrt_star,
                                           PlanMode::full_graph, PlanMode::cached};
  return modes;
}

/// One planner run with its brute-force validation.
struct QueryOutcome {
  PlanMode mode;
  std::optional<PlanResult> path;
  PathCheck check;
};

inline QueryOutcome run_checked(const PlanningContext& ctx, PlanMode mode, const Vec3& start, const Vec3& goal) {
  QueryOutcome q{mode, run_planner(ctx, mode, start, goal), {}};
  if (q.path) {
    const std::vector<Vec3> pts = waypoint_positions(*q.path);
    q.check = check_path_clearance(*ctx.truth, pts, ctx.params.r_min);
  }
  return q;
}

// ---------------------------------------------------------------------- tables

/// A CSV-ready table. Columns whose name ends in "_ms" hold wall-clock values;
/// everything else is deterministic under the seed.
struct Table {
  std::vector<std::string> notes;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string fmt(double v, int precision = 6) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline bool is_timing_column(const std::string& name) {
  return name.size() > 3 && name.compare(name.size() - 3, 3, "_ms") == 0;
}

/// Notes as '#' lines, then the header row and the data rows.
inline std::string to_csv(const Table& t) {
  std::ostringstream out;
  for (const std::string& n : t.notes) out << "# " << n << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out << (k ? "," : "") << cells[k];
    out << '\n';
  };
  line(t.header);
  for (const auto& row : t.rows) line(row);
  return out.str();
}

/// Fixed-width text rendering for terminals.
inline std::string to_text(const Table& t) {
  std::vector<std::size_t> width(t.header.size(), 0);
  for (std::size_t k = 0; k < t.header.size(); ++k) width[k] = t.header[k].size();
  for (const auto& row : t.rows)
    for (std::size_t k = 0; k < row.size() && k < width.size(); ++k) width[k] = std::max(width[k], row[k].size());
  std::ostringstream out;
  for (const std::string& n : t.notes) out << "# " << n << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      out << (k ? "  " : "") << cells[k] << std::string(width[k] - cells[k].size(), ' ');
    }
    out << '\n';
  };
  line(t.header);
  for (const auto& row : t.rows) line(row);
  return out.str();
}

// ------------------------------------------------------------------- scenarios

/// Up to `n` goals, one per segment, preferring segments far from the start.
/// Each goal is the centre of the segment's widest sphere.
inline std::vector<Vec3> sample_goals(const SphereMap& map, const Vec3& start, std::size_t n, std::uint32_t seed,
                                      double min_radius = 1.2) {
  std::vector<std::pair<double, Vec3>> candidates;
  for (const auto& [label, seg] : map.segments()) {
    const SphereNode* widest = nullptr;
    for (NodeId id : seg.members) {
      const SphereNode& s = map.at(id);
      if (!widest || s.r > widest->r) widest = &s;
    }
    if (widest && widest->r >= min_radius) candidates.push_back({(widest->p - start).norm(), widest->p});
  }
  // Shuffle among the farther half so goals spread over the world.
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && std::tuple(a.second.x(), a.second.y(), a.second.z()) <
                                                           std::tuple(b.second.x(), b.second.y(), b.second.z()));
  });
  const std::size_t pool = std::max(n, candidates.size() / 2);
  candidates.resize(std::min(pool, candidates.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<Vec3> goals;
  for (std::size_t k = 0; k < candidates.size() && goals.size() < n; ++k) goals.push_back(candidates[k].second);
  return goals;
}

struct ModeSummary {
  PlanMode mode;
  std::size_t queries = 0;
  std::size_t found = 0;
  std::size_t unsafe = 0;  ///< found paths failing the brute-force check
  double total_ms = 0.0;
  double mean_length = 0.0, mean_risk = 0.0, mean_cost = 0.0;
  double min_clearance = std::numeric_limits<double>::infinity();
};

struct MultiGoalResult {
  std::vector<ModeSummary> modes;
  std::vector<QueryOutcome> outcomes;  ///< all runs, mode-major
  Table table;
};

/// Paths from one start to many goals with every mode: total query time,
/// found count and mean path figures over the found paths.
inline MultiGoalResult scenario_multi_goal(const PlanningContext& ctx, const Vec3& start, std::span<const Vec3> goals,
                                           const std::vector<PlanMode>& modes = all_modes()) {
  MultiGoalResult out;
  for (PlanMode mode : modes) {
    ModeSummary s{mode};
    for (const Vec3& goal : goals) {
      QueryOutcome q = run_checked(ctx, mode, start, goal);
      ++s.queries;
      if (q.path) {
        ++s.found;
        s.total_ms += q.path->planning_time * 1e3;
        s.mean_length += q.path->length;
        s.mean_risk += q.path->risk;
        s.mean_cost += q.path->cost;
        s.min_clearance = std::min(s.min_clearance, q.check.min_clearance);
        if (!q.check.safe) ++s.unsafe;
      }
      out.outcomes.push_back(std::move(q));
    }
    if (s.found) {
      s.mean_length /= double(s.found);
      s.mean_risk /= double(s.found);
      s.mean_cost /= double(s.found);
    }
    out.modes.push_back(s);
  }
  out.table.notes = {"multi-goal", kTimingNote};
  out.table.header = {"mode", "goals", "found", "unsafe", "mean_L", "mean_Z", "mean_J", "min_clearance", "total_ms"};
  for (const ModeSummary& s : out.modes) {
    out.table.rows.push_back({to_string(s.mode), std::to_string(s.queries), std::to_string(s.found),
                              std::to_string(s.unsafe), fmt(s.mean_length, 3), fmt(s.mean_risk, 3),
                              fmt(s.mean_cost, 3), fmt(s.min_clearance, 3), fmt(s.total_ms, 3)});
  }
  return out;
}

struct SingleGoalResult {
  std::vector<QueryOutcome> outcomes;
  Table table;

  const QueryOutcome* find(PlanMode m) const {
    for (const QueryOutcome& q : outcomes) {
      if (q.mode == m) return &q;
    }
    return nullptr;
  }
};

/// One start-goal pair with every mode: time, length L, risk Z and cost J.
inline SingleGoalResult scenario_single_goal(const PlanningContext& ctx, const Vec3& start, const Vec3& goal,
                                             const std::vector<PlanMode>& modes = all_modes()) {
  SingleGoalResult out;
  out.table.notes = {"single-goal", kTimingNote};
  out.table.header = {"mode", "found", "safe", "L", "Z", "J", "min_clearance", "waypoints", "time_ms"};
  for (PlanMode mode : modes) {
    QueryOutcome q = run_checked(ctx, mode, start, goal);
    if (q.path) {
      out.table.rows.push_back({to_string(mode), "1", q.check.safe ? "1" : "0", fmt(q.path->length, 3),
                                fmt(q.path->risk, 3), fmt(q.path->cost, 3), fmt(q.check.min_clearance, 3),
                                std::to_string(q.path->waypoints.size()), fmt(q.path->planning_time * 1e3, 3)});
    } else {
      out.table.rows.push_back({to_string(mode), "0", "0", "", "", "", "", "0", ""});
    }
    out.outcomes.push_back(std::move(q));
  }
  return out;
}

struct CompressionSample {
  std::size_t iteration = 0;
  std::size_t segments = 0;
  std::size_t known_voxels = 0;
  SizeReport sizes;
};

inline std::size_t known_voxel_count(const OccupancyGrid& g) {
  return std::size_t(std::count_if(g.states().begin(), g.states().end(),
                                   [](Occupancy s) { return s != Occupancy::unknown; }));
}

struct CompressionResult {
  std::vector<CompressionSample> samples;
  LtvMap final_ltv;
  MissionResult mission;
  Table table;
};

/// Runs the mission with raycast reveal and samples the three encodings of
/// the known map every `every` iterations and at the end.
inline CompressionResult scenario_compression(const World& world, const MissionTrace& trace, const BuildParams& params,
                                              std::size_t every, const PlannerParams& cost = {}) {
  CompressionResult out{{}, {}, {SphereMap(params, cost), OccupancyGrid(), {}}, {}};
  LtvExtractor extractor;
  MissionOptions opt;
  opt.reveal = RevealMode::raycast;
  opt.checkpoint_every = every;
  opt.on_checkpoint = [&](std::size_t k, const SphereMap& map, const OccupancyGrid& known) {
    LtvMap ltv = extractor.extract(map, known);
    out.samples.push_back({k + 1, map.segment_count(), known_voxel_count(known), size_report(ltv, known)});
    out.final_ltv = std::move(ltv);
  };
  // An empty start: nothing revealed yet.
  const OccupancyGrid blank(world.grid.resolution(), world.grid.origin(), world.grid.dims(), Occupancy::unknown);
  out.samples.push_back({0, 0, 0, size_report(LtvMap{}, blank)});
  out.mission = run_mission(world.grid, trace, params, cost, opt);
  out.table.notes = {"compression", "sizes in bytes of the LTVM map, the full grid and the grid downsampled to 1 m"};
  out.table.header = {"iteration", "segments", "known_voxels", "ltv_bytes", "coarse_grid_bytes", "grid_bytes"};
  for (const CompressionSample& s : out.samples) {
    out.table.rows.push_back({std::to_string(s.iteration), std::to_string(s.segments), std::to_string(s.known_voxels),
                              std::to_string(s.sizes.ltv_bytes),
                              std::to_string(s.sizes.coarse_grid_bytes), std::to_string(s.sizes.grid_bytes)});
  }
  return out;
}

/// Per-iteration timing series of a mission, for runtime distributions.
inline Table iteration_table(const MissionResult& mission) {
  Table t;
  t.notes = {"iterations", "per-step wall-clock of each update iteration; reveal is the simulated sensor"};
  t.header = {"iteration", "nodes", "edges", "segments", "reveal_ms", "extract_ms", "index_ms",
              "prune_ms", "expand_ms", "segment_ms", "total_ms"};
  for (const IterationRecord& r : mission.iterations) {
    const IterationReport& p = r.report;
    t.rows.push_back({std::to_string(r.index), std::to_string(p.node_count), std::to_string(p.edge_count),
                      std::to_string(p.segment_count), fmt(r.reveal_seconds * 1e3, 3), fmt(p.t_extract * 1e3, 3),
                      fmt(p.t_index * 1e3, 3), fmt(p.t_prune * 1e3, 3), fmt(p.t_expand * 1e3, 3),
                      fmt(p.t_segment * 1e3, 3), fmt(p.t_total * 1e3, 3)});
  }
  return t;
}

}  // namespace spheremap::bench
