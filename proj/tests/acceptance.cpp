// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fuzz_support.hpp"
#include "planner_oracle.hpp"
#include "spheremap/bench/scenarios.hpp"
#include "spheremap/invariants.hpp"
#include "spheremap/ltv_map.hpp"
#include "spheremap/snapshot.hpp"
#include "test_support.hpp"

using namespace spheremap;
using namespace spheremap::bench;

namespace {

// criterion 1
constexpr int kOracleGraphs = 100;
constexpr double kOracleSeconds = 10.0;
// criterion 2
constexpr double kRMin = 0.8;
// criterion 3
constexpr double kCachedOverFull = 50.0;
constexpr double kFullOverGrid = 50.0;
constexpr double kSpeedPairMinDistance = 100.0;
constexpr int kSpeedPairs = 20;
constexpr int kSpeedGridPairs = 6;
constexpr int kSpeedRepeats = 5;
// criterion 4
constexpr double kCachedCostRatio = 1.3;
constexpr double kFullCostRatio = 1.25;
constexpr int kMinCostFixtures = 5;
// criterion 5
constexpr double kRiskRatio = 2.0;
// criterion 6
constexpr double kCoverage = 0.95;
constexpr int kCoverageIterations = 20;
// criterion 7
constexpr double kLocalityRatio = 1.5;
constexpr int kLocalityRepeats = 7;
constexpr double kReferenceMeanIterationMs = 150.0;
// criterion 10
constexpr int kFuzzCases = 1000;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string strf(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Every planner run of the suite, for the clearance criterion.
struct SafetyLedger {
  std::size_t paths = 0, unsafe = 0, queries = 0;
  double min_clearance = INFINITY;
  std::string min_where;
  std::vector<std::string> failures;

  void add(const std::string& where, const QueryOutcome& q) {
    ++queries;
    if (!q.path) return;
    ++paths;
    if (q.check.min_clearance < min_clearance) {
      min_clearance = q.check.min_clearance;
      min_where = where + " " + to_string(q.mode);
    }
    if (!q.check.safe) {
      ++unsafe;
      failures.push_back(where + " " + to_string(q.mode) + strf(" clearance %.3f", q.check.min_clearance));
    }
  }
  template <typename Outcomes>
  void add_all(const std::string& where, const Outcomes& outcomes) {
    for (const QueryOutcome& q : outcomes) add(where, q);
  }
};

SafetyLedger safety;

WorldSpec spec(WorldKind kind, Vec3 extent, std::uint32_t seed) {
  WorldSpec s;
  s.kind = kind;
  s.extent = extent;
  s.seed = seed;
  return s;
}

PlanningContext bench_context(const World& w, const SphereMap& map, int grid_factor) {
  PlanningContext ctx = make_context(w.grid, map, PlannerParams{}, grid_factor);
  ctx.rrt.timeout = 5.0;
  ctx.rrt.seed = w.spec.seed;
  return ctx;
}

// Invariant audit hook for mission checkpoints.
struct InvariantLog {
  std::size_t checkpoints = 0;
  std::vector<std::string> problems;

  std::function<void(std::size_t, const SphereMap&, const OccupancyGrid&)> hook(const std::string& world) {
    return [this, world](std::size_t k, const SphereMap& map, const OccupancyGrid&) { audit(world, k, map); };
  }
  void audit(const std::string& world, std::size_t k, const SphereMap& map) {
    ++checkpoints;
    for (const std::string& p : check_invariants(map)) {
      problems.push_back(world + strf(" iteration %zu: ", k + 1) + p);
    }
  }
};

InvariantLog invariants;

// ------------------------------------------------------------------ criteria

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const PlannerParams pp;
  int found = 0, mismatched = 0;
  for (int seed = 0; seed < kOracleGraphs; ++seed) {
    const auto g = spheremap::testing::random_graph(std::uint32_t(seed), pp);
    const auto oracle = spheremap::testing::ucs_oracle(g.spheres, g.start, g.goal, pp);
    const auto plan = astar_sphere_graph(g.map, g.start, g.goal, pp);
    if (plan.has_value() != std::isfinite(oracle.cost) || (plan && plan->cost != oracle.cost)) ++mismatched;
    found += plan.has_value();
  }
  const double t = seconds_since(t0);
  report(1, "oracle optimality", mismatched == 0 && t < kOracleSeconds,
         strf("%d graphs (%d with a path), %d cost mismatches at zero tolerance, %.2f s (limit %.0f s)", kOracleGraphs,
              found, mismatched, t, kOracleSeconds));
}

void criterion_3_and_maze() {
  const World w = generate_world(spec(WorldKind::corridor_maze, Vec3(150, 150, 4), 1));
  MissionOptions opt;
  opt.checkpoint_every = 50;
  opt.on_checkpoint = invariants.hook("maze");
  const auto tb = std::chrono::steady_clock::now();
  const MissionResult built = sweep_build(w, bench_build_params(1), {}, opt);
  const double build_s = seconds_since(tb);
  const PlanningContext ctx = bench_context(w, built.map, 2);

  // landmark pairs far apart, every query crossing many segments
  std::mt19937 rng(3);
  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (int tries = 0; pairs.size() < std::size_t(kSpeedPairs) && tries < 100000; ++tries) {
    const Vec3 a = w.landmarks[rng() % w.landmarks.size()], b = w.landmarks[rng() % w.landmarks.size()];
    if ((a - b).norm() >= kSpeedPairMinDistance) pairs.push_back({a, b});
  }
  for (const auto& [a, b] : pairs) {  // warm-up
    run_planner(ctx, PlanMode::full_graph, a, b);
    run_planner(ctx, PlanMode::cached, a, b);
  }
  std::vector<double> t_full, t_cached, t_grid, r_cf, r_fg;
  bool all_found = true;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [a, b] = pairs[k];
    double best_f = INFINITY, best_c = INFINITY;
    for (int rep = 0; rep < kSpeedRepeats; ++rep) {
      const QueryOutcome f = run_checked(ctx, PlanMode::full_graph, a, b);
      const QueryOutcome c = run_checked(ctx, PlanMode::cached, a, b);
      if (rep == 0) safety.add("maze speed pair", f), safety.add("maze speed pair", c);
      if (!f.path || !c.path) {
        all_found = false;
        break;
      }
      best_f = std::min(best_f, f.path->planning_time);
      best_c = std::min(best_c, c.path->planning_time);
    }
    t_full.push_back(best_f);
    t_cached.push_back(best_c);
    r_cf.push_back(best_f / best_c);
    if (k < std::size_t(kSpeedGridPairs)) {
      const QueryOutcome g = run_checked(ctx, PlanMode::grid, a, b);
      safety.add("maze speed pair", g);
      if (!g.path) {
        all_found = false;
        continue;
      }
      t_grid.push_back(g.path->planning_time);
      r_fg.push_back(g.path->planning_time / best_f);
    }
  }
  auto sum = [](const std::vector<double>& v, std::size_t n) {
    double s = 0;
    for (std::size_t k = 0; k < std::min(n, v.size()); ++k) s += v[k];
    return s;
  };
  const double cf = sum(t_full, t_full.size()) / sum(t_cached, t_cached.size());
  const double fg = sum(t_grid, t_grid.size()) / sum(t_full, t_grid.size());
  const double cf_med = median(r_cf), fg_med = median(r_fg);

  // desk-scale multi-goal runs on the maze and a cave, for the suite-wide checks
  const std::vector<Vec3> goals = sample_goals(built.map, w.start, 11, 1);
  const MultiGoalResult maze_mg = scenario_multi_goal(ctx, w.start, goals);
  safety.add_all("maze multi-goal", maze_mg.outcomes);
  std::string cave_note;
  {
    const World cave = generate_world(spec(WorldKind::perforated_cave, Vec3(120, 120, 4), 2));
    MissionOptions copt;
    copt.on_checkpoint = invariants.hook("cave sweep");
    const MissionResult cbuilt = sweep_build(cave, bench_build_params(2), {}, copt);
    const PlanningContext cctx = bench_context(cave, cbuilt.map, 2);
    const std::vector<Vec3> cgoals = sample_goals(cbuilt.map, cave.start, 11, 2);
    const MultiGoalResult cave_mg = scenario_multi_goal(cctx, cave.start, cgoals);
    safety.add_all("cave multi-goal", cave_mg.outcomes);
    double grid_ms = 0, cached_ms = 0;
    std::string found;
    for (const ModeSummary& m : cave_mg.modes) {
      if (m.mode == PlanMode::grid) grid_ms = m.total_ms;
      if (m.mode == PlanMode::cached) cached_ms = m.total_ms;
      found += strf(" %s %zu/%zu", to_string(m.mode), m.found, m.queries);
    }
    cave_note = strf("; cave 11 goals: cached total %.2f ms = %.3f%% of grid %.0f ms, found%s", cached_ms,
                     100 * cached_ms / grid_ms, grid_ms, found.c_str());
  }
  std::string maze_found;
  for (const ModeSummary& m : maze_mg.modes) maze_found += strf(" %s %zu/%zu", to_string(m.mode), m.found, m.queries);

  // gated on both the ratio of summed times and the median per-query ratio
  report(3, "speed ordering",
         all_found && std::min(cf, cf_med) >= kCachedOverFull && std::min(fg, fg_med) >= kFullOverGrid,
         strf("150 m maze, %zu nodes, build %.1f s; %zu pairs >= %.0f m: full/cached summed %.1fx, median per query "
              "%.1fx, lowest %.1fx (need %.0fx); grid/full summed %.1fx over %zu pairs, median %.1fx (need %.0fx); mean ms cached %.3f full %.3f "
              "grid %.1f; maze 11 goals found%s%s",
              built.map.node_count(), build_s, pairs.size(), kSpeedPairMinDistance, cf, cf_med,
              *std::min_element(r_cf.begin(), r_cf.end()), kCachedOverFull, fg,
              t_grid.size(), fg_med, kFullOverGrid, 1e3 * sum(t_cached, 99) / double(t_cached.size()),
              1e3 * sum(t_full, 99) / double(t_full.size()), 1e3 * sum(t_grid, 99) / double(t_grid.size()),
              maze_found.c_str(), cave_note.c_str()));
}

void criterion_4() {
  struct Fixture {
    WorldKind kind;
    std::uint32_t seed;
  };
  const std::vector<Fixture> fixtures{{WorldKind::perforated_cave, 1}, {WorldKind::perforated_cave, 2},
                                      {WorldKind::perforated_cave, 3}, {WorldKind::perforated_cave, 4},
                                      {WorldKind::perforated_cave, 5}, {WorldKind::corridor_maze, 1},
                                      {WorldKind::corridor_maze, 2},   {WorldKind::corridor_maze, 3}};
  int ok = 0, evaluated = 0;
  double worst_cf = 0, worst_fg = 0;
  std::string bad;
  for (const Fixture& f : fixtures) {
    const World w = generate_world(spec(f.kind, Vec3(60, 60, 4), f.seed));
    MissionOptions opt;
    opt.on_checkpoint = invariants.hook(std::string(to_string(f.kind)) + " fixture");
    const MissionResult built = sweep_build(w, bench_build_params(f.seed), {}, opt);
    const PlanningContext ctx = bench_context(w, built.map, 1);  // fine grid at the map resolution
    const SingleGoalResult r = scenario_single_goal(ctx, w.start, w.goal);
    safety.add_all("single-goal fixture", r.outcomes);
    const auto *g = r.find(PlanMode::grid), *fu = r.find(PlanMode::full_graph), *c = r.find(PlanMode::cached);
    ++evaluated;
    if (!g->path || !fu->path || !c->path) {
      bad += strf(" %s/%u no path", to_string(f.kind), f.seed);
      continue;
    }
    const double cf = c->path->cost / fu->path->cost, fg = fu->path->cost / g->path->cost;
    worst_cf = std::max(worst_cf, cf);
    worst_fg = std::max(worst_fg, fg);
    if (cf <= kCachedCostRatio && fg <= kFullCostRatio) ++ok;
    else bad += strf(" %s/%u cached/full %.3f full/grid %.3f", to_string(f.kind), f.seed, cf, fg);
  }
  report(4, "cost quality", ok == evaluated && ok >= kMinCostFixtures,
         strf("%d/%d fixtures within limits (need all, at least %d); worst cached/full %.3f (limit %.2f), worst "
              "full/fine-grid %.3f (limit %.2f)%s",
              ok, evaluated, kMinCostFixtures, worst_cf, kCachedCostRatio, worst_fg, kFullCostRatio, bad.c_str()));
}

void criterion_5() {
  const World w = generate_world(spec(WorldKind::two_route, Vec3(40, 24, 5), 7));
  MissionOptions opt;
  opt.on_checkpoint = invariants.hook("two-route");
  const MissionResult built = sweep_build(w, bench_build_params(7), {}, opt);
  const PlanningContext ctx = bench_context(w, built.map, 2);
  const SingleGoalResult r = scenario_single_goal(ctx, w.start, w.goal);
  safety.add_all("two-route", r.outcomes);
  const QueryOutcome* base = r.find(PlanMode::grid_length);
  bool pass = base && base->path;
  std::string detail = pass ? strf("length-only grid Z %.2f L %.2f;", base->path->risk, base->path->length)
                            : std::string("length-only grid found no path;");
  for (PlanMode m : {PlanMode::grid, PlanMode::rrt_star, PlanMode::full_graph, PlanMode::cached}) {
    const QueryOutcome* q = r.find(m);
    if (!q->path) {
      pass = false;
      detail += strf(" %s no path", to_string(m));
      continue;
    }
    const bool ok = base && base->path && kRiskRatio * q->path->risk <= base->path->risk;
    pass = pass && ok;
    detail += strf(" %s Z %.2f L %.2f%s", to_string(m), q->path->risk, q->path->length, ok ? "" : " (too risky)");
  }
  report(5, "risk reduction", pass, detail + strf(" (need Z at least %.0fx lower)", kRiskRatio));
}

void criterion_6() {
  const OccupancyGrid room = spheremap::testing::make_room(Vec3(20, 20, 3));
  SphereMap map{BuildParams{}};
  const Vec3 centre = room.origin() + 0.5 * room.extent();
  int reached = -1;
  double cov = 0;
  for (int it = 1; it <= kCoverageIterations; ++it) {
    map.update_iteration(room, centre);
    cov = spheremap::testing::coverage(map, room);
    if (cov >= kCoverage && reached < 0) reached = it;
  }
  invariants.audit("room 20x20x3", kCoverageIterations - 1, map);
  report(6, "coverage fixpoint", reached > 0,
         strf("20x20x3 m room: coverage %.4f after %d iterations, first >= %.2f at iteration %d (limit %d); %zu "
              "spheres",
              cov, kCoverageIterations, kCoverage, reached, kCoverageIterations, map.node_count()));
}

void criterion_7_8_9() {
  // Locality: the same first visit to a fixed scene, with a mapped region
  // elsewhere that is four times larger in the second case.
  const World w = generate_world(spec(WorldKind::corridor_maze, Vec3(200, 50, 4), 5));
  const BuildParams bp = bench_build_params(5);
  const double pitch = 0.75 * bp.cube_side;
  auto region = [&](double x0, double x1) {
    MissionTrace t;
    for (double y = 0.5 * pitch; y < 50; y += pitch) {
      for (double x = x0 + 0.5 * pitch; x < x1; x += pitch) t.waypoints.emplace_back(x, y, 2.0);
    }
    return t;
  };
  MissionOptions full;
  full.reveal = RevealMode::full;
  const MissionResult small = run_mission(w.grid, region(40, 80), bp, {}, full);
  const MissionResult large = run_mission(w.grid, region(40, 200), bp, {}, full);
  const Vec3 scene(10.0, 25.0, 2.0);  // cube spans x in [0, 20]; both regions start at x = 40
  std::vector<double> ts, tl;
  for (int rep = 0; rep < kLocalityRepeats; ++rep) {
    SphereMap a = small.map, b = large.map;
    ts.push_back(a.update_iteration(w.grid, scene).t_total);
    tl.push_back(b.update_iteration(w.grid, scene).t_total);
  }
  const double ms = median(ts), ml = median(tl), ratio = ml / ms;

  // cave mission: invariants at checkpoints, compression at the end, mean iteration time
  const World cave = generate_world(spec(WorldKind::perforated_cave, Vec3(80, 80, 4), 3));
  const MissionTrace tour = make_tour(cave, 2.0);
  MissionOptions opt;
  opt.checkpoint_every = 10;
  LtvExtractor extractor;
  LtvMap ltv;
  SizeReport sizes;
  std::set<std::pair<std::uint32_t, std::uint32_t>> adjacency;
  opt.on_checkpoint = [&](std::size_t k, const SphereMap& map, const OccupancyGrid& known) {
    invariants.audit("cave mission", k, map);
    ltv = extractor.extract(map, known);
    sizes = size_report(ltv, known);
    adjacency.clear();
    for (const auto& [label, seg] : map.segments()) {
      for (SegmentId other : seg.adjacent) adjacency.insert({std::min(label, other), std::max(label, other)});
    }
  };
  const MissionResult mission = run_mission(cave.grid, tour, bench_build_params(3), {}, opt);
  double mean_ms = 0;
  for (const IterationRecord& r : mission.iterations) mean_ms += 1e3 * r.report.t_total;
  mean_ms /= double(mission.iterations.size());

  report(7, "update locality", ratio <= kLocalityRatio && ratio >= 1.0 / kLocalityRatio,
         strf("first visit to a fixed scene: median %.1f ms with %zu nodes elsewhere, %.1f ms with %zu nodes; "
              "ratio %.3f (limit %.1fx either way); soft reference: cave mission mean iteration %.1f ms over %zu "
              "iterations vs about %.0f ms reported",
              1e3 * ms, small.map.node_count(), 1e3 * ml, large.map.node_count(), ratio, kLocalityRatio, mean_ms,
              mission.iterations.size(), kReferenceMeanIterationMs));

  const std::set<std::pair<std::uint32_t, std::uint32_t>> edges(ltv.edges.begin(), ltv.edges.end());
  const bool ordered = sizes.ltv_bytes < sizes.coarse_grid_bytes && sizes.coarse_grid_bytes < sizes.grid_bytes;
  const bool edges_match = edges == adjacency && edges.size() == ltv.edges.size();
  report(9, "compression ordering", ordered && edges_match,
         strf("cave mission end: ltv %zu B < 1 m grid %zu B < 0.2 m grid %zu B: %s; %zu LTV edges vs %zu adjacent "
              "segment pairs: %s",
              sizes.ltv_bytes, sizes.coarse_grid_bytes, sizes.grid_bytes, ordered ? "yes" : "no", ltv.edges.size(),
              adjacency.size(), edges_match ? "equal" : "differ"));
}

void criterion_8() {
  std::string detail = strf("%zu checkpoints over maze, cave, fixture, two-route and room worlds; %zu violations",
                            invariants.checkpoints, invariants.problems.size());
  for (std::size_t k = 0; k < std::min<std::size_t>(3, invariants.problems.size()); ++k) {
    detail += "; " + invariants.problems[k];
  }
  report(8, "structural invariants", invariants.problems.empty() && invariants.checkpoints > 0, detail);
}

void criterion_2() {
  std::string detail = strf("%zu planner runs, %zu paths, %zu below r_min = %.1f m; smallest clearance r_min + %.3g m "
                            "(%s)",
                            safety.queries, safety.paths, safety.unsafe, kRMin, safety.min_clearance - kRMin,
                            safety.min_where.c_str());
  for (std::size_t k = 0; k < std::min<std::size_t>(3, safety.failures.size()); ++k) detail += "; " + safety.failures[k];
  report(2, "clearance of every path", safety.unsafe == 0 && safety.paths > 0, detail);
}

void criterion_10() {
  std::mt19937_64 rng(10);
  int grid_bad = 0, smap_bad = 0, ltv_bad = 0, size_bad = 0;
  for (int k = 0; k < kFuzzCases; ++k) {
    const OccupancyGrid g = spheremap::testing::random_grid(rng);
    const auto bytes = save_grid(g);
    const OccupancyGrid back = load_grid(bytes);
    if (save_grid(back) != bytes || !std::equal(g.states().begin(), g.states().end(), back.states().begin(),
                                                back.states().end())) {
      ++grid_bad;
    }
  }
  for (int k = 0; k < kFuzzCases; ++k) {
    const SphereMap m = spheremap::testing::random_sphere_map(rng);
    const auto bytes = encode_snapshot(m);
    if (encode_snapshot(decode_snapshot(bytes)) != bytes) ++smap_bad;
  }
  for (int k = 0; k < kFuzzCases; ++k) {
    const LtvMap m = spheremap::testing::random_ltv_map(rng);
    const auto bytes = encode(m);
    const LtvMap back = decode(bytes);
    if (!(back == m) || encode(back) != bytes) ++ltv_bad;
    // 16-byte header, 34 bytes per segment, 8 per edge, 12 per goal
    if (bytes.size() != 16 + 34 * m.segments.size() + 8 * m.edges.size() + 12 * m.goals.size()) ++size_bad;
  }
  report(10, "format round trips", grid_bad + smap_bad + ltv_bad + size_bad == 0,
         strf("%d cases each: VOXGRID %d, SMAP %d, LTVM %d mismatches; LTVM length formula off in %d", kFuzzCases,
              grid_bad, smap_bad, ltv_bad, size_bad));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  std::printf("# acceptance: xi = 7, d_max = 2 m, r_min = %.1f m\n", kRMin);
  try {
    criterion_1();
    criterion_3_and_maze();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7_8_9();
    criterion_8();
    criterion_2();
    criterion_10();
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    return 1;
  }
  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  std::printf("# summary (%.0f s)\n", seconds_since(t0));
  for (const Verdict& v : verdicts) {
    std::printf("%s %d %s\n", v.pass ? "PASS" : "FAIL", v.id, v.name.c_str());
    failed += !v.pass;
  }
  return failed == 0 && verdicts.size() == 10 ? 0 : 1;
}
