#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "spheremap/bench/scenarios.hpp"
#include "spheremap/invariants.hpp"
#include "test_support.hpp"

using namespace spheremap;
using namespace spheremap::bench;

namespace {

/// Length in voxels of the free run through `i` along axis `axis` (0 x, 1 y).
int free_run(const OccupancyGrid& g, Index3 i, int axis) {
  if (!g.is_free(i)) return 0;
  auto step = [&](Index3 j, int d) {
    int n = 0;
    for (;;) {
      (axis == 0 ? j.x : j.y) += d;
      if (!g.is_free(j)) return n;
      ++n;
    }
  };
  return 1 + step(i, -1) + step(i, +1);
}

WorldSpec small_spec(WorldKind kind, double side, std::uint32_t seed) {
  WorldSpec s;
  s.kind = kind;
  s.extent = Vec3(side, side, 4);
  s.seed = seed;
  return s;
}

}  // namespace

TEST(WorldGen, SameSeedSameGrid) {
  const World a = generate_world(small_spec(WorldKind::corridor_maze, 60, 42));
  const World b = generate_world(small_spec(WorldKind::corridor_maze, 60, 42));
  EXPECT_TRUE(std::equal(a.grid.states().begin(), a.grid.states().end(), b.grid.states().begin()));
  const World c = generate_world(small_spec(WorldKind::corridor_maze, 60, 43));
  EXPECT_FALSE(std::equal(a.grid.states().begin(), a.grid.states().end(), c.grid.states().begin()));
}

TEST(WorldGen, SingleRoomIsOneFreeBox) {
  WorldSpec s = small_spec(WorldKind::room_grid, 10, 1);
  s.extent.z() = 3;
  s.room_size_min = 6;
  s.room_size_max = 8;
  const World w = generate_world(s);
  ASSERT_EQ(w.landmarks.size(), 1u);
  Index3 lo{1 << 30, 1 << 30, 1 << 30}, hi{-1, -1, -1};
  std::size_t free = 0;
  w.grid.full_box().for_each([&](const Index3& i) {
    if (!w.grid.is_free(i)) return;
    ++free;
    lo = {std::min(lo.x, i.x), std::min(lo.y, i.y), std::min(lo.z, i.z)};
    hi = {std::max(hi.x, i.x), std::max(hi.y, i.y), std::max(hi.z, i.z)};
  });
  ASSERT_GT(free, 0u);
  EXPECT_EQ(free, std::size_t(hi.x - lo.x + 1) * (hi.y - lo.y + 1) * (hi.z - lo.z + 1));
  EXPECT_GE(lo.x, 1);
  EXPECT_LE(hi.x, w.grid.dims().x - 2);
  EXPECT_EQ(lo.z, 1);
  EXPECT_EQ(hi.z, w.grid.dims().z - 2);
  for (Occupancy st : w.grid.states()) EXPECT_NE(st, Occupancy::unknown);
}

TEST(WorldGen, LargestComponentHoldsMostFreeSpace) {
  for (WorldKind kind : {WorldKind::corridor_maze, WorldKind::room_grid, WorldKind::two_route}) {
    const World w = generate_world(small_spec(kind, 60, 7));
    const auto [big, total] = largest_free_component(w.grid);
    ASSERT_GT(total, 0u) << to_string(kind);
    EXPECT_GE(2 * big, total) << to_string(kind);
  }
}

TEST(WorldGen, CaveConnectivityByFloodFill) {
  const World w = generate_world(small_spec(WorldKind::perforated_cave, 200, 3));
  const auto [big, total] = largest_free_component(w.grid);
  EXPECT_GE(2 * big, total);
  // every chamber centre sits in the big component: flood from the first one
  std::vector<char> seen(w.grid.voxel_count(), 0);
  std::vector<Index3> stack{w.grid.voxel_of(w.landmarks.front())};
  ASSERT_TRUE(w.grid.is_free(stack.back()));
  seen[w.grid.linear(stack.back())] = 1;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const Index3 i = stack.back();
    stack.pop_back();
    ++reached;
    for (const Index3& d : kFaceNeighbors) {
      const Index3 j = i + d;
      if (w.grid.is_free(j) && !seen[w.grid.linear(j)]) seen[w.grid.linear(j)] = 1, stack.push_back(j);
    }
  }
  EXPECT_EQ(reached, big);
  for (const Vec3& c : w.landmarks) EXPECT_TRUE(seen[w.grid.linear(w.grid.voxel_of(c))]);
}

TEST(WorldGen, NarrowPassageWidthWithinOneVoxel) {
  WorldSpec s = small_spec(WorldKind::two_route, 40, 0);
  s.extent = Vec3(40, 30, 3);
  for (double width : {1.6, 2.0, 2.5}) {
    s.passage_width = width;
    const World w = generate_world(s);
    const Vec3 mid = 0.5 * (w.landmarks[0] + w.landmarks[1]);
    const int run = free_run(w.grid, w.grid.voxel_of(mid), 1);
    EXPECT_NEAR(run, width / s.resolution, 1.0) << width;
  }
  // room-grid passages between linked rooms
  WorldSpec r = small_spec(WorldKind::room_grid, 60, 5);
  r.passage_width = 2.0;
  const World w = generate_world(r);
  for (const auto& [a, b] : w.links) {
    const Vec3 pa = w.landmarks[a], pb = w.landmarks[b];
    const bool along_x = std::abs(pa.y() - pb.y()) < 1e-9;
    // sample halfway between the two room walls
    const Vec3 mid = 0.5 * (pa + pb);
    const int run = free_run(w.grid, w.grid.voxel_of(mid), along_x ? 1 : 0);
    EXPECT_NEAR(run, r.passage_width / r.resolution, 1.0);
  }
}

TEST(WorldGen, MazeCorridorWidthsWithinRange) {
  const WorldSpec s = small_spec(WorldKind::corridor_maze, 80, 11);
  const World w = generate_world(s);
  for (const auto& [a, b] : w.links) {
    const Vec3 pa = w.landmarks[a], pb = w.landmarks[b];
    const bool along_x = std::abs(pa.y() - pb.y()) < 1e-9;
    const int run = free_run(w.grid, w.grid.voxel_of(0.5 * (pa + pb)), along_x ? 1 : 0);
    EXPECT_GE(run, s.corridor_width_min / s.resolution - 1);
    EXPECT_LE(run, s.corridor_width_max / s.resolution + 1);
  }
}

TEST(WorldGen, InfeasibleSpecsAreConfigErrors) {
  WorldSpec s = small_spec(WorldKind::corridor_maze, 20, 0);
  s.corridor_width_min = 30;
  s.corridor_width_max = 30;
  EXPECT_THROW(generate_world(s), ConfigError);
  s = small_spec(WorldKind::room_grid, 5, 0);
  EXPECT_THROW(generate_world(s), ConfigError);
  s = small_spec(WorldKind::two_route, 20, 0);
  EXPECT_THROW(generate_world(s), ConfigError);
  s = small_spec(WorldKind::corridor_maze, 60, 0);
  s.resolution = 0;
  EXPECT_THROW(generate_world(s), ConfigError);
  WorldSpec p;
  EXPECT_THROW(apply_param(p, "world", "volcano"), ConfigError);
  EXPECT_TRUE(apply_param(p, "world", "perforated-cave"));
  EXPECT_EQ(p.kind, WorldKind::perforated_cave);
  EXPECT_FALSE(apply_param(p, "xi", "3"));
}

TEST(Mission, TourWaypointsAreConnectedThroughFreeSpace) {
  for (WorldKind kind : {WorldKind::corridor_maze, WorldKind::perforated_cave, WorldKind::room_grid}) {
    const World w = generate_world(small_spec(kind, 60, 9));
    const MissionTrace t = make_tour(w, 1.0);
    ASSERT_GT(t.waypoints.size(), 2u);
    for (const Vec3& p : t.waypoints) EXPECT_TRUE(w.grid.is_free(w.grid.voxel_of(p))) << to_string(kind);
    for (std::size_t k = 1; k < t.waypoints.size(); ++k) {
      EXPECT_LE((t.waypoints[k] - t.waypoints[k - 1]).norm(), 1.0 + 1e-9);
      EXPECT_TRUE(raycast_free(w.grid, t.waypoints[k - 1], t.waypoints[k])) << to_string(kind) << " step " << k;
    }
  }
}

TEST(Mission, ZeroLengthTraceRunsOneIteration) {
  const World w = generate_world(small_spec(WorldKind::room_grid, 20, 2));
  MissionTrace t;
  t.waypoints = {w.start};
  const MissionResult r = run_mission(w.grid, t, bench_build_params());
  EXPECT_EQ(r.iterations.size(), 1u);
  EXPECT_TRUE(check_invariants(r.map).empty());
  const MissionResult none = run_mission(w.grid, MissionTrace{}, bench_build_params());
  EXPECT_EQ(none.iterations.size(), 1u);
}

TEST(Mission, RevealStopsAtFirstObstacle) {
  const OccupancyGrid truth = spheremap::testing::make_room(Vec3(10, 10, 3));
  OccupancyGrid known(truth.resolution(), truth.origin(), truth.dims(), Occupancy::unknown);
  RevealOptions opt;
  opt.step_deg = 2.0;
  reveal_fan(truth, known, Vec3(5, 5, 1.5), opt);
  std::size_t free = 0, occupied = 0;
  known.full_box().for_each([&](const Index3& i) {
    const Occupancy s = known.state(i);
    if (s == Occupancy::unknown) return;
    EXPECT_EQ(s, truth.state(i));
    (s == Occupancy::free ? free : occupied)++;
  });
  EXPECT_GT(free, 0u);
  EXPECT_GT(occupied, 0u);
  // nothing behind the walls: the shell is one voxel thick, so no free voxel
  // outside the room can be revealed
  EXPECT_EQ(known.state({0, 0, 0}), Occupancy::unknown);
}

TEST(Mission, CorridorFlyThroughCoversRevealedSpace) {
  const OccupancyGrid truth = spheremap::testing::make_room(Vec3(40, 5, 4));
  MissionTrace t;
  for (double x = 1.5; x <= 38.5; x += 1.0) t.waypoints.emplace_back(x, 2.7, 2.2);
  BuildParams b = bench_build_params();
  b.cube_side = 12;
  b.voxel_stride = 1;
  b.kappa = 0.9;
  MissionOptions opt;
  opt.sensor.step_deg = 1.0;
  const MissionResult r = run_mission(truth, t, b, {}, opt);
  EXPECT_GE(spheremap::testing::coverage(r.map, r.known), 0.95);
  EXPECT_TRUE(check_invariants(r.map).empty());
}

TEST(Mission, SameSeedSameReports) {
  const World w = generate_world(small_spec(WorldKind::perforated_cave, 40, 4));
  const MissionTrace t = make_tour(w, 2.0);
  MissionOptions opt;
  opt.sensor.step_deg = 2.0;
  const MissionResult a = run_mission(w.grid, t, bench_build_params(5), {}, opt);
  const MissionResult b = run_mission(w.grid, t, bench_build_params(5), {}, opt);
  ASSERT_EQ(a.iterations.size(), b.iterations.size());
  for (std::size_t k = 0; k < a.iterations.size(); ++k) {
    const IterationReport &ra = a.iterations[k].report, &rb = b.iterations[k].report;
    EXPECT_EQ(ra.prune, rb.prune);
    EXPECT_EQ(ra.expand, rb.expand);
    EXPECT_EQ(ra.segment, rb.segment);
    EXPECT_EQ(ra.candidates, rb.candidates);
    EXPECT_EQ(ra.node_count, rb.node_count);
    EXPECT_EQ(ra.segment_count, rb.segment_count);
  }
  EXPECT_TRUE(std::equal(a.known.states().begin(), a.known.states().end(), b.known.states().begin()));
}

TEST(Validation, BruteForceClearance) {
  const OccupancyGrid g = spheremap::testing::make_room(Vec3(6, 6, 3));
  const std::vector<Vec3> mid{Vec3(2, 3, 1.6), Vec3(4, 3, 1.6)};
  const PathCheck ok = check_path_clearance(g, mid, 0.8);
  EXPECT_TRUE(ok.safe);
  EXPECT_GT(ok.min_clearance, 0.8);
  const std::vector<Vec3> scrape{Vec3(2, 3, 1.6), Vec3(2, 0.7, 1.6)};
  const PathCheck bad = check_path_clearance(g, scrape, 0.8);
  EXPECT_FALSE(bad.safe);
  // nearest wall centre is (1.9 or 2.1, 0.1, 1.5 or 1.7)
  EXPECT_NEAR(bad.min_clearance, std::sqrt(0.6 * 0.6 + 0.1 * 0.1 + 0.1 * 0.1), 1e-9);
}

TEST(Validation, ClearanceIsExactBetweenVertices) {
  OccupancyGrid g(0.2, Vec3::Zero(), {20, 20, 20}, Occupancy::free);
  g.set({10, 10, 10}, Occupancy::occupied);
  const Vec3 q = g.center({10, 10, 10});
  // the closest approach lies strictly inside the segment, away from any sample
  const std::vector<Vec3> pass{q + Vec3(-0.317, 0.85, 0.0), q + Vec3(0.413, 0.85, 0.0)};
  const PathCheck c = check_path_clearance(g, pass, 0.8);
  EXPECT_NEAR(c.min_clearance, 0.85, 1e-12);
  EXPECT_TRUE(c.safe);
  const std::vector<Vec3> graze{q + Vec3(-0.317, 0.79, 0.0), q + Vec3(0.413, 0.79, 0.0)};
  EXPECT_FALSE(check_path_clearance(g, graze, 0.8).safe);
  // a lattice tie at exactly r_min is not clearance above it
  const std::vector<Vec3> tie{g.center({6, 14, 10}), g.center({14, 14, 10})};
  EXPECT_FALSE(check_path_clearance(g, tie, 0.8).safe);
}

TEST(Scenarios, SingleRoomAllModesAgree) {
  World w = generate_world([] {
    WorldSpec s;
    s.kind = WorldKind::room_grid;
    s.extent = Vec3(14, 14, 3);
    s.room_size_min = 12;
    s.room_size_max = 12;
    return s;
  }());
  const MissionResult built = sweep_build(w, bench_build_params());
  PlanningContext ctx = make_context(w.grid, built.map, {});
  ctx.rrt.seed = 3;
  ctx.rrt.refine_iterations = 3000;
  const std::vector<Vec3> goals = sample_goals(built.map, w.start, 3, 1, 1.0);
  ASSERT_FALSE(goals.empty());
  const MultiGoalResult res = scenario_multi_goal(ctx, w.start, goals);
  for (const ModeSummary& m : res.modes) {
    EXPECT_EQ(m.found, goals.size()) << to_string(m.mode);
    EXPECT_EQ(m.unsafe, 0u) << to_string(m.mode);
  }
  for (std::size_t k = 0; k < goals.size(); ++k) {
    double lo = INFINITY, hi = 0;
    for (std::size_t m = 0; m < res.modes.size(); ++m) {
      const QueryOutcome& q = res.outcomes[m * goals.size() + k];
      if (q.mode == PlanMode::grid_length) continue;  // ignores risk by design
      lo = std::min(lo, q.path->cost);
      hi = std::max(hi, q.path->cost);
    }
    EXPECT_LE(hi, 1.3 * lo) << "goal " << k;
  }
  EXPECT_EQ(res.table.rows.size(), all_modes().size());
}

TEST(Scenarios, WalledOffGoalCountsAsNotFound) {
  World w = generate_world([] {
    WorldSpec s;
    s.kind = WorldKind::two_route;
    s.extent = Vec3(30, 24, 3);
    return s;
  }());
  // seal the far hall off from both routes
  const Index3 g = w.grid.voxel_of(w.goal);
  const int x0 = g.x - int(std::lround(4.5 / w.grid.resolution()));
  w.grid.fill_box(w.grid.clip({{x0, 0, 0}, {x0 + 2, w.grid.dims().y, w.grid.dims().z}}), Occupancy::occupied);
  const MissionResult built = sweep_build(w, bench_build_params());
  PlanningContext ctx = make_context(w.grid, built.map, {});
  ctx.rrt.timeout = 0.5;
  const std::vector<Vec3> goals{w.goal, w.landmarks[2]};
  const MultiGoalResult res = scenario_multi_goal(ctx, w.start, goals);
  for (const ModeSummary& m : res.modes) {
    EXPECT_EQ(m.queries, 2u);
    EXPECT_EQ(m.found, 1u) << to_string(m.mode);
    EXPECT_EQ(m.unsafe, 0u) << to_string(m.mode);
  }
}

TEST(Scenarios, SingleGoalTableSchema) {
  World w = generate_world([] {
    WorldSpec s;
    s.kind = WorldKind::two_route;
    s.extent = Vec3(30, 24, 3);
    return s;
  }());
  const MissionResult built = sweep_build(w, bench_build_params());
  const PlanningContext ctx = make_context(w.grid, built.map, {});
  const SingleGoalResult res =
      scenario_single_goal(ctx, w.start, w.goal, {PlanMode::grid, PlanMode::grid_length, PlanMode::full_graph, PlanMode::cached});
  const std::vector<std::string> header{"mode", "found", "safe", "L", "Z", "J", "min_clearance", "waypoints", "time_ms"};
  EXPECT_EQ(res.table.header, header);
  ASSERT_EQ(res.table.rows.size(), 4u);
  for (const auto& row : res.table.rows) EXPECT_EQ(row[1], "1") << row[0];
  const std::string csv = to_csv(res.table);
  EXPECT_EQ(csv.rfind("# single-goal\n# timing excludes", 0), 0u);
  EXPECT_TRUE(is_timing_column("time_ms"));
  EXPECT_FALSE(is_timing_column("min_clearance"));
  // the safety-aware modes avoid the narrow passage's risk
  EXPECT_LT(res.find(PlanMode::grid)->path->risk, res.find(PlanMode::grid_length)->path->risk);
}

TEST(Scenarios, CompressionSeriesOrderingAndGrowth) {
  const World w = generate_world(small_spec(WorldKind::perforated_cave, 60, 6));
  const MissionTrace t = make_tour(w, 2.0);
  MissionOptions unused;
  BuildParams b = bench_build_params(1);
  const CompressionResult res = scenario_compression(w, t, b, 10);
  ASSERT_GE(res.samples.size(), 3u);
  // empty start: header-only LTVM and single-run grids
  EXPECT_EQ(res.samples.front().sizes.ltv_bytes, kLtvmHeaderBytes);
  EXPECT_EQ(res.samples.front().known_voxels, 0u);
  for (std::size_t k = 1; k < res.samples.size(); ++k) {
    EXPECT_GE(res.samples[k].known_voxels, res.samples[k - 1].known_voxels);
  }
  const SizeReport& end = res.samples.back().sizes;
  EXPECT_LT(end.ltv_bytes, end.coarse_grid_bytes);
  EXPECT_LT(end.coarse_grid_bytes, end.grid_bytes);
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges(res.final_ltv.edges.begin(), res.final_ltv.edges.end()),
      portals;
  for (const auto& [key, p] : res.mission.map.portals()) portals.insert(key);
  EXPECT_EQ(edges, portals);
  EXPECT_EQ(res.table.rows.size(), res.samples.size());
}

TEST(Scenarios, DeskScaleCheck) {
  WorldSpec s;
  EXPECT_NO_THROW(check_desk_scale(s));
  s.extent.x() = 300;
  EXPECT_THROW(check_desk_scale(s), ConfigError);
  s.extent.x() = 100;
  s.resolution = 0.3;
  EXPECT_THROW(check_desk_scale(s), ConfigError);
}

TEST(Scenarios, CsvRendering) {
  Table t;
  t.notes = {"demo"};
  t.header = {"a", "b_ms"};
  t.rows = {{"1", "2.5"}, {"x", ""}};
  EXPECT_EQ(to_csv(t), "# demo\na,b_ms\n1,2.5\nx,\n");
  EXPECT_EQ(fmt(1.0 / 3.0, 3), "0.333");
  EXPECT_EQ(fmt(INFINITY), "inf");
  EXPECT_NE(to_text(t).find("a  b_ms"), std::string::npos);
}
