#include <gtest/gtest.h>

#include <random>

#include "spheremap/invariants.hpp"
#include "spheremap/sphere_map.hpp"
#include "test_support.hpp"

using namespace spheremap;
using spheremap::testing::all_obstacles;
using spheremap::testing::coverage;
using spheremap::testing::make_room;

namespace {

BuildParams small_params() {
  BuildParams b;
  b.cube_side = 12.0;
  b.max_radius = 4.0;
  b.r_exp = 3.0;
  b.r_merge = 8.0;
  return b;
}

void expect_clean(const SphereMap& map) {
  const auto problems = check_invariants(map);
  for (const auto& p : problems) ADD_FAILURE() << p;
}

}  // namespace

TEST(SphereGraph, EdgesFollowIntersectionRule) {
  SphereMap map(small_params());
  const NodeId a = map.add_node(Vec3(0, 0, 0), 1.0);
  const NodeId b = map.add_node(Vec3(1, 0, 0), 1.0);    // intersection sqrt(3)/2 > 0.8
  const NodeId c = map.add_node(Vec3(2.3, 0, 0), 1.0);  // b-c intersection 0.71
  EXPECT_TRUE(map.has_edge(a, b));
  EXPECT_TRUE(map.has_edge(b, a));
  EXPECT_FALSE(map.has_edge(b, c));
  EXPECT_FALSE(map.has_edge(a, c));
  map.set_radius(c, 1.5);
  EXPECT_TRUE(map.has_edge(b, c));
  map.remove_node(b);
  EXPECT_EQ(map.edge_count(), 0u);
  EXPECT_THROW(map.remove_node(b), NotFoundError);
}

TEST(SphereGraph, RedundancyNeedsStrictlyLargerCoverer) {
  SphereMap map(small_params());
  map.add_node(Vec3(0, 0, 0), 2.0);
  EXPECT_TRUE(map.is_redundant(Sphere{Vec3(0.5, 0, 0), 1.0}));
  EXPECT_FALSE(map.is_redundant(Sphere{Vec3(0.1, 0, 0), 2.0}));  // equal radius never covers
  EXPECT_FALSE(map.is_redundant(Sphere{Vec3(2.5, 0, 0), 1.0}));
  // mu r=1.5 at (1.2,0,0) covers about 0.46 of a unit ball: below kappa 0.9
  SphereMap other(small_params());
  other.add_node(Vec3(1.2, 0, 0), 1.5);
  const double frac = coverage_fraction(Sphere{Vec3::Zero(), 1.0}, Sphere{Vec3(1.2, 0, 0), 1.5});
  EXPECT_GT(frac, 0.3);
  EXPECT_LT(frac, 0.9);
  EXPECT_FALSE(other.is_redundant(Sphere{Vec3::Zero(), 1.0}));
}

TEST(SphereMapUpdate, AllUnknownGridYieldsNothing) {
  const OccupancyGrid g(0.2, Vec3::Zero(), {40, 40, 20}, Occupancy::unknown);
  SphereMap map(small_params());
  const auto rep = map.update_iteration(g, Vec3(4, 4, 2));
  EXPECT_EQ(map.node_count(), 0u);
  EXPECT_EQ(rep.candidates, 0u);
}

TEST(SphereMapUpdate, RoomConvergesSafeAndClean) {
  const OccupancyGrid g = make_room(Vec3(8, 8, 3));
  const ObstacleIndex obstacles = all_obstacles(g);
  SphereMap map(small_params());
  bool quiet = false;
  for (int it = 0; it < 20 && !quiet; ++it) {
    quiet = map.update_iteration(g, Vec3(4.1, 4.1, 1.7)).quiescent();
    expect_clean(map);
    for (const auto& p : check_radii_safe(map, obstacles)) ADD_FAILURE() << p;
  }
  EXPECT_TRUE(quiet);
  EXPECT_GT(map.node_count(), 0u);
  EXPECT_GE(map.segment_count(), 1u);
  EXPECT_GE(coverage(map, g), 0.9);
}

TEST(SphereMapUpdate, DeterministicUnderSeed) {
  const OccupancyGrid g = make_room(Vec3(6, 5, 3));
  auto run = [&] {
    SphereMap map(small_params());
    for (int it = 0; it < 3; ++it) map.update_iteration(g, Vec3(3, 2.5, 1.6));
    return map.to_raw();
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t k = 0; k < a.nodes.size(); ++k) {
    EXPECT_EQ(a.nodes[k].p, b.nodes[k].p);
    EXPECT_EQ(a.nodes[k].r, b.nodes[k].r);
    EXPECT_EQ(a.nodes[k].segment, b.nodes[k].segment);
  }
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.portals, b.portals);
}

TEST(SphereMapUpdate, NewObstaclePrunesUnsafeSpheres) {
  OccupancyGrid g = make_room(Vec3(8, 8, 3));
  SphereMap map(small_params());
  for (int it = 0; it < 4; ++it) map.update_iteration(g, Vec3(4, 4, 1.7));
  // drop a pillar into the middle of the room
  g.fill_box({{18, 18, 1}, {24, 24, 16}}, Occupancy::occupied);
  for (int it = 0; it < 4; ++it) map.update_iteration(g, Vec3(1.5, 1.5, 1.7));
  expect_clean(map);
  for (const auto& p : check_radii_safe(map, all_obstacles(g))) ADD_FAILURE() << p;
}

TEST(SphereMapUpdate, NodesOutsideCubeAreUntouched) {
  const OccupancyGrid g = make_room(Vec3(30, 6, 3));
  BuildParams b = small_params();
  b.cube_side = 8.0;
  SphereMap map(b);
  map.update_iteration(g, Vec3(4, 3, 1.7));
  const auto before = map.to_raw();
  map.update_iteration(g, Vec3(26, 3, 1.7));
  for (const SphereNode& n : before.nodes) {
    if (n.p.x() > 12.0 + b.max_radius) continue;  // beyond the second cube plus reach
    const SphereNode* now = map.node(n.id);
    ASSERT_NE(now, nullptr);
    EXPECT_EQ(now->r, n.r);
  }
  expect_clean(map);
}

TEST(SphereMapUpdate, SnapshotIsIndependent) {
  const OccupancyGrid g = make_room(Vec3(10, 6, 3));
  SphereMap map(small_params());
  map.update_iteration(g, Vec3(3, 3, 1.7));
  const SphereMap snap = map.snapshot();
  const std::size_t n = snap.node_count();
  map.update_iteration(g, Vec3(8, 3, 1.7));
  EXPECT_EQ(snap.node_count(), n);
  expect_clean(snap);
}

TEST(Segments, CorridorSplitsIntoSeveralSegmentsWithPortals) {
  const OccupancyGrid g = make_room(Vec3(40, 3, 3));
  BuildParams b = small_params();
  b.cube_side = 50.0;
  SphereMap map(b);
  for (int it = 0; it < 3; ++it) map.update_iteration(g, Vec3(20, 1.7, 1.7));
  expect_clean(map);
  EXPECT_GE(map.segment_count(), 3u);
  EXPECT_FALSE(map.portals().empty());
  for (const auto& [label, seg] : map.segments()) {
    for (const auto& [key, path] : seg.paths) {
      EXPECT_EQ(path.nodes.front(), key.first);
      EXPECT_EQ(path.nodes.back(), key.second);
    }
  }
}

TEST(Segments, RawStateRoundTrip) {
  const OccupancyGrid g = make_room(Vec3(20, 4, 3));
  SphereMap map(small_params());
  for (int it = 0; it < 2; ++it) map.update_iteration(g, Vec3(6, 2, 1.7));
  const SphereMap copy = SphereMap::from_raw(map.params(), map.cost_params(), map.to_raw());
  EXPECT_EQ(copy.node_count(), map.node_count());
  EXPECT_EQ(copy.edge_count(), map.edge_count());
  EXPECT_EQ(copy.portals(), map.portals());
  expect_clean(copy);
}

TEST(SphereMapUpdate, ConnectCandidatesDropsIsolatedSpheres) {
  const OccupancyGrid g = make_room(Vec3(24, 6, 3));
  auto build = [&](bool connect) {
    BuildParams b = small_params();
    b.cube_side = 30.0;
    b.connect_candidates = connect;
    SphereMap map(b);
    for (int it = 0; it < 3; ++it) map.update_iteration(g, Vec3(12, 3, 1.6));
    return map;
  };
  auto isolated = [](const SphereMap& map) {
    std::size_t n = 0;
    for (NodeId id : map.node_ids()) n += map.neighbors(id).empty();
    return n;
  };
  const SphereMap on = build(true), off = build(false);
  expect_clean(on);
  EXPECT_EQ(isolated(on), 0u);
  EXPECT_LE(on.segment_count(), off.segment_count());
  EXPECT_GE(coverage(on, g), 0.9);
}
