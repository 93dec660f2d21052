#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spheremap/obstacle_index.hpp"
#include "spheremap/sphere_map.hpp"

namespace spheremap {

/// Exhaustive structural audit of a SphereMap. Returns one message per
/// violation; empty means every check passed. Cost is O(N * local density).
inline std::vector<std::string> check_invariants(const SphereMap& map) {
  std::vector<std::string> out;
  auto fail = [&](auto&&... parts) {
    std::ostringstream s;
    (s << ... << parts);
    out.push_back(s.str());
  };
  const BuildParams& bp = map.params();
  const std::vector<NodeId> ids = map.node_ids();

  // Nodes, index and the edge rule.
  std::size_t edges = 0;
  for (NodeId id : ids) {
    const SphereNode& n = map.at(id);
    if (!(n.r >= bp.r_min)) fail("node ", id, " radius ", n.r, " below r_min");
    const auto adj = map.neighbors(id);
    if (!std::is_sorted(adj.begin(), adj.end()) || std::adjacent_find(adj.begin(), adj.end()) != adj.end()) {
      fail("node ", id, " adjacency not sorted/unique");
    }
    edges += adj.size();
    std::set<NodeId> expected;
    map.node_index().for_each_within(n.p, n.r + bp.max_radius, [&](NodeId other, const Vec3& q, double rq) {
      if (other != id && intersection_radius(n.p, n.r, q, rq) > bp.r_min) expected.insert(other);
    });
    if (!std::equal(adj.begin(), adj.end(), expected.begin(), expected.end())) {
      fail("node ", id, " edges disagree with the intersection rule");
    }
    for (NodeId m : adj) {
      if (!map.has_edge(m, id)) fail("edge ", id, "-", m, " not symmetric");
    }
  }
  if (edges != 2 * map.edge_count()) fail("edge count mismatch");
  std::size_t indexed = 0;
  for (const auto& [id, p] : map.node_index().entries()) {
    ++indexed;
    const SphereNode* n = map.node(id);
    if (!n || n->p != p) fail("index entry ", id, " stale");
  }
  if (indexed != ids.size()) fail("index size mismatch");

  // Partition, connectivity, bounds.
  std::size_t members = 0;
  for (const auto& [label, seg] : map.segments()) {
    if (seg.label != label) fail("segment ", label, " label mismatch");
    if (seg.members.empty()) fail("segment ", label, " empty");
    if (!std::is_sorted(seg.members.begin(), seg.members.end())) fail("segment ", label, " members unsorted");
    members += seg.members.size();
    for (NodeId id : seg.members) {
      const SphereNode* n = map.node(id);
      if (!n || n->segment != label) {
        fail("segment ", label, " member ", id, " disagrees");
        continue;
      }
      if ((n->p - seg.bound.center).norm() + n->r > seg.bound.radius * (1 + 1e-9) + 1e-9) {
        fail("segment ", label, " bound misses node ", id);
      }
    }
    if (seg.members.empty()) continue;
    std::set<NodeId> seen{seg.members.front()};
    std::vector<NodeId> stack{seg.members.front()};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      for (NodeId m : map.neighbors(id)) {
        if (map.at(m).segment == label && seen.insert(m).second) stack.push_back(m);
      }
    }
    if (seen.size() != seg.members.size()) fail("segment ", label, " disconnected");
  }
  for (NodeId id : ids) {
    if (map.at(id).segment == kNoSegment) fail("node ", id, " unassigned");
  }
  if (members != ids.size()) fail("partition does not cover every node exactly once");

  // Portals: exactly one per adjacent pair, the maximal-intersection edge.
  std::map<SegmentPair, Portal> best;
  for (NodeId id : ids) {
    const SphereNode& a = map.at(id);
    for (NodeId m : map.neighbors(id)) {
      const SphereNode& b = map.at(m);
      if (a.segment == b.segment || a.segment > b.segment) continue;
      const Portal cand{id, m, intersection_radius(a.p, a.r, b.p, b.r)};
      auto [it, fresh] = best.try_emplace({a.segment, b.segment}, cand);
      if (fresh) continue;
      Portal& cur = it->second;
      if (cand.radius > cur.radius ||
          (cand.radius == cur.radius && std::pair(cand.a, cand.b) < std::pair(cur.a, cur.b))) {
        cur = cand;
      }
    }
  }
  if (best != map.portals()) fail("portal set differs from recomputation");
  for (const auto& [label, seg] : map.segments()) {
    std::vector<SegmentId> adj;
    for (const auto& [key, p] : best) {
      if (key.first == label) adj.push_back(key.second);
      if (key.second == label) adj.push_back(key.first);
    }
    std::sort(adj.begin(), adj.end());
    if (adj != seg.adjacent) fail("segment ", label, " adjacency list stale");
  }

  // Cached paths equal a fresh segment-restricted search.
  for (const auto& [label, seg] : map.segments()) {
    const std::vector<NodeId> ends = map.portal_endpoints(label);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < ends.size(); ++i) {
      for (std::size_t j = i + 1; j < ends.size(); ++j) {
        const auto fresh = map.path_in_segment(label, ends[i], ends[j]);
        auto it = seg.paths.find({ends[i], ends[j]});
        if (!fresh) {
          if (it != seg.paths.end()) fail("segment ", label, " caches an impossible path");
          continue;
        }
        ++expected;
        if (it == seg.paths.end()) {
          fail("segment ", label, " missing cached path ", ends[i], "-", ends[j]);
        } else if (it->second.cost != fresh->cost || it->second.nodes != fresh->nodes) {
          fail("segment ", label, " cached path ", ends[i], "-", ends[j], " stale");
        }
      }
    }
    if (seg.paths.size() != expected) fail("segment ", label, " caches extra paths");
  }

  // Compact planner graphs mirror the segment subgraphs and the portal layer.
  for (const auto& [label, seg] : map.segments()) {
    const CompactGraph& g = seg.graph;
    if (g.size() != seg.members.size()) {
      fail("segment ", label, " compact graph has wrong size");
      continue;
    }
    for (std::size_t i = 0; i < seg.members.size(); ++i) {
      std::vector<NodeId> expect, got;
      for (NodeId n : map.neighbors(seg.members[i])) {
        if (map.at(n).segment == label) expect.push_back(n);
      }
      for (std::uint32_t k = g.offsets[i]; k < g.offsets[i + 1]; ++k) {
        got.push_back(seg.members[g.targets[k]]);
        if (g.costs[k] != map.edge_cost(seg.members[i], seg.members[g.targets[k]])) {
          fail("segment ", label, " compact graph cost stale");
        }
      }
      if (got != expect) fail("segment ", label, " compact graph edges stale at node ", seg.members[i]);
    }
  }
  // Endpoint trees: parents chain to the root and no edge offers a shortcut.
  for (const auto& [label, seg] : map.segments()) {
    const CompactGraph& g = seg.graph;
    const std::size_t n = seg.members.size();
    if (seg.roots != map.portal_endpoints(label) || seg.root_cost.size() != seg.roots.size() * n ||
        seg.toward_root.size() != seg.roots.size() * n || g.size() != n) {
      fail("segment ", label, " endpoint trees stale");
      continue;
    }
    for (std::size_t k = 0; k < seg.roots.size(); ++k) {
      const double* cost = seg.root_cost.data() + k * n;
      const std::uint32_t* next = seg.toward_root.data() + k * n;
      if (cost[seg.local_index(seg.roots[k])] != 0.0) fail("segment ", label, " tree root cost nonzero");
      for (std::uint32_t i = 0; i < n; ++i) {
        if (!std::isfinite(cost[i])) fail("segment ", label, " member unreachable from its endpoint");
        if (next[i] != detail::kNoParent) {
          double step = std::numeric_limits<double>::infinity();
          for (std::uint32_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
            if (g.targets[e] == next[i]) step = g.costs[e];
          }
          if (cost[i] != cost[next[i]] + step) fail("segment ", label, " tree parent inconsistent");
        }
        for (std::uint32_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
          if (cost[g.targets[e]] > cost[i] + g.costs[e]) fail("segment ", label, " tree not shortest");
        }
      }
    }
  }
  const PortalGraph& pg = map.portal_graph();
  std::vector<NodeId> endpoints;
  for (const auto& [key, p] : map.portals()) endpoints.push_back(p.a), endpoints.push_back(p.b);
  std::sort(endpoints.begin(), endpoints.end());
  endpoints.erase(std::unique(endpoints.begin(), endpoints.end()), endpoints.end());
  if (pg.nodes != endpoints) fail("portal graph nodes differ from the portal endpoints");
  std::size_t hop_count = 2 * map.portals().size();
  for (const auto& [label, seg] : map.segments()) hop_count += 2 * seg.paths.size();
  if (pg.hops.targets.size() != hop_count) fail("portal graph hop count stale");
  // Landmark columns are exact hop-graph distances: zero at the landmark, no
  // hop shortens them, and every other node of the landmark's component has a
  // tight hop into it. Hops never leave a component.
  const std::size_t m = pg.landmarks.size();
  if (pg.component.size() != pg.nodes.size() || pg.landmark_cost.size() != pg.nodes.size() * m) {
    fail("portal graph landmark tables malformed");
  } else {
    for (std::uint32_t i = 0; i < pg.nodes.size(); ++i) {
      for (std::uint32_t e = pg.hops.offsets[i]; e < pg.hops.offsets[i + 1]; ++e) {
        if (pg.component[pg.hops.targets[e]] != pg.component[i]) fail("hop ", i, " leaves its component");
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      const std::uint32_t root = pg.landmarks[k];
      auto cost = [&](std::uint32_t i) { return pg.landmark_cost[i * m + k]; };
      if (cost(root) != 0.0) fail("landmark ", k, " not at zero cost");
      for (std::uint32_t i = 0; i < pg.nodes.size(); ++i) {
        if (pg.component[i] != pg.component[root]) {
          if (cost(i) != 0.0) fail("landmark ", k, " cost outside its component");
          continue;
        }
        bool tight = i == root;
        for (std::uint32_t e = pg.hops.offsets[i]; e < pg.hops.offsets[i + 1]; ++e) {
          const double via = cost(pg.hops.targets[e]) + pg.hops.costs[e];
          if (cost(i) > via) fail("landmark ", k, " cost not shortest at ", i);
          tight = tight || cost(i) == via;
        }
        if (!tight) fail("landmark ", k, " cost has no tight hop at ", i);
      }
    }
  }

  // No node is covered by a strictly larger one.
  for (NodeId id : ids) {
    if (map.is_redundant(id)) fail("node ", id, " redundant");
  }
  return out;
}

/// Every node radius is a lower bound of the true clearance.
inline std::vector<std::string> check_radii_safe(const SphereMap& map, const ObstacleIndex& obstacles) {
  std::vector<std::string> out;
  for (NodeId id : map.node_ids()) {
    const SphereNode& n = map.at(id);
    const double d = obstacles.nearest_distance(n.p);
    if (n.r > d + 1e-9) out.push_back("node " + std::to_string(id) + " radius exceeds clearance");
  }
  return out;
}

}  // namespace spheremap
