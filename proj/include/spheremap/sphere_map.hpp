#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spheremap/cost_model.hpp"
#include "spheremap/graph_search.hpp"
#include "spheremap/node_index.hpp"
#include "spheremap/obstacle_index.hpp"
#include "spheremap/params.hpp"
#include "spheremap/sphere_geometry.hpp"
#include "spheremap/voxel_grid.hpp"

namespace spheremap {

using SegmentId = std::uint32_t;
inline constexpr SegmentId kNoSegment = std::numeric_limits<SegmentId>::max();

struct SphereNode {
  NodeId id = 0;
  Vec3 p = Vec3::Zero();
  double r = 0.0;
  SegmentId segment = kNoSegment;

  Sphere sphere() const { return {p, r}; }
};

using SegmentPair = std::pair<SegmentId, SegmentId>;
using NodePair = std::pair<NodeId, NodeId>;

inline SegmentPair make_segment_pair(SegmentId a, SegmentId b) { return a < b ? SegmentPair{a, b} : SegmentPair{b, a}; }
inline NodePair make_node_pair(NodeId a, NodeId b) { return a < b ? NodePair{a, b} : NodePair{b, a}; }

/// Best-intersection edge between two adjacent segments. `a` belongs to the
/// lower segment label of the pair, `b` to the higher one.
struct Portal {
  NodeId a = 0;
  NodeId b = 0;
  double radius = 0.0;

  friend bool operator==(const Portal&, const Portal&) = default;
};

/// Optimal intra-segment path between two portal endpoints, stored from the
/// lower node id to the higher one.
struct CachedPath {
  std::vector<NodeId> nodes;
  double cost = 0.0;
};

/// Compressed adjacency over local indices 0..n-1, with edge costs under the
/// map's cost parameters and the intersection radius of each edge.
struct CompactGraph {
  std::vector<std::uint32_t> offsets{0};  ///< row starts, n + 1 entries
  std::vector<std::uint32_t> targets;
  std::vector<double> costs;
  std::vector<double> widths;

  std::size_t size() const { return offsets.size() - 1; }
};

/// Portal endpoints as a dense graph: cached intra-segment paths plus the
/// edges that cross portals. Cached paths get an infinite width.
struct PortalGraph {
  std::vector<NodeId> nodes;  ///< sorted endpoint ids
  std::vector<SegmentId> segments;
  std::vector<Vec3> positions;
  CompactGraph hops;
  /// Connected component of each node in the hop graph.
  std::vector<std::uint32_t> component;
  /// Hop-graph costs from a few far-apart landmark nodes, node-major
  /// (landmark_cost[i * landmarks.size() + k]), zero where unreachable.
  /// Width filtering only removes hops, so the bound below stays admissible
  /// for stricter r_min.
  std::vector<std::uint32_t> landmarks;
  std::vector<double> landmark_cost;

  /// Lower bound on the hop-graph cost between nodes i and j.
  double lower_bound(std::uint32_t i, std::uint32_t j) const {
    if (component[i] != component[j]) return std::numeric_limits<double>::infinity();
    double h = (positions[i] - positions[j]).norm();
    const std::size_t m = landmarks.size();
    const double* a = landmark_cost.data() + i * m;
    const double* b = landmark_cost.data() + j * m;
    for (std::size_t k = 0; k < m; ++k) h = std::max(h, std::abs(a[k] - b[k]));
    return h;
  }

  std::optional<std::uint32_t> index_of(NodeId id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
    if (it == nodes.end() || *it != id) return std::nullopt;
    return std::uint32_t(it - nodes.begin());
  }
};

struct Segment {
  SegmentId label = kNoSegment;
  std::vector<NodeId> members;     ///< sorted
  Sphere bound;
  std::vector<SegmentId> adjacent;  ///< sorted labels of segments sharing a portal
  std::map<NodePair, CachedPath> paths;
  CompactGraph graph;  ///< subgraph over `members` positions
  /// Shortest-path trees over `graph`, one per portal endpoint (`roots`,
  /// sorted). Row k of `root_cost` holds each member's cost to roots[k] and
  /// row k of `toward_root` the next local index on that path.
  std::vector<NodeId> roots;
  std::vector<double> root_cost;
  std::vector<std::uint32_t> toward_root;
  std::uint64_t version = 0;  ///< bumped whenever the segment is altered

  std::uint32_t local_index(NodeId id) const {
    return std::uint32_t(std::lower_bound(members.begin(), members.end(), id) - members.begin());
  }
};

struct ChangeSummary {
  std::size_t nodes_added = 0;
  std::size_t nodes_removed = 0;
  std::size_t edges_added = 0;
  std::size_t edges_removed = 0;
  std::size_t radii_changed = 0;
  std::size_t segments_created = 0;
  std::size_t segments_removed = 0;
  std::size_t segments_altered = 0;
  std::size_t paths_cached = 0;

  bool empty() const {
    return nodes_added == 0 && nodes_removed == 0 && edges_added == 0 && edges_removed == 0 &&
           radii_changed == 0 && segments_created == 0 && segments_removed == 0 && segments_altered == 0;
  }

  friend bool operator==(const ChangeSummary&, const ChangeSummary&) = default;
};

struct IterationReport {
  // wall-clock seconds per step
  double t_extract = 0.0;
  double t_index = 0.0;
  double t_prune = 0.0;
  double t_expand = 0.0;
  double t_segment = 0.0;
  double t_total = 0.0;

  std::size_t obstacle_points = 0;
  std::size_t frontier_points = 0;
  std::size_t candidates = 0;
  ChangeSummary prune;
  ChangeSummary expand;
  ChangeSummary segment;
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  std::size_t segment_count = 0;

  /// True when the iteration changed nothing structurally.
  bool quiescent() const { return prune.empty() && expand.empty() && segment.empty(); }
};

/// The two-layer free-space map: a graph of obstacle-free spheres partitioned
/// into roughly convex segments, with portals between adjacent segments and
/// cached optimal paths between the portals of each segment.
///
/// Single mutator. Copying yields an independent snapshot that planners can
/// read while the original keeps updating.
class SphereMap {
 public:
  explicit SphereMap(BuildParams params = {}, PlannerParams cost = {})
      : params_(params), cost_(cost), index_(params.node_index_cell()) {
    params_.validate();
    cost_.validate();
    // The ray direction set is drawn once from the seed, so a stationary
    // vehicle in a static scene samples identical candidates every iteration.
    std::mt19937 rng(params_.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    while (ray_dirs_.size() < std::size_t(params_.ray_count)) {
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      if (dir.squaredNorm() < 1e-12) continue;
      ray_dirs_.push_back(dir.normalized());
    }
  }

  const BuildParams& params() const noexcept { return params_; }
  const PlannerParams& cost_params() const noexcept { return cost_; }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }
  std::size_t segment_count() const noexcept { return segments_.size(); }

  const SphereNode* node(NodeId id) const {
    auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second.node;
  }
  const SphereNode& at(NodeId id) const { return nodes_.at(id).node; }

  std::span<const NodeId> neighbors(NodeId id) const { return nodes_.at(id).adj; }

  bool has_edge(NodeId a, NodeId b) const {
    auto it = nodes_.find(a);
    if (it == nodes_.end()) return false;
    const auto& adj = it->second.adj;
    return std::binary_search(adj.begin(), adj.end(), b);
  }

  std::vector<NodeId> node_ids() const {
    std::vector<NodeId> ids;
    ids.reserve(nodes_.size());
    for (const auto& [id, rec] : nodes_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  const NodeIndex& node_index() const noexcept { return index_; }
  const std::map<SegmentId, Segment>& segments() const noexcept { return segments_; }
  const Segment* segment(SegmentId label) const {
    auto it = segments_.find(label);
    return it == segments_.end() ? nullptr : &it->second;
  }
  const std::map<SegmentPair, Portal>& portals() const noexcept { return portals_; }
  const Portal* portal(SegmentId a, SegmentId b) const {
    auto it = portals_.find(make_segment_pair(a, b));
    return it == portals_.end() ? nullptr : &it->second;
  }

  /// Independent deep copy for concurrent readers.
  SphereMap snapshot() const { return *this; }

  // ---------------------------------------------------------------- graph ops

  /// Adds a node with the given clearance radius, unassigned, and connects it
  /// by the intersection rule.
  NodeId add_node(const Vec3& p, double r) {
    const NodeId id = next_node_id_++;
    nodes_.emplace(id, NodeRecord{SphereNode{id, p, r, kNoSegment}, {}});
    index_.insert(id, p, r);
    dirty_nodes_.insert(id);
    ++stats_.nodes_added;
    update_node_connections(id);
    return id;
  }

  void remove_node(NodeId id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFoundError("remove_node: unknown id");
    for (NodeId n : it->second.adj) {
      auto& adj = nodes_.at(n).adj;
      adj.erase(std::lower_bound(adj.begin(), adj.end(), id));
      dirty_nodes_.insert(n);
      --edge_count_;
      ++stats_.edges_removed;
    }
    index_.remove(id);
    const SegmentId seg = it->second.node.segment;
    nodes_.erase(it);
    dirty_nodes_.erase(id);
    ++stats_.nodes_removed;
    if (seg != kNoSegment) {
      Segment& s = segments_.at(seg);
      s.members.erase(std::lower_bound(s.members.begin(), s.members.end(), id));
      touched_segments_.insert(seg);
      if (s.members.empty()) drop_segment(seg);
    }
  }

  /// Sets a node radius and re-evaluates its edges.
  void set_radius(NodeId id, double r) {
    NodeRecord& rec = nodes_.at(id);
    rec.node.r = r;
    index_.set_radius(id, r);
    dirty_nodes_.insert(id);
    update_node_connections(id);
  }

  /// Recomputes every edge of `id` against nodes within reach.
  void update_node_connections(NodeId id) {
    NodeRecord& rec = nodes_.at(id);
    const SphereNode self = rec.node;
    std::vector<NodeId> fresh;
    index_.for_each_within(self.p, self.r + params_.max_radius,
                           [&](NodeId other, const Vec3& q, double rq) {
                             if (other == id) return;
                             if (intersection_radius(self.p, self.r, q, rq) > params_.r_min) fresh.push_back(other);
                           });
    std::sort(fresh.begin(), fresh.end());
    std::vector<NodeId> gone, added;
    std::set_difference(rec.adj.begin(), rec.adj.end(), fresh.begin(), fresh.end(), std::back_inserter(gone));
    std::set_difference(fresh.begin(), fresh.end(), rec.adj.begin(), rec.adj.end(), std::back_inserter(added));
    if (gone.empty() && added.empty()) return;
    for (NodeId n : gone) {
      auto& adj = nodes_.at(n).adj;
      adj.erase(std::lower_bound(adj.begin(), adj.end(), id));
      dirty_nodes_.insert(n);
      --edge_count_;
      ++stats_.edges_removed;
    }
    for (NodeId n : added) {
      auto& adj = nodes_.at(n).adj;
      adj.insert(std::lower_bound(adj.begin(), adj.end(), id), id);
      dirty_nodes_.insert(n);
      ++edge_count_;
      ++stats_.edges_added;
    }
    nodes_.at(id).adj = std::move(fresh);
    dirty_nodes_.insert(id);
  }

  /// True iff some strictly larger node covers at least kappa of the sphere's
  /// volume. `self` is excluded from the witnesses.
  bool is_redundant(const Sphere& s, std::optional<NodeId> self = std::nullopt) const {
    return find_coverer(s, self).has_value();
  }

  bool is_redundant(NodeId id) const { return is_redundant(at(id).sphere(), id); }

  // ---------------------------------------------------------------- update steps

  /// Radius refresh for nodes in the cube, pruning of unsafe nodes, edge
  /// refresh for changed radii, then pruning of redundant nodes in increasing
  /// radius order.
  ChangeSummary recompute_and_prune(const ObstacleIndex& obstacles, const OccupancyGrid& grid,
                                    const UpdateCube& cube) {
    const auto before = stats_;
    std::vector<NodeId> inside = nodes_in_cube(cube);
    std::vector<NodeId> changed;
    for (NodeId id : inside) {
      const SphereNode& n = at(id);
      const double r = grid.state_at(n.p) == Occupancy::free ? clamp_radius(obstacles.nearest_distance(n.p)) : 0.0;
      if (r < params_.r_min) {
        remove_node(id);
        continue;
      }
      if (std::abs(r - n.r) > params_.eps_r) {
        NodeRecord& rec = nodes_.at(id);
        rec.node.r = r;
        index_.set_radius(id, r);
        dirty_nodes_.insert(id);
        ++stats_.radii_changed;
        changed.push_back(id);
      }
    }
    for (NodeId id : changed) {
      if (nodes_.count(id)) update_node_connections(id);
    }
    std::vector<std::pair<double, NodeId>> order;
    for (NodeId id : inside) {
      if (auto* n = node(id)) order.push_back({n->r, id});
    }
    std::sort(order.begin(), order.end());
    for (const auto& [r, id] : order) {
      if (nodes_.count(id) && is_redundant(id)) remove_node(id);
    }
    // A grown sphere can cover nodes just outside the cube.
    for (NodeId id : changed) {
      if (nodes_.count(id)) prune_covered_by(id);
    }
    return stats_ - before;
  }

  /// Candidate sampling (free voxel centroids and random rays from the
  /// vehicle), insertion of non-redundant candidates largest first, and
  /// pruning of nodes the new ones make redundant.
  ChangeSummary expand(const ObstacleIndex& obstacles, const OccupancyGrid& grid, const UpdateCube& cube,
                       const Vec3& uav, std::size_t* candidate_count = nullptr) {
    const auto before = stats_;
    struct Candidate {
      Vec3 p;
      double r;
      std::size_t order;
    };
    std::vector<Candidate> candidates;
    auto consider = [&](const Vec3& p) {
      const double r = clamp_radius(obstacles.nearest_distance(p));
      if (r >= params_.r_min) candidates.push_back({p, r, candidates.size()});
    };
    if (params_.voxel_stride > 0) {
      const int s = params_.voxel_stride;
      const VoxelBox box = grid.voxel_range(cube);
      auto first = [s](int lo) { return lo + ((s - lo % s) % s); };
      for (int z = first(box.lo.z); z < box.hi.z; z += s)
        for (int y = first(box.lo.y); y < box.hi.y; y += s)
          for (int x = first(box.lo.x); x < box.hi.x; x += s) {
            const Index3 i{x, y, z};
            if (grid.is_free(i)) consider(grid.center(i));
          }
    }
    if (params_.samples_per_ray > 0 && grid.state_at(uav) == Occupancy::free) {
      const double step = 0.5 * cube.side / params_.samples_per_ray;
      for (const Vec3& dir : ray_dirs_) {
        Vec3 prev = uav;
        for (int j = 1; j <= params_.samples_per_ray; ++j) {
          const Vec3 p = uav + (j * step) * dir;
          if (!raycast_free(grid, prev, p)) break;
          consider(p);
          prev = p;
        }
      }
    }
    if (candidate_count) *candidate_count = candidates.size();
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return a.r > b.r || (a.r == b.r && a.order < b.order);
    });
    std::optional<NodeId> last_coverer;
    for (const Candidate& c : candidates) {
      const Sphere s{c.p, c.r};
      // Candidates also yield to equal-radius nodes so a static scene never
      // re-inserts an existing sphere.
      if (last_coverer && nodes_.count(*last_coverer)) {
        const SphereNode& m = at(*last_coverer);
        if (m.r >= s.radius && coverage_fraction(s, m.sphere()) >= params_.kappa) continue;
      }
      if (auto cov = find_coverer(s, std::nullopt, /*allow_equal=*/true)) {
        last_coverer = cov;
        continue;
      }
      if (params_.connect_candidates && !can_connect(s)) continue;
      const NodeId id = add_node(c.p, c.r);
      prune_covered_by(id);
    }
    return stats_ - before;
  }

  /// Segmentation step: split disconnected segments, grow nearby segments over
  /// unassigned nodes, seed new segments, merge adjacent segments, then refresh
  /// portals and the cached intra-segment paths of every altered segment.
  ChangeSummary segment_update(const OccupancyGrid& grid, const UpdateCube& cube) {
    const auto before = stats_;
    std::set<SegmentId> near = std::move(touched_segments_);
    touched_segments_.clear();
    std::vector<NodeId> unassigned;
    for (NodeId id : dirty_nodes_) {
      auto it = nodes_.find(id);
      if (it == nodes_.end()) continue;
      if (it->second.node.segment == kNoSegment) unassigned.push_back(id);
      else near.insert(it->second.node.segment);
    }
    dirty_nodes_.clear();
    std::erase_if(near, [&](SegmentId s) { return segments_.count(s) == 0; });
    // Segments that lost members or hold changed nodes are altered; the rest
    // of the cube's segments may still grow or merge.
    std::set<SegmentId> altered = near;
    for (NodeId id : nodes_in_cube(cube)) {
      const SegmentId s = at(id).segment;
      if (s != kNoSegment) near.insert(s);
    }

    // split
    for (SegmentId label : std::vector<SegmentId>(altered.begin(), altered.end())) {
      for (SegmentId created : split_if_disconnected(label)) {
        near.insert(created);
        altered.insert(created);
      }
    }
    // grow existing
    for (SegmentId label : near) {
      if (grow_segment(label)) altered.insert(label);
    }
    // seed new segments, biggest spheres first
    std::sort(unassigned.begin(), unassigned.end(), [&](NodeId a, NodeId b) {
      const double ra = at(a).r, rb = at(b).r;
      return ra > rb || (ra == rb && a < b);
    });
    for (NodeId id : unassigned) {
      if (at(id).segment != kNoSegment) continue;
      const SegmentId label = create_segment({id});
      grow_segment(label);
      near.insert(label);
      altered.insert(label);
    }
    // merge adjacent pairs
    for (bool merged = true; merged;) {
      merged = false;
      for (const SegmentPair& pr : adjacent_pairs(near)) {
        if (!segments_.count(pr.first) || !segments_.count(pr.second)) continue;
        const Segment& s1 = segments_.at(pr.first);
        const Segment& s2 = segments_.at(pr.second);
        const Sphere joint = enclose(s1.bound, s2.bound);
        if (joint.radius > params_.r_merge) continue;
        if (!raycast_free(grid, s1.bound.center, s2.bound.center)) continue;
        merge_segments(pr.first, pr.second, joint);
        near.erase(pr.second);
        altered.erase(pr.second);
        near.insert(pr.first);
        altered.insert(pr.first);
        merged = true;
      }
    }
    for (SegmentId s : touched_segments_) {
      if (segments_.count(s)) altered.insert(s);
    }
    touched_segments_.clear();
    // portals
    std::set<SegmentId> cache_dirty;
    for (SegmentId label : altered) {
      if (!segments_.count(label)) continue;
      cache_dirty.insert(label);
      for (SegmentId other : refresh_portals(label)) cache_dirty.insert(other);
    }
    for (SegmentId label : cache_dirty) {
      if (!segments_.count(label)) continue;
      recompute_paths(label);
      rebuild_segment_graph(segments_.at(label));
      ++segments_.at(label).version;
      ++stats_.segments_altered;
    }
    rebuild_portal_graph();
    return stats_ - before;
  }

  /// One incremental update around the vehicle: obstacle and frontier
  /// extraction, index build, then the three update steps in order.
  IterationReport update_iteration(const OccupancyGrid& grid, const Vec3& uav) {
    using clock = std::chrono::steady_clock;
    auto secs = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
    IterationReport rep;
    const auto t0 = clock::now();
    const UpdateCube cube(uav, params_.cube_side);
    const VoxelBox region = grid.voxel_range(cube.inflated(params_.max_radius));
    std::vector<Vec3> obstacles = surface_obstacle_points(grid, region);
    std::vector<Vec3> frontiers = frontier_points(grid, region);
    const auto t1 = clock::now();
    rep.obstacle_points = obstacles.size();
    rep.frontier_points = frontiers.size();
    const ObstacleIndex index(obstacles, frontiers);
    const auto t2 = clock::now();
    rep.prune = recompute_and_prune(index, grid, cube);
    const auto t3 = clock::now();
    rep.expand = expand(index, grid, cube, uav, &rep.candidates);
    const auto t4 = clock::now();
    rep.segment = segment_update(grid, cube);
    const auto t5 = clock::now();
    rep.t_extract = secs(t0, t1);
    rep.t_index = secs(t1, t2);
    rep.t_prune = secs(t2, t3);
    rep.t_expand = secs(t3, t4);
    rep.t_segment = secs(t4, t5);
    rep.t_total = secs(t0, t5);
    rep.node_count = node_count();
    rep.edge_count = edge_count();
    rep.segment_count = segment_count();
    last_cube_ = cube;
    return rep;
  }

  const std::optional<UpdateCube>& last_cube() const noexcept { return last_cube_; }

  /// Ids of live nodes whose centre lies in the cube, sorted.
  std::vector<NodeId> nodes_in_cube(const UpdateCube& cube) const {
    std::vector<NodeId> out;
    const Vec3 h = Vec3::Constant(0.5 * cube.side);
    index_.for_each_in_box(cube.center - h, cube.center + h, [&](NodeId id, const Vec3&, double) { out.push_back(id); });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Transition cost between two graph nodes.
  double edge_cost(NodeId a, NodeId b) const {
    const SphereNode& na = at(a);
    const SphereNode& nb = at(b);
    return transition_cost(na.p, na.r, nb.p, nb.r, cost_).total();
  }

  /// A* between two nodes over one segment's subgraph (intra-segment path).
  std::optional<SearchPath> path_in_segment(SegmentId label, NodeId from, NodeId to) const {
    const Vec3 goal = at(to).p;
    const SearchSource src{from, 0.0};
    return astar_search(
        std::span<const SearchSource>(&src, 1), to,
        [&](NodeId id, auto&& relax) {
          for (NodeId n : neighbors(id)) {
            if (at(n).segment == label) relax(n, edge_cost(id, n));
          }
        },
        [&](NodeId id) { return (at(id).p - goal).norm(); });
  }

  /// Sorted, de-duplicated portal endpoints lying inside the segment.
  std::vector<NodeId> portal_endpoints(SegmentId label) const {
    std::vector<NodeId> out;
    const Segment& s = segments_.at(label);
    for (SegmentId other : s.adjacent) {
      const Portal& p = portals_.at(make_segment_pair(label, other));
      out.push_back(label < other ? p.a : p.b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  const PortalGraph& portal_graph() const noexcept { return portal_graph_; }

  // ---------------------------------------------------------------- raw state
  // Used by the snapshot decoder to rebuild a map verbatim.

  struct RawState {
    std::vector<SphereNode> nodes;
    std::vector<NodePair> edges;
    std::vector<std::pair<SegmentId, Sphere>> segments;
    std::map<SegmentPair, Portal> portals;
    std::map<SegmentId, std::map<NodePair, CachedPath>> paths;
  };

  static SphereMap from_raw(const BuildParams& params, const PlannerParams& cost, const RawState& raw) {
    SphereMap m(params, cost);
    for (const SphereNode& n : raw.nodes) {
      if (m.nodes_.count(n.id)) throw std::invalid_argument("duplicate node id");
      m.nodes_.emplace(n.id, NodeRecord{n, {}});
      m.index_.insert(n.id, n.p, n.r);
      m.next_node_id_ = std::max(m.next_node_id_, n.id + 1);
    }
    for (const auto& [a, b] : raw.edges) {
      if (a == b || !m.nodes_.count(a) || !m.nodes_.count(b)) throw std::invalid_argument("bad edge");
      m.nodes_.at(a).adj.push_back(b);
      m.nodes_.at(b).adj.push_back(a);
      ++m.edge_count_;
    }
    for (auto& [id, rec] : m.nodes_) {
      std::sort(rec.adj.begin(), rec.adj.end());
      if (std::adjacent_find(rec.adj.begin(), rec.adj.end()) != rec.adj.end()) {
        throw std::invalid_argument("duplicate edge");
      }
    }
    for (const auto& [label, bound] : raw.segments) {
      Segment s;
      s.label = label;
      s.bound = bound;
      if (!m.segments_.emplace(label, std::move(s)).second) throw std::invalid_argument("duplicate segment");
      m.next_segment_label_ = std::max(m.next_segment_label_, label + 1);
    }
    for (const NodeId id : m.node_ids()) {
      const SegmentId seg = m.at(id).segment;
      if (seg == kNoSegment) continue;
      auto it = m.segments_.find(seg);
      if (it == m.segments_.end()) throw std::invalid_argument("node references unknown segment");
      it->second.members.push_back(id);
    }
    for (const auto& [key, portal] : raw.portals) {
      if (!m.segments_.count(key.first) || !m.segments_.count(key.second)) {
        throw std::invalid_argument("portal references unknown segment");
      }
      const SphereNode* a = m.node(portal.a);
      const SphereNode* b = m.node(portal.b);
      if (!a || !b || a->segment != key.first || b->segment != key.second) {
        throw std::invalid_argument("portal endpoints do not match its segments");
      }
      m.portals_.emplace(key, portal);
      m.segments_.at(key.first).adjacent.push_back(key.second);
      m.segments_.at(key.second).adjacent.push_back(key.first);
    }
    for (auto& [label, s] : m.segments_) std::sort(s.adjacent.begin(), s.adjacent.end());
    for (const auto& [label, paths] : raw.paths) {
      auto it = m.segments_.find(label);
      if (it == m.segments_.end()) throw std::invalid_argument("cache references unknown segment");
      for (const auto& [key, path] : paths) {
        for (NodeId id : path.nodes) {
          if (!m.nodes_.count(id)) throw std::invalid_argument("cached path references unknown node");
        }
      }
      it->second.paths = paths;
    }
    for (auto& [label, seg] : m.segments_) m.rebuild_segment_graph(seg);
    m.rebuild_portal_graph();
    return m;
  }

  RawState to_raw() const {
    RawState raw;
    for (NodeId id : node_ids()) {
      raw.nodes.push_back(at(id));
      for (NodeId n : neighbors(id)) {
        if (id < n) raw.edges.push_back({id, n});
      }
    }
    for (const auto& [label, s] : segments_) {
      raw.segments.push_back({label, s.bound});
      if (!s.paths.empty()) raw.paths[label] = s.paths;
    }
    raw.portals = portals_;
    return raw;
  }

 private:
  struct NodeRecord {
    SphereNode node;
    std::vector<NodeId> adj;  // sorted
  };

  struct Stats {
    std::size_t nodes_added = 0, nodes_removed = 0, edges_added = 0, edges_removed = 0, radii_changed = 0,
                segments_created = 0, segments_removed = 0, segments_altered = 0, paths_cached = 0;

    ChangeSummary operator-(const Stats& o) const {
      return {nodes_added - o.nodes_added,       nodes_removed - o.nodes_removed,
              edges_added - o.edges_added,       edges_removed - o.edges_removed,
              radii_changed - o.radii_changed,   segments_created - o.segments_created,
              segments_removed - o.segments_removed, segments_altered - o.segments_altered,
              paths_cached - o.paths_cached};
    }
  };

  double clamp_radius(double d) const { return std::min(d, params_.max_radius); }

  /// A node covering at least kappa of `s` whose radius is larger (or, with
  /// `allow_equal`, not smaller).
  std::optional<NodeId> find_coverer(const Sphere& s, std::optional<NodeId> self, bool allow_equal = false) const {
    // With kappa >= 1/2 a witness must contain the covered centre, which bounds
    // the search radius by the largest possible radius.
    const double reach = params_.kappa >= 0.5 ? params_.max_radius : s.radius + params_.max_radius;
    return index_.find_within(s.center, reach, [&](NodeId id, const Vec3& q, double rq) {
      if (self && id == *self) return false;
      if (allow_equal ? !(rq >= s.radius) : !(rq > s.radius)) return false;
      return coverage_fraction(s, Sphere{q, rq}) >= params_.kappa;
    });
  }

  /// True if the sphere would get an edge, or has no node within reach at all
  /// (the first sphere of a newly seen region).
  bool can_connect(const Sphere& s) const {
    bool any = false;
    const auto hit = index_.find_within(s.center, s.radius + params_.max_radius, [&](NodeId, const Vec3& q, double rq) {
      any = true;
      return intersection_radius(s.center, s.radius, q, rq) > params_.r_min;
    });
    return hit.has_value() || !any;
  }

  /// Removes nodes that the new node `id` covers by at least kappa.
  void prune_covered_by(NodeId id) {
    const Sphere big = at(id).sphere();
    const double reach = params_.kappa >= 0.5 ? big.radius : 2.0 * big.radius;
    std::vector<std::pair<double, NodeId>> victims;
    index_.for_each_within(big.center, reach, [&](NodeId other, const Vec3& q, double rq) {
      if (other == id || !(rq < big.radius)) return;
      if (coverage_fraction(Sphere{q, rq}, big) >= params_.kappa) victims.push_back({rq, other});
    });
    std::sort(victims.begin(), victims.end());
    for (const auto& [r, v] : victims) remove_node(v);
  }

  SegmentId create_segment(std::vector<NodeId> members) {
    const SegmentId label = next_segment_label_++;
    Segment s;
    s.label = label;
    std::sort(members.begin(), members.end());
    s.members = std::move(members);
    for (NodeId id : s.members) nodes_.at(id).node.segment = label;
    s.bound = member_bound(s.members);
    segments_.emplace(label, std::move(s));
    ++stats_.segments_created;
    return label;
  }

  Sphere member_bound(const std::vector<NodeId>& members) const {
    std::vector<Sphere> spheres;
    spheres.reserve(members.size());
    for (NodeId id : members) spheres.push_back(at(id).sphere());
    return bounding_sphere(spheres);
  }

  void drop_segment(SegmentId label) {
    Segment& s = segments_.at(label);
    for (SegmentId other : s.adjacent) {
      portals_.erase(make_segment_pair(label, other));
      auto& adj = segments_.at(other).adjacent;
      adj.erase(std::lower_bound(adj.begin(), adj.end(), label));
      touched_segments_.insert(other);
    }
    for (NodeId id : s.members) nodes_.at(id).node.segment = kNoSegment;
    segments_.erase(label);
    touched_segments_.erase(label);
    ++stats_.segments_removed;
  }

  /// Splits a segment whose member subgraph is disconnected. The largest
  /// component keeps the label. Returns labels of the new segments.
  std::vector<SegmentId> split_if_disconnected(SegmentId label) {
    Segment& seg = segments_.at(label);
    std::vector<std::vector<NodeId>> comps;
    std::unordered_map<NodeId, bool> seen;
    for (NodeId start : seg.members) {
      if (seen[start]) continue;
      std::vector<NodeId> comp{start};
      seen[start] = true;
      for (std::size_t i = 0; i < comp.size(); ++i) {
        for (NodeId n : neighbors(comp[i])) {
          if (at(n).segment == label && !seen[n]) {
            seen[n] = true;
            comp.push_back(n);
          }
        }
      }
      std::sort(comp.begin(), comp.end());
      comps.push_back(std::move(comp));
    }
    if (comps.size() <= 1) {
      seg.bound = member_bound(seg.members);
      return {};
    }
    std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
      return a.size() > b.size() || (a.size() == b.size() && a.front() < b.front());
    });
    seg.members = comps.front();
    seg.bound = member_bound(seg.members);
    std::vector<SegmentId> created;
    for (std::size_t c = 1; c < comps.size(); ++c) created.push_back(create_segment(comps[c]));
    return created;
  }

  /// Flood fill over unassigned neighbours while the bounding sphere stays
  /// within r_exp. Candidates are taken nearest-to-centre first. Returns
  /// whether any node joined.
  bool grow_segment(SegmentId label) {
    Segment& seg = segments_.at(label);
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> frontier;
    std::set<NodeId> queued;
    auto push_neighbors = [&](NodeId id) {
      for (NodeId n : neighbors(id)) {
        if (at(n).segment == kNoSegment && queued.insert(n).second) {
          frontier.push({(at(n).p - seg.bound.center).norm(), n});
        }
      }
    };
    for (NodeId id : seg.members) push_neighbors(id);
    bool grew = false;
    while (!frontier.empty()) {
      const NodeId id = frontier.top().second;
      frontier.pop();
      if (at(id).segment != kNoSegment) continue;
      const Sphere grown = enclose(seg.bound, at(id).sphere());
      if (grown.radius > params_.r_exp) continue;
      seg.bound = grown;
      nodes_.at(id).node.segment = label;
      seg.members.insert(std::lower_bound(seg.members.begin(), seg.members.end(), id), id);
      push_neighbors(id);
      grew = true;
    }
    return grew;
  }

  std::vector<SegmentPair> adjacent_pairs(const std::set<SegmentId>& labels) const {
    std::set<SegmentPair> pairs;
    for (SegmentId label : labels) {
      auto it = segments_.find(label);
      if (it == segments_.end()) continue;
      for (NodeId id : it->second.members) {
        for (NodeId n : neighbors(id)) {
          const SegmentId other = at(n).segment;
          if (other != label && other != kNoSegment) pairs.insert(make_segment_pair(label, other));
        }
      }
    }
    return {pairs.begin(), pairs.end()};
  }

  /// Moves every member of `drop` into `keep`.
  void merge_segments(SegmentId keep, SegmentId drop, const Sphere& joint) {
    std::vector<NodeId> moved = segments_.at(drop).members;
    segments_.at(drop).members.clear();
    drop_segment(drop);
    Segment& k = segments_.at(keep);
    for (NodeId id : moved) nodes_.at(id).node.segment = keep;
    std::vector<NodeId> all;
    std::merge(k.members.begin(), k.members.end(), moved.begin(), moved.end(), std::back_inserter(all));
    k.members = std::move(all);
    k.bound = joint;
  }

  /// Recomputes the portals of one segment. Returns neighbours whose portal to
  /// it appeared, vanished or changed.
  std::vector<SegmentId> refresh_portals(SegmentId label) {
    Segment& seg = segments_.at(label);
    std::map<SegmentId, Portal> best;
    for (NodeId id : seg.members) {
      const SphereNode& a = at(id);
      for (NodeId n : neighbors(id)) {
        const SphereNode& b = at(n);
        if (b.segment == label || b.segment == kNoSegment) continue;
        const bool low = label < b.segment;
        Portal cand{low ? id : n, low ? n : id, intersection_radius(a.p, a.r, b.p, b.r)};
        auto [it, fresh] = best.try_emplace(b.segment, cand);
        if (fresh) continue;
        Portal& cur = it->second;
        if (cand.radius > cur.radius ||
            (cand.radius == cur.radius && std::pair(cand.a, cand.b) < std::pair(cur.a, cur.b))) {
          cur = cand;
        }
      }
    }
    std::vector<SegmentId> changed;
    for (SegmentId other : std::vector<SegmentId>(seg.adjacent)) {
      if (best.count(other)) continue;
      portals_.erase(make_segment_pair(label, other));
      auto& oadj = segments_.at(other).adjacent;
      oadj.erase(std::lower_bound(oadj.begin(), oadj.end(), label));
      changed.push_back(other);
    }
    seg.adjacent.clear();
    for (const auto& [other, portal] : best) {
      seg.adjacent.push_back(other);
      const SegmentPair key = make_segment_pair(label, other);
      auto it = portals_.find(key);
      if (it == portals_.end()) {
        portals_.emplace(key, portal);
        auto& oadj = segments_.at(other).adjacent;
        oadj.insert(std::lower_bound(oadj.begin(), oadj.end(), label), label);
        changed.push_back(other);
      } else if (!(it->second == portal)) {
        it->second = portal;
        changed.push_back(other);
      }
    }
    return changed;
  }

  void recompute_paths(SegmentId label) {
    const std::vector<NodeId> ends = portal_endpoints(label);
    std::map<NodePair, CachedPath> paths;
    for (std::size_t i = 0; i < ends.size(); ++i) {
      for (std::size_t j = i + 1; j < ends.size(); ++j) {
        if (auto found = path_in_segment(label, ends[i], ends[j])) {
          paths.emplace(NodePair{ends[i], ends[j]}, CachedPath{std::move(found->nodes), found->cost});
          ++stats_.paths_cached;
        }
      }
    }
    segments_.at(label).paths = std::move(paths);
  }

  void rebuild_segment_graph(Segment& seg) const {
    CompactGraph g;
    for (NodeId id : seg.members) {
      const SphereNode& a = at(id);
      for (NodeId n : neighbors(id)) {
        const SphereNode& b = at(n);
        if (b.segment != seg.label) continue;
        g.targets.push_back(seg.local_index(n));
        g.costs.push_back(transition_cost(a.p, a.r, b.p, b.r, cost_).total());
        g.widths.push_back(intersection_radius(a.p, a.r, b.p, b.r));
      }
      g.offsets.push_back(std::uint32_t(g.targets.size()));
    }
    seg.graph = std::move(g);

    // Edge costs are symmetric, so a tree grown from an endpoint also gives
    // every member's cost towards it.
    const std::size_t n = seg.members.size();
    seg.roots = portal_endpoints(seg.label);
    seg.root_cost.assign(seg.roots.size() * n, 0.0);
    seg.toward_root.assign(seg.roots.size() * n, 0);
    for (std::size_t k = 0; k < seg.roots.size(); ++k) {
      const std::pair<std::uint32_t, double> src{seg.local_index(seg.roots[k]), 0.0};
      const DenseSearch tree = dense_search(
          n, std::span(&src, 1),
          [&](std::uint32_t i, auto&& relax) {
            for (std::uint32_t e = seg.graph.offsets[i]; e < seg.graph.offsets[i + 1]; ++e) {
              relax(seg.graph.targets[e], seg.graph.costs[e]);
            }
          },
          [](std::uint32_t) { return 0.0; }, [](std::uint32_t) { return false; });
      std::copy(tree.g.begin(), tree.g.end(), seg.root_cost.begin() + std::ptrdiff_t(k * n));
      std::copy(tree.parent.begin(), tree.parent.end(), seg.toward_root.begin() + std::ptrdiff_t(k * n));
    }
  }

  static constexpr std::size_t kPortalLandmarks = 8;

  static std::vector<double> hop_costs_from(const PortalGraph& pg, std::uint32_t root) {
    const std::pair<std::uint32_t, double> src{root, 0.0};
    return dense_search(
               pg.nodes.size(), std::span(&src, 1),
               [&](std::uint32_t i, auto&& relax) {
                 for (std::uint32_t k = pg.hops.offsets[i]; k < pg.hops.offsets[i + 1]; ++k) {
                   relax(pg.hops.targets[k], pg.hops.costs[k]);
                 }
               },
               [](std::uint32_t) { return 0.0; }, [](std::uint32_t) { return false; })
        .g;
  }

  // Farthest-first within each component: every landmark maximises the cost
  // to the nearest one already chosen, lowest index on ties. Components
  // without a landmark fall back to the Euclidean bound.
  static void select_landmarks(PortalGraph& pg) {
    const std::size_t n = pg.nodes.size();
    constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
    pg.component.assign(n, kNone);
    std::uint32_t components = 0;
    for (std::uint32_t s = 0; s < n; ++s) {
      if (pg.component[s] != kNone) continue;
      std::vector<std::uint32_t> stack{s};
      pg.component[s] = components;
      while (!stack.empty()) {
        const std::uint32_t i = stack.back();
        stack.pop_back();
        for (std::uint32_t k = pg.hops.offsets[i]; k < pg.hops.offsets[i + 1]; ++k) {
          if (pg.component[pg.hops.targets[k]] == kNone) {
            pg.component[pg.hops.targets[k]] = components;
            stack.push_back(pg.hops.targets[k]);
          }
        }
      }
      ++components;
    }
    if (n == 0) return;
    // the largest component holds the landmarks; the rest are small fragments
    std::vector<std::size_t> sizes(components, 0);
    for (std::uint32_t c : pg.component) ++sizes[c];
    const auto main = std::uint32_t(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    const auto first = std::uint32_t(std::find(pg.component.begin(), pg.component.end(), main) - pg.component.begin());
    std::vector<double> nearest = hop_costs_from(pg, first);
    std::vector<std::vector<double>> rows;
    while (rows.size() < std::min(kPortalLandmarks, sizes[main])) {
      std::uint32_t pick = first;
      for (std::uint32_t i = 0; i < n; ++i) {
        if (pg.component[i] == main && nearest[i] > nearest[pick]) pick = i;
      }
      if (nearest[pick] == 0.0) break;
      pg.landmarks.push_back(pick);
      rows.push_back(hop_costs_from(pg, pick));
      for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], rows.back()[i]);
    }
    const std::size_t m = rows.size();
    pg.landmark_cost.assign(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (pg.component[i] != main) continue;
      for (std::size_t k = 0; k < m; ++k) pg.landmark_cost[i * m + k] = rows[k][i];
    }
  }

  void rebuild_portal_graph() {
    PortalGraph pg;
    for (const auto& [key, portal] : portals_) {
      pg.nodes.push_back(portal.a);
      pg.nodes.push_back(portal.b);
    }
    std::sort(pg.nodes.begin(), pg.nodes.end());
    pg.nodes.erase(std::unique(pg.nodes.begin(), pg.nodes.end()), pg.nodes.end());
    struct Hop {
      std::uint32_t to;
      double cost, width;
    };
    std::vector<std::vector<Hop>> rows(pg.nodes.size());
    for (const auto& [label, seg] : segments_) {
      for (const auto& [key, path] : seg.paths) {
        const std::uint32_t i = *pg.index_of(key.first), j = *pg.index_of(key.second);
        rows[i].push_back({j, path.cost, std::numeric_limits<double>::infinity()});
        rows[j].push_back({i, path.cost, std::numeric_limits<double>::infinity()});
      }
    }
    for (const auto& [key, portal] : portals_) {
      const std::uint32_t i = *pg.index_of(portal.a), j = *pg.index_of(portal.b);
      const double c = edge_cost(portal.a, portal.b);
      rows[i].push_back({j, c, portal.radius});
      rows[j].push_back({i, c, portal.radius});
    }
    for (std::size_t i = 0; i < pg.nodes.size(); ++i) {
      const SphereNode& n = at(pg.nodes[i]);
      pg.segments.push_back(n.segment);
      pg.positions.push_back(n.p);
      for (const Hop& h : rows[i]) {
        pg.hops.targets.push_back(h.to);
        pg.hops.costs.push_back(h.cost);
        pg.hops.widths.push_back(h.width);
      }
      pg.hops.offsets.push_back(std::uint32_t(pg.hops.targets.size()));
    }
    select_landmarks(pg);
    portal_graph_ = std::move(pg);
  }

  BuildParams params_;
  PlannerParams cost_;
  std::unordered_map<NodeId, NodeRecord> nodes_;
  NodeIndex index_;
  std::size_t edge_count_ = 0;
  std::map<SegmentId, Segment> segments_;
  std::map<SegmentPair, Portal> portals_;
  PortalGraph portal_graph_;
  NodeId next_node_id_ = 0;
  SegmentId next_segment_label_ = 0;
  std::set<NodeId> dirty_nodes_;
  std::set<SegmentId> touched_segments_;
  std::vector<Vec3> ray_dirs_;
  std::optional<UpdateCube> last_cube_;
  Stats stats_;
};

}  // namespace spheremap
