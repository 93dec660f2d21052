#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "spheremap/byte_io.hpp"
#include "spheremap/sphere_geometry.hpp"
#include "spheremap/sphere_map.hpp"
#include "spheremap/voxel_grid.hpp"

namespace spheremap {

/// 4DOF box: centre, rotation about z, half-extents along the rotated axes.
struct OrientedBox {
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
  Vec3 half = Vec3::Zero();

  Vec3 to_local(const Vec3& p) const {
    const Vec3 d = p - center;
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
  }

  bool contains(const Sphere& sp, double tol = 0.0) const {
    const Vec3 l = to_local(sp.center);
    for (int a = 0; a < 3; ++a) {
      if (std::abs(l[a]) + sp.radius > half[a] + tol) return false;
    }
    return true;
  }

  bool contains(const Vec3& p) const {
    const Vec3 l = to_local(p);
    return std::abs(l.x()) <= half.x() && std::abs(l.y()) <= half.y() && std::abs(l.z()) <= half.z();
  }
};

namespace detail {

// Width of the projected discs along direction theta and its normal.
struct RotatedExtent {
  double u_lo, u_hi, v_lo, v_hi;
  double area() const { return (u_hi - u_lo) * (v_hi - v_lo); }
};

inline RotatedExtent rotated_extent(std::span<const Sphere> spheres, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  RotatedExtent e{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (const Sphere& sp : spheres) {
    const double u = c * sp.center.x() + s * sp.center.y();
    const double v = -s * sp.center.x() + c * sp.center.y();
    e.u_lo = std::min(e.u_lo, u - sp.radius);
    e.u_hi = std::max(e.u_hi, u + sp.radius);
    e.v_lo = std::min(e.v_lo, v - sp.radius);
    e.v_hi = std::max(e.v_hi, v + sp.radius);
  }
  return e;
}

inline double wrap_half_turn(double yaw) {
  constexpr double pi = std::numbers::pi;
  yaw = std::fmod(yaw + pi / 2, pi);
  if (yaw < 0) yaw += pi;
  return yaw - pi / 2;
}

}  // namespace detail

/// Minimum-area rectangle over the XY discs (exact disc support), z from the
/// sphere extents. Yaw lies in [-pi/2, pi/2) with hx >= hy; near-ties with the
/// axis-aligned fit resolve to yaw 0.
inline OrientedBox fit_box(std::span<const Sphere> spheres) {
  if (spheres.empty()) throw std::invalid_argument("fit_box needs at least one sphere");
  constexpr double quarter = std::numbers::pi / 2;
  constexpr int kScan = 90;
  auto area = [&](double t) { return detail::rotated_extent(spheres, t).area(); };

  double best_t = 0.0, best_a = area(0.0);
  for (int k = 1; k < kScan; ++k) {
    const double t = quarter * k / kScan;
    const double a = area(t);
    if (a < best_a) best_a = a, best_t = t;
  }
  // Golden-section refinement inside the bracketing scan cells.
  const double step = quarter / kScan;
  double lo = best_t - step, hi = best_t + step;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = area(x1), f2 = area(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      hi = x2, x2 = x1, f2 = f1;
      x1 = hi - gr * (hi - lo), f1 = area(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2;
      x2 = lo + gr * (hi - lo), f2 = area(x2);
    }
  }
  const double refined = (lo + hi) / 2;
  if (area(refined) < best_a) best_t = refined, best_a = area(refined);
  if (best_a >= area(0.0) * (1.0 - 1e-9)) best_t = 0.0;

  const detail::RotatedExtent e = detail::rotated_extent(spheres, best_t);
  double hx = (e.u_hi - e.u_lo) / 2, hy = (e.v_hi - e.v_lo) / 2;
  const double uc = (e.u_lo + e.u_hi) / 2, vc = (e.v_lo + e.v_hi) / 2;
  const double c = std::cos(best_t), s = std::sin(best_t);
  OrientedBox box;
  box.center.x() = c * uc - s * vc;
  box.center.y() = s * uc + c * vc;
  double yaw = best_t;
  if (hx < hy) {
    std::swap(hx, hy);
    yaw += quarter;
  }
  box.yaw = detail::wrap_half_turn(yaw);
  double z_lo = INFINITY, z_hi = -INFINITY;
  for (const Sphere& sp : spheres) {
    z_lo = std::min(z_lo, sp.center.z() - sp.radius);
    z_hi = std::max(z_hi, sp.center.z() + sp.radius);
  }
  box.center.z() = (z_lo + z_hi) / 2;
  box.half = Vec3(hx, hy, (z_hi - z_lo) / 2);
  return box;
}

struct LtvSegment {
  std::uint32_t id = 0;
  Eigen::Vector3f center = Eigen::Vector3f::Zero();
  float yaw = 0.0f;
  Eigen::Vector3f half = Eigen::Vector3f::Zero();
  std::uint8_t exploration = 0;
  std::uint8_t coverage = 0;

  OrientedBox box() const { return {center.cast<double>(), double(yaw), half.cast<double>()}; }

  friend bool operator==(const LtvSegment&, const LtvSegment&) = default;
};

struct LtvMap {
  std::vector<LtvSegment> segments;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<Eigen::Vector3f> goals;

  friend bool operator==(const LtvMap&, const LtvMap&) = default;
};

/// Converts a fitted box to the wire precision. Extents grow by `pad` so the
/// float rounding of centre and extents cannot expose a member sphere.
inline LtvSegment make_ltv_segment(std::uint32_t id, const OrientedBox& box, double pad = 1e-3) {
  LtvSegment s;
  s.id = id;
  s.center = box.center.cast<float>();
  s.yaw = float(box.yaw);
  if (s.yaw >= float(std::numbers::pi / 2)) s.yaw = -float(std::numbers::pi / 2);
  if (s.yaw < -float(std::numbers::pi / 2)) s.yaw = -float(std::numbers::pi / 2);
  s.half = (box.half.array() + pad).matrix().cast<float>();
  return s;
}

struct ExtractOptions {
  double goal_cluster_radius = 5.0;
  std::size_t min_cluster_points = 1;
  double exploration_scale = 64.0;  ///< value per frontier point per member sphere
};

/// Builds LtvMaps from a SphereMap, refitting only segments whose version
/// changed since the previous call.
class LtvExtractor {
 public:
  explicit LtvExtractor(ExtractOptions options = {}) : options_(options) {}

  LtvMap extract(const SphereMap& map, const OccupancyGrid& grid) {
    LtvMap out;
    const std::vector<Vec3> frontiers = frontier_points(grid, grid.full_box());
    NodeIndex frontier_index(std::max(1.0, options_.goal_cluster_radius));
    for (std::size_t k = 0; k < frontiers.size(); ++k) frontier_index.insert(NodeId(k), frontiers[k]);

    std::map<SegmentId, Cached> next;
    for (const auto& [label, seg] : map.segments()) {
      Cached entry;
      auto it = cache_.find(label);
      if (it != cache_.end() && it->second.version == seg.version) {
        entry = it->second;
      } else {
        std::vector<Sphere> spheres;
        spheres.reserve(seg.members.size());
        for (NodeId id : seg.members) spheres.push_back(map.at(id).sphere());
        entry.version = seg.version;
        entry.box = spheres.empty() ? OrientedBox{seg.bound.center, 0.0, Vec3::Constant(seg.bound.radius)}
                                    : fit_box(spheres);
        ++refits_;
      }
      LtvSegment s = make_ltv_segment(label, entry.box);
      std::size_t near = 0;
      frontier_index.for_each_within(seg.bound.center, seg.bound.radius,
                                     [&](NodeId, const Vec3&, double) { ++near; });
      const double members = double(std::max<std::size_t>(1, seg.members.size()));
      s.exploration = std::uint8_t(std::clamp(std::lround(options_.exploration_scale * near / members), 0L, 255L));
      out.segments.push_back(s);
      next.emplace(label, entry);
    }
    cache_ = std::move(next);
    for (const auto& [key, portal] : map.portals()) out.edges.push_back({key.first, key.second});
    out.goals = cluster_goals(frontiers, frontier_index);
    return out;
  }

  std::size_t refit_count() const noexcept { return refits_; }

 private:
  struct Cached {
    std::uint64_t version = 0;
    OrientedBox box;
  };

  // Greedy clustering: densest remaining neighbourhood first; the goal is the
  // cluster point closest to the cluster centroid, so it lies in free space.
  std::vector<Eigen::Vector3f> cluster_goals(const std::vector<Vec3>& points, const NodeIndex& index) const {
    std::vector<Eigen::Vector3f> goals;
    const double radius = options_.goal_cluster_radius;
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (-density, index) sorted
    order.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
      std::size_t n = 0;
      index.for_each_within(points[k], radius, [&](NodeId, const Vec3&, double) { ++n; });
      order.push_back({n, k});
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<char> taken(points.size(), 0);
    for (const auto& [density, k] : order) {
      if (taken[k]) continue;
      std::vector<std::size_t> members;
      index.for_each_within(points[k], radius, [&](NodeId id, const Vec3&, double) {
        if (!taken[id]) members.push_back(id);
      });
      for (std::size_t m : members) taken[m] = 1;
      if (members.size() < options_.min_cluster_points) continue;
      std::sort(members.begin(), members.end());
      Vec3 centroid = Vec3::Zero();
      for (std::size_t m : members) centroid += points[m];
      centroid /= double(members.size());
      std::size_t best = members.front();
      for (std::size_t m : members) {
        if ((points[m] - centroid).squaredNorm() < (points[best] - centroid).squaredNorm()) best = m;
      }
      goals.push_back(points[best].cast<float>());
    }
    return goals;
  }

  ExtractOptions options_;
  std::map<SegmentId, Cached> cache_;
  std::size_t refits_ = 0;
};

inline LtvMap extract(const SphereMap& map, const OccupancyGrid& grid, ExtractOptions options = {}) {
  return LtvExtractor(options).extract(map, grid);
}

// LTVM v1 wire format, little-endian:
//   header (16 B): "LTVM", u8 version=1, u8×3 reserved, u32 segments, u32 edges
//   segment (34 B): u32 id, 3×f32 centre, f32 yaw, 3×f32 half-extents, u8 exploration, u8 coverage
//   edge (8 B): u32 a, u32 b
//   goal (12 B): 3×f32, repeated until the end of the input
inline constexpr std::uint8_t kLtvmVersion = 1;
inline constexpr std::size_t kLtvmHeaderBytes = 16;
inline constexpr std::size_t kLtvmSegmentBytes = 34;
inline constexpr std::size_t kLtvmEdgeBytes = 8;
inline constexpr std::size_t kLtvmGoalBytes = 12;

inline std::size_t encoded_size(const LtvMap& m) {
  return kLtvmHeaderBytes + kLtvmSegmentBytes * m.segments.size() + kLtvmEdgeBytes * m.edges.size() +
         kLtvmGoalBytes * m.goals.size();
}

inline std::vector<std::uint8_t> encode(const LtvMap& m) {
  ByteWriter w;
  w.magic("LTVM");
  w.u8(kLtvmVersion);
  w.u8(0), w.u8(0), w.u8(0);
  w.u32(std::uint32_t(m.segments.size()));
  w.u32(std::uint32_t(m.edges.size()));
  for (const LtvSegment& s : m.segments) {
    w.u32(s.id);
    for (int a = 0; a < 3; ++a) w.f32(s.center[a]);
    w.f32(s.yaw);
    for (int a = 0; a < 3; ++a) w.f32(s.half[a]);
    w.u8(s.exploration);
    w.u8(s.coverage);
  }
  for (const auto& [a, b] : m.edges) w.u32(a), w.u32(b);
  for (const Eigen::Vector3f& g : m.goals) {
    for (int a = 0; a < 3; ++a) w.f32(g[a]);
  }
  return std::move(w).take();
}

inline LtvMap decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("LTVM");
  if (r.remaining() < kLtvmHeaderBytes - 4) throw ParseError(ParseError::Kind::truncated, "LTVM header truncated");
  if (r.u8() != kLtvmVersion) throw ParseError(ParseError::Kind::bad_version, "LTVM unsupported version");
  if (r.u8() != 0 || r.u8() != 0 || r.u8() != 0) throw ParseError(ParseError::Kind::bad_header, "LTVM reserved bytes set");
  const std::uint32_t ns = r.u32(), ne = r.u32();
  const std::uint64_t fixed = std::uint64_t(ns) * kLtvmSegmentBytes + std::uint64_t(ne) * kLtvmEdgeBytes;
  if (fixed > r.remaining()) throw ParseError(ParseError::Kind::truncated, "LTVM body truncated");
  if ((r.remaining() - fixed) % kLtvmGoalBytes != 0) {
    throw ParseError(ParseError::Kind::trailing_bytes, "LTVM goal section is not a whole number of records");
  }
  auto bad = [](const char* what) { return ParseError(ParseError::Kind::bad_payload, std::string("LTVM ") + what); };

  LtvMap m;
  std::unordered_map<std::uint32_t, char> ids;
  for (std::uint32_t k = 0; k < ns; ++k) {
    LtvSegment s;
    s.id = r.u32();
    for (int a = 0; a < 3; ++a) s.center[a] = r.f32();
    s.yaw = r.f32();
    for (int a = 0; a < 3; ++a) s.half[a] = r.f32();
    s.exploration = r.u8();
    s.coverage = r.u8();
    if (!s.center.allFinite() || !s.half.allFinite() || !(s.half.array() > 0.0f).all()) throw bad("invalid box");
    if (!(s.yaw >= -float(std::numbers::pi / 2) && s.yaw < float(std::numbers::pi / 2))) throw bad("yaw out of range");
    if (!ids.emplace(s.id, 1).second) throw bad("duplicate segment id");
    m.segments.push_back(s);
  }
  for (std::uint32_t k = 0; k < ne; ++k) {
    const std::uint32_t a = r.u32(), b = r.u32();
    if (!ids.count(a) || !ids.count(b)) throw bad("edge references unknown segment");
    m.edges.push_back({a, b});
  }
  while (r.remaining() > 0) {
    Eigen::Vector3f g;
    for (int a = 0; a < 3; ++a) g[a] = r.f32();
    m.goals.push_back(g);
  }
  r.expect_end();
  return m;
}

struct SizeReport {
  std::size_t ltv_bytes = 0;
  std::size_t grid_bytes = 0;
  std::size_t coarse_grid_bytes = 0;  ///< grid downsampled to ~1 m voxels
};

inline SizeReport size_report(const LtvMap& ltv, const OccupancyGrid& grid) {
  if (grid.resolution() > 1.0) throw std::invalid_argument("size_report expects a resolution <= 1 m");
  const int factor = std::max(1, int(std::lround(1.0 / grid.resolution())));
  return {encode(ltv).size(), save_grid(grid).size(), save_grid(downsample(grid, factor)).size()};
}

/// Fraction of total box volume (sampled at voxel centres) that is not free.
inline double nonfree_box_fraction(const LtvMap& ltv, const OccupancyGrid& grid) {
  std::size_t total = 0, nonfree = 0;
  for (const LtvSegment& s : ltv.segments) {
    const OrientedBox box = s.box();
    const double reach = box.half.head<2>().norm();
    const Vec3 ext(reach, reach, box.half.z());
    const Index3 lo = grid.voxel_of(box.center - ext), hi = grid.voxel_of(box.center + ext);
    for (int z = lo.z; z <= hi.z; ++z) {
      for (int y = lo.y; y <= hi.y; ++y) {
        for (int x = lo.x; x <= hi.x; ++x) {
          const Index3 i{x, y, z};
          if (!box.contains(grid.center(i))) continue;
          ++total;
          if (grid.state(i) != Occupancy::free) ++nonfree;
        }
      }
    }
  }
  return total == 0 ? 0.0 : double(nonfree) / double(total);
}

}  // namespace spheremap
