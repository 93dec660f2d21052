#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "spheremap/byte_io.hpp"
#include "spheremap/params.hpp"
#include "spheremap/sphere_map.hpp"

namespace spheremap {

// SMAP v1, little-endian, all records in ascending key order:
//   "SMP1" u8 version=1, u8×3 reserved
//   build params: 8×f64 (r_min cube_side r_exp r_merge kappa eps_r max_radius
//                 index_cell), 5×u32 (voxel_stride ray_count samples_per_ray seed
//                 connect_candidates)
//   cost params:  3×f64 (xi d_max r_min)
//   u32 n, nodes:     u32 id, 3×f64 p, f64 r, u32 segment
//   u32 n, edges:     u32 a < u32 b
//   u32 n, segments:  u32 label, 3×f64 centre, f64 radius
//   u32 n, portals:   u32 lo, u32 hi, u32 a, u32 b, f64 radius
//   u32 n, paths:     u32 segment, u32 a < u32 b, u32 len, len×u32 nodes, f64 cost
// Decoding rejects out-of-order records, so encode(decode(bytes)) == bytes.

inline constexpr std::uint8_t kSmapVersion = 1;

inline std::vector<std::uint8_t> encode_snapshot(const SphereMap& map) {
  const SphereMap::RawState raw = map.to_raw();
  const BuildParams& b = map.params();
  const PlannerParams& c = map.cost_params();
  ByteWriter w;
  w.magic("SMP1");
  w.u8(kSmapVersion);
  w.u8(0), w.u8(0), w.u8(0);
  for (double v : {b.r_min, b.cube_side, b.r_exp, b.r_merge, b.kappa, b.eps_r, b.max_radius, b.index_cell}) w.f64(v);
  w.u32(std::uint32_t(b.voxel_stride));
  w.u32(std::uint32_t(b.ray_count));
  w.u32(std::uint32_t(b.samples_per_ray));
  w.u32(b.seed);
  w.u32(b.connect_candidates ? 1u : 0u);
  w.f64(c.xi), w.f64(c.d_max), w.f64(c.r_min);

  auto vec3 = [&](const Vec3& p) { w.f64(p.x()), w.f64(p.y()), w.f64(p.z()); };
  w.u32(std::uint32_t(raw.nodes.size()));
  for (const SphereNode& n : raw.nodes) {
    w.u32(n.id);
    vec3(n.p);
    w.f64(n.r);
    w.u32(n.segment);
  }
  std::vector<NodePair> edges = raw.edges;
  std::sort(edges.begin(), edges.end());
  w.u32(std::uint32_t(edges.size()));
  for (const auto& [a, b2] : edges) w.u32(a), w.u32(b2);
  w.u32(std::uint32_t(raw.segments.size()));
  for (const auto& [label, bound] : raw.segments) {
    w.u32(label);
    vec3(bound.center);
    w.f64(bound.radius);
  }
  w.u32(std::uint32_t(raw.portals.size()));
  for (const auto& [key, portal] : raw.portals) {
    w.u32(key.first), w.u32(key.second), w.u32(portal.a), w.u32(portal.b);
    w.f64(portal.radius);
  }
  std::size_t path_count = 0;
  for (const auto& [label, paths] : raw.paths) path_count += paths.size();
  w.u32(std::uint32_t(path_count));
  for (const auto& [label, paths] : raw.paths) {
    for (const auto& [key, path] : paths) {
      w.u32(label), w.u32(key.first), w.u32(key.second);
      w.u32(std::uint32_t(path.nodes.size()));
      for (NodeId id : path.nodes) w.u32(id);
      w.f64(path.cost);
    }
  }
  return std::move(w).take();
}

inline SphereMap decode_snapshot(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SMP1");
  const std::uint8_t version = r.u8();
  if (version != kSmapVersion) throw ParseError(ParseError::Kind::bad_version, "SMAP unsupported version");
  if (r.u8() != 0 || r.u8() != 0 || r.u8() != 0) throw ParseError(ParseError::Kind::bad_header, "SMAP reserved bytes set");

  BuildParams b;
  for (double* v : {&b.r_min, &b.cube_side, &b.r_exp, &b.r_merge, &b.kappa, &b.eps_r, &b.max_radius, &b.index_cell}) {
    *v = r.f64();
  }
  b.voxel_stride = int(r.u32());
  b.ray_count = int(r.u32());
  b.samples_per_ray = int(r.u32());
  b.seed = r.u32();
  const std::uint32_t flags = r.u32();
  if (flags > 1) throw ParseError(ParseError::Kind::bad_header, "SMAP unknown build flags");
  b.connect_candidates = flags == 1;
  PlannerParams c;
  c.xi = r.f64(), c.d_max = r.f64(), c.r_min = r.f64();
  try {
    b.validate();
    c.validate();
  } catch (const ConfigError& e) {
    throw ParseError(ParseError::Kind::bad_header, std::string("SMAP params invalid: ") + e.what());
  }

  auto bad = [](const char* what) { return ParseError(ParseError::Kind::bad_payload, std::string("SMAP ") + what); };
  auto vec3 = [&] {
    Vec3 p;
    p.x() = r.f64(), p.y() = r.f64(), p.z() = r.f64();
    if (!p.allFinite()) throw bad("non-finite coordinate");
    return p;
  };
  // Each record occupies at least `min_bytes`; reject counts the input cannot hold.
  auto count = [&](std::size_t min_bytes) {
    const std::uint32_t n = r.u32();
    if (std::uint64_t(n) * min_bytes > r.remaining()) {
      throw ParseError(ParseError::Kind::truncated, "SMAP record count exceeds input");
    }
    return n;
  };

  SphereMap::RawState raw;
  const std::uint32_t n_nodes = count(44);
  for (std::uint32_t k = 0; k < n_nodes; ++k) {
    SphereNode n;
    n.id = r.u32();
    n.p = vec3();
    n.r = r.f64();
    n.segment = r.u32();
    if (!std::isfinite(n.r) || n.r < 0.0) throw bad("invalid radius");
    if (k > 0 && n.id <= raw.nodes.back().id) throw bad("nodes out of order");
    raw.nodes.push_back(n);
  }
  const std::uint32_t n_edges = count(8);
  for (std::uint32_t k = 0; k < n_edges; ++k) {
    const NodePair e{r.u32(), r.u32()};
    if (e.first >= e.second) throw bad("edge endpoints out of order");
    if (k > 0 && e <= raw.edges.back()) throw bad("edges out of order");
    raw.edges.push_back(e);
  }
  const std::uint32_t n_segments = count(36);
  for (std::uint32_t k = 0; k < n_segments; ++k) {
    const SegmentId label = r.u32();
    Sphere bound;
    bound.center = vec3();
    bound.radius = r.f64();
    if (!std::isfinite(bound.radius)) throw bad("invalid bound");
    if (k > 0 && label <= raw.segments.back().first) throw bad("segments out of order");
    raw.segments.push_back({label, bound});
  }
  const std::uint32_t n_portals = count(24);
  for (std::uint32_t k = 0; k < n_portals; ++k) {
    const SegmentPair key{r.u32(), r.u32()};
    Portal p;
    p.a = r.u32();
    p.b = r.u32();
    p.radius = r.f64();
    if (key.first >= key.second) throw bad("portal key out of order");
    if (!raw.portals.empty() && key <= raw.portals.rbegin()->first) throw bad("portals out of order");
    raw.portals.emplace(key, p);
  }
  const std::uint32_t n_paths = count(24);
  std::pair<SegmentId, NodePair> last{};
  for (std::uint32_t k = 0; k < n_paths; ++k) {
    const SegmentId label = r.u32();
    const NodePair key{r.u32(), r.u32()};
    if (key.first >= key.second) throw bad("path key out of order");
    if (k > 0 && std::pair{label, key} <= last) throw bad("paths out of order");
    last = {label, key};
    const std::uint32_t len = count(4);
    CachedPath path;
    path.nodes.reserve(len);
    for (std::uint32_t i = 0; i < len; ++i) path.nodes.push_back(r.u32());
    path.cost = r.f64();
    raw.paths[label].emplace(key, std::move(path));
  }
  r.expect_end();
  try {
    return SphereMap::from_raw(b, c, raw);
  } catch (const std::invalid_argument& e) {
    throw ParseError(ParseError::Kind::bad_payload, std::string("SMAP ") + e.what());
  }
}

}  // namespace spheremap
