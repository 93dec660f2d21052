#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spheremap/params.hpp"
#include "spheremap/voxel_grid.hpp"

namespace spheremap::bench {

enum class WorldKind { corridor_maze, perforated_cave, room_grid, two_route };

inline const char* to_string(WorldKind k) {
  switch (k) {
    case WorldKind::corridor_maze: return "corridor-maze";
    case WorldKind::perforated_cave: return "perforated-cave";
    case WorldKind::room_grid: return "room-grid";
    case WorldKind::two_route: return "two-route";
  }
  return "?";
}

inline std::optional<WorldKind> parse_world_kind(std::string_view s) {
  for (WorldKind k : {WorldKind::corridor_maze, WorldKind::perforated_cave, WorldKind::room_grid, WorldKind::two_route}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct WorldSpec {
  WorldKind kind = WorldKind::corridor_maze;
  Vec3 extent = Vec3(150, 150, 4);
  double resolution = 0.2;
  std::uint32_t seed = 0;
  double corridor_width_min = 3.0;
  double corridor_width_max = 6.0;
  double room_size_min = 6.0;
  double room_size_max = 12.0;
  double passage_width = 2.0;
  double cell_size = 10.0;       ///< maze cell pitch and cave chamber spacing
  double loop_fraction = 0.15;   ///< share of non-tree neighbour links that are opened
  double pillar_density = 0.02;  ///< pillars per square metre of chamber floor (caves)

  void validate() const {
    if (!(resolution > 0.0)) throw ConfigError("world resolution must be > 0");
    if (!(extent.minCoeff() > 4 * resolution)) throw ConfigError("world extent too small");
    if (!(corridor_width_min > 0.0 && corridor_width_min <= corridor_width_max)) {
      throw ConfigError("need 0 < corridor_width_min <= corridor_width_max");
    }
    if (!(room_size_min > 0.0 && room_size_min <= room_size_max)) throw ConfigError("need 0 < room_size_min <= room_size_max");
    if (!(passage_width > 2 * resolution)) throw ConfigError("passage_width must exceed two voxels");
    if (!(loop_fraction >= 0.0 && loop_fraction <= 1.0)) throw ConfigError("loop_fraction must be in [0, 1]");
    if (!(pillar_density >= 0.0)) throw ConfigError("pillar_density must be >= 0");
    const double inner = std::min(extent.x(), extent.y()) - 2 * resolution;
    switch (kind) {
      case WorldKind::corridor_maze:
        if (corridor_width_max > inner) throw ConfigError("corridor wider than the world extent");
        if (corridor_width_max > cell_size - 2 * resolution) throw ConfigError("corridor wider than the maze cell");
        break;
      case WorldKind::perforated_cave:
        if (corridor_width_max > inner) throw ConfigError("tunnel wider than the world extent");
        break;
      case WorldKind::room_grid:
        if (room_size_min > inner) throw ConfigError("room larger than the world extent");
        if (passage_width > room_size_min) throw ConfigError("passage wider than the smallest room");
        break;
      case WorldKind::two_route:
        if (extent.x() < 30 || extent.y() < 24) throw ConfigError("two-route fixture needs at least 30 x 24 m");
        break;
    }
  }
};

/// A fully known world plus the skeleton it was carved from. Straight lines
/// between linked landmarks run through free space.
struct World {
  WorldSpec spec;
  OccupancyGrid grid;
  std::vector<Vec3> landmarks;
  std::vector<std::pair<int, int>> links;
  Vec3 start = Vec3::Zero();  ///< suggested start, landmark 0
  Vec3 goal = Vec3::Zero();   ///< suggested far goal
};

namespace detail {

inline VoxelBox voxels_with_centres_in(const OccupancyGrid& g, const Vec3& lo, const Vec3& hi) {
  const double r = g.resolution();
  const Vec3 o = g.origin();
  auto first = [&](double v, double org) { return int(std::ceil((v - org) / r - 0.5)); };
  auto last = [&](double v, double org) { return int(std::floor((v - org) / r - 0.5)) + 1; };
  return g.clip({{first(lo.x(), o.x()), first(lo.y(), o.y()), first(lo.z(), o.z())},
                 {last(hi.x(), o.x()), last(hi.y(), o.y()), last(hi.z(), o.z())}});
}

/// Keeps a one-voxel occupied shell around the world.
inline VoxelBox interior(const OccupancyGrid& g) {
  return {{1, 1, 1}, {g.dims().x - 1, g.dims().y - 1, g.dims().z - 1}};
}

inline VoxelBox intersect(const VoxelBox& a, const VoxelBox& b) {
  return {{std::max(a.lo.x, b.lo.x), std::max(a.lo.y, b.lo.y), std::max(a.lo.z, b.lo.z)},
          {std::min(a.hi.x, b.hi.x), std::min(a.hi.y, b.hi.y), std::min(a.hi.z, b.hi.z)}};
}

inline void carve_box(OccupancyGrid& g, const Vec3& lo, const Vec3& hi) {
  g.fill_box(intersect(voxels_with_centres_in(g, lo, hi), interior(g)), Occupancy::free);
}

template <typename Inside>
void carve_where(OccupancyGrid& g, const Vec3& lo, const Vec3& hi, Inside&& inside) {
  const VoxelBox box = intersect(voxels_with_centres_in(g, lo, hi), interior(g));
  box.for_each([&](const Index3& i) {
    if (inside(g.center(i))) g.set(i, Occupancy::free);
  });
}

inline double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

inline void carve_capsule(OccupancyGrid& g, const Vec3& a, const Vec3& b, double radius) {
  const Vec3 lo = a.cwiseMin(b).array() - radius, hi = a.cwiseMax(b).array() + radius;
  carve_where(g, lo, hi, [&](const Vec3& p) { return segment_distance(p, a, b) <= radius; });
}

/// Random spanning tree over a rectangular lattice (randomised DFS), plus a
/// fraction of the remaining neighbour links.
inline std::vector<std::pair<int, int>> lattice_links(int nx, int ny, double loop_fraction, std::mt19937_64& rng) {
  const int n = nx * ny;
  auto neighbours = [&](int c) {
    std::vector<int> out;
    const int x = c % nx, y = c / nx;
    if (x > 0) out.push_back(c - 1);
    if (x + 1 < nx) out.push_back(c + 1);
    if (y > 0) out.push_back(c - nx);
    if (y + 1 < ny) out.push_back(c + nx);
    return out;
  };
  std::vector<char> seen(n, 0);
  std::vector<std::pair<int, int>> links;
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int c = stack.back();
    std::vector<int> open;
    for (int m : neighbours(c)) {
      if (!seen[m]) open.push_back(m);
    }
    if (open.empty()) {
      stack.pop_back();
      continue;
    }
    const int m = open[rng() % open.size()];
    seen[m] = 1;
    links.push_back({std::min(c, m), std::max(c, m)});
    stack.push_back(m);
  }
  std::vector<std::pair<int, int>> tree = links;
  std::sort(tree.begin(), tree.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < n; ++c) {
    for (int m : neighbours(c)) {
      if (m < c) continue;
      if (std::binary_search(tree.begin(), tree.end(), std::pair{c, m})) continue;
      if (u(rng) < loop_fraction) links.push_back({c, m});
    }
  }
  return links;
}

inline World corridor_maze(const WorldSpec& s, OccupancyGrid grid, std::mt19937_64& rng) {
  World w{s, std::move(grid), {}, {}, {}, {}};
  const double margin = s.resolution + 0.5 * s.corridor_width_max;
  const int nx = std::max(1, int((s.extent.x() - 2 * margin) / s.cell_size) + 1);
  const int ny = std::max(1, int((s.extent.y() - 2 * margin) / s.cell_size) + 1);
  const double zc = 0.5 * s.extent.z();
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) w.landmarks.emplace_back(margin + x * s.cell_size, margin + y * s.cell_size, zc);
  }
  w.links = lattice_links(nx, ny, s.loop_fraction, rng);
  std::uniform_real_distribution<double> width(s.corridor_width_min, s.corridor_width_max);
  std::vector<double> junction(w.landmarks.size(), 0.0);
  for (const auto& [a, b] : w.links) {
    const double h = 0.5 * width(rng);
    junction[a] = std::max(junction[a], h);
    junction[b] = std::max(junction[b], h);
    const Vec3 pa = w.landmarks[a], pb = w.landmarks[b];
    const Vec3 lo(std::min(pa.x(), pb.x()) - h, std::min(pa.y(), pb.y()) - h, 0.0);
    const Vec3 hi(std::max(pa.x(), pb.x()) + h, std::max(pa.y(), pb.y()) + h, s.extent.z());
    carve_box(w.grid, lo, hi);
  }
  if (w.links.empty()) junction[0] = 0.5 * s.corridor_width_max;
  for (std::size_t c = 0; c < w.landmarks.size(); ++c) {
    const double h = junction[c];
    if (h <= 0) continue;
    carve_box(w.grid, Vec3(w.landmarks[c].x() - h, w.landmarks[c].y() - h, 0),
              Vec3(w.landmarks[c].x() + h, w.landmarks[c].y() + h, s.extent.z()));
  }
  w.start = w.landmarks.front();
  w.goal = w.landmarks.back();
  return w;
}

inline World perforated_cave(const WorldSpec& s, OccupancyGrid grid, std::mt19937_64& rng) {
  World w{s, std::move(grid), {}, {}, {}, {}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rmax = 0.5 * std::min(s.room_size_max, s.cell_size);
  const double margin = s.resolution + rmax;
  const int nx = std::max(1, int((s.extent.x() - 2 * margin) / s.cell_size) + 1);
  const int ny = std::max(1, int((s.extent.y() - 2 * margin) / s.cell_size) + 1);
  const double zc = 0.5 * s.extent.z();
  const double jitter = 0.25 * s.cell_size;
  std::vector<Vec3> radii;
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      Vec3 c(margin + x * s.cell_size + jitter * (2 * u(rng) - 1), margin + y * s.cell_size + jitter * (2 * u(rng) - 1),
             zc + 0.15 * s.extent.z() * (2 * u(rng) - 1));
      c.x() = std::clamp(c.x(), margin, s.extent.x() - margin);
      c.y() = std::clamp(c.y(), margin, s.extent.y() - margin);
      w.landmarks.push_back(c);
      const double lo = 0.5 * std::min(s.room_size_min, s.cell_size), hi = rmax;
      radii.emplace_back(lo + (hi - lo) * u(rng), lo + (hi - lo) * u(rng), 0.5 * s.extent.z() * (0.8 + 0.2 * u(rng)));
    }
  }
  w.links = lattice_links(nx, ny, s.loop_fraction, rng);
  std::uniform_real_distribution<double> width(s.corridor_width_min, s.corridor_width_max);
  for (std::size_t c = 0; c < w.landmarks.size(); ++c) {
    const Vec3 ctr = w.landmarks[c], r = radii[c];
    carve_where(w.grid, ctr - r, ctr + r, [&](const Vec3& p) { return ((p - ctr).array() / r.array()).matrix().squaredNorm() <= 1.0; });
  }
  for (const auto& [a, b] : w.links) {
    const double radius = 0.5 * std::min(width(rng), s.extent.z() - 2 * s.resolution);
    carve_capsule(w.grid, w.landmarks[a], w.landmarks[b], radius);
  }
  // Pillars inside chambers, kept clear of every tunnel axis and chamber centre.
  for (std::size_t c = 0; c < w.landmarks.size(); ++c) {
    const Vec3 ctr = w.landmarks[c], r = radii[c];
    const int pillars = int(std::floor(s.pillar_density * std::numbers::pi * r.x() * r.y() + u(rng)));
    for (int k = 0; k < pillars; ++k) {
      const double pr = 0.4 + 0.6 * u(rng);
      const double ang = 2 * std::numbers::pi * u(rng), rad = 0.3 + 0.5 * u(rng);
      const Vec3 base(ctr.x() + rad * r.x() * std::cos(ang), ctr.y() + rad * r.y() * std::sin(ang), 0.0);
      bool clear = (Vec3(base.x(), base.y(), 0) - Vec3(ctr.x(), ctr.y(), 0)).norm() > pr + 1.5;
      for (const auto& [a, b] : w.links) {
        const Vec3 pa(w.landmarks[a].x(), w.landmarks[a].y(), 0), pb(w.landmarks[b].x(), w.landmarks[b].y(), 0);
        clear = clear && segment_distance(base, pa, pb) > pr + 1.5;
      }
      if (!clear) continue;
      const VoxelBox box = intersect(voxels_with_centres_in(w.grid, base - Vec3(pr, pr, 0), base + Vec3(pr, pr, s.extent.z())),
                                     interior(w.grid));
      box.for_each([&](const Index3& i) {
        const Vec3 p = w.grid.center(i);
        if (std::hypot(p.x() - base.x(), p.y() - base.y()) <= pr) w.grid.set(i, Occupancy::occupied);
      });
    }
  }
  w.start = w.landmarks.front();
  w.goal = w.landmarks.back();
  return w;
}

inline World room_grid(const WorldSpec& s, OccupancyGrid grid, std::mt19937_64& rng) {
  World w{s, std::move(grid), {}, {}, {}, {}};
  std::uniform_real_distribution<double> size(s.room_size_min, s.room_size_max);
  const double pitch = s.room_size_max + 2.0;
  const double usable_x = s.extent.x() - 2 * s.resolution, usable_y = s.extent.y() - 2 * s.resolution;
  const int nx = std::max(1, int(usable_x / pitch)), ny = std::max(1, int(usable_y / pitch));
  const double px = usable_x / nx, py = usable_y / ny;
  const double height = s.extent.z();
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      const Vec3 c(s.resolution + (x + 0.5) * px, s.resolution + (y + 0.5) * py, 0.5 * height);
      const double hx = 0.5 * std::min(size(rng), px - 2 * s.resolution);
      const double hy = 0.5 * std::min(size(rng), py - 2 * s.resolution);
      carve_box(w.grid, Vec3(c.x() - hx, c.y() - hy, 0), Vec3(c.x() + hx, c.y() + hy, height));
      w.landmarks.push_back(c);
    }
  }
  w.links = lattice_links(nx, ny, s.loop_fraction, rng);
  const double h = 0.5 * s.passage_width;
  for (const auto& [a, b] : w.links) {
    const Vec3 pa = w.landmarks[a], pb = w.landmarks[b];
    carve_box(w.grid, Vec3(std::min(pa.x(), pb.x()) - h, std::min(pa.y(), pb.y()) - h, 0),
              Vec3(std::max(pa.x(), pb.x()) + h, std::max(pa.y(), pb.y()) + h, height));
  }
  w.start = w.landmarks.front();
  w.goal = w.landmarks.back();
  return w;
}

/// Start and goal halls joined by a straight passage of `passage_width` and
/// by a U-shaped detour of width 8 m.
inline World two_route(const WorldSpec& s, OccupancyGrid grid) {
  World w{s, std::move(grid), {}, {}, {}, {}};
  const double hall = 8.0, wide = 8.0, z = s.extent.z();
  const double y0 = s.resolution + 0.5 * hall + 1.0;  // passage centre line
  const double x_end = s.extent.x() - s.resolution;
  carve_box(w.grid, Vec3(0, y0 - 0.5 * hall, 0), Vec3(hall, y0 + 0.5 * hall, z));
  carve_box(w.grid, Vec3(x_end - hall, y0 - 0.5 * hall, 0), Vec3(x_end, y0 + 0.5 * hall, z));
  const double hp = 0.5 * s.passage_width;
  carve_box(w.grid, Vec3(hall, y0 - hp, 0), Vec3(x_end - hall, y0 + hp, z));
  // detour: up from each hall, then across, clear of the passage by at least 4 m of rock
  const double yd = y0 + 0.5 * hall + 4.0 + 0.5 * wide;
  carve_box(w.grid, Vec3(0.5 * hall - 0.5 * wide, y0, 0), Vec3(0.5 * hall + 0.5 * wide, yd + 0.5 * wide, z));
  carve_box(w.grid, Vec3(x_end - 0.5 * hall - 0.5 * wide, y0, 0), Vec3(x_end - 0.5 * hall + 0.5 * wide, yd + 0.5 * wide, z));
  carve_box(w.grid, Vec3(0.5 * hall - 0.5 * wide, yd - 0.5 * wide, 0), Vec3(x_end - 0.5 * hall + 0.5 * wide, yd + 0.5 * wide, z));
  const double zc = 0.5 * z;
  w.landmarks = {Vec3(0.5 * hall, y0, zc), Vec3(x_end - 0.5 * hall, y0, zc), Vec3(0.5 * hall, yd, zc),
                 Vec3(x_end - 0.5 * hall, yd, zc)};
  w.links = {{0, 1}, {0, 2}, {2, 3}, {1, 3}};
  w.start = w.landmarks[0];
  w.goal = w.landmarks[1];
  return w;
}

}  // namespace detail

/// Fully known free/occupied world with a one-voxel occupied shell.
inline World generate_world(const WorldSpec& spec) {
  spec.validate();
  const Index3 dims{int(std::ceil(spec.extent.x() / spec.resolution - 1e-9)),
                    int(std::ceil(spec.extent.y() / spec.resolution - 1e-9)),
                    int(std::ceil(spec.extent.z() / spec.resolution - 1e-9))};
  OccupancyGrid grid(spec.resolution, Vec3::Zero(), dims, Occupancy::occupied);
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case WorldKind::corridor_maze: return detail::corridor_maze(spec, std::move(grid), rng);
    case WorldKind::perforated_cave: return detail::perforated_cave(spec, std::move(grid), rng);
    case WorldKind::room_grid: return detail::room_grid(spec, std::move(grid), rng);
    case WorldKind::two_route: return detail::two_route(spec, std::move(grid));
  }
  throw ConfigError("unknown world kind");
}

/// Face-connected components of free voxels: (largest size, total free).
inline std::pair<std::size_t, std::size_t> largest_free_component(const OccupancyGrid& g) {
  std::vector<char> seen(g.voxel_count(), 0);
  std::size_t best = 0, total = 0;
  std::vector<std::size_t> stack;
  for (std::size_t n = 0; n < g.voxel_count(); ++n) {
    if (seen[n] || g.states()[n] != Occupancy::free) continue;
    std::size_t size = 0;
    stack.push_back(n);
    seen[n] = 1;
    while (!stack.empty()) {
      const Index3 i = g.unlinear(stack.back());
      stack.pop_back();
      ++size;
      for (const Index3& d : kFaceNeighbors) {
        const Index3 j = i + d;
        if (!g.is_free(j)) continue;
        const std::size_t m = g.linear(j);
        if (!seen[m]) seen[m] = 1, stack.push_back(m);
      }
    }
    best = std::max(best, size);
    total += size;
  }
  return {best, total};
}

/// Applies `key=value` overrides to a world spec; returns false for keys that
/// belong elsewhere.
inline bool apply_param(WorldSpec& s, const std::string& key, const std::string& value) {
  if (key == "world") {
    const auto k = parse_world_kind(value);
    if (!k) throw ConfigError("unknown world kind '" + value + "'");
    s.kind = *k;
    return true;
  }
  if (key == "extent_x") return s.extent.x() = parse_double(key, value), true;
  if (key == "extent_y") return s.extent.y() = parse_double(key, value), true;
  if (key == "extent_z") return s.extent.z() = parse_double(key, value), true;
  if (key == "resolution") return s.resolution = parse_double(key, value), true;
  if (key == "corridor_width_min") return s.corridor_width_min = parse_double(key, value), true;
  if (key == "corridor_width_max") return s.corridor_width_max = parse_double(key, value), true;
  if (key == "room_size_min") return s.room_size_min = parse_double(key, value), true;
  if (key == "room_size_max") return s.room_size_max = parse_double(key, value), true;
  if (key == "passage_width") return s.passage_width = parse_double(key, value), true;
  if (key == "cell_size") return s.cell_size = parse_double(key, value), true;
  if (key == "loop_fraction") return s.loop_fraction = parse_double(key, value), true;
  if (key == "pillar_density") return s.pillar_density = parse_double(key, value), true;
  return false;
}

}  // namespace spheremap::bench
