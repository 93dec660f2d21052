#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "spheremap/byte_io.hpp"

namespace spheremap {

using Vec3 = Eigen::Vector3d;

/// Stored voxel states use the first three values; `out_of_bounds` is only
/// ever returned by queries.
enum class Occupancy : std::uint8_t { unknown = 0, free = 1, occupied = 2, out_of_bounds = 3 };

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
};

/// Half-open voxel range [lo, hi) per axis.
struct VoxelBox {
  Index3 lo;
  Index3 hi;

  bool empty() const { return hi.x <= lo.x || hi.y <= lo.y || hi.z <= lo.z; }
  std::size_t count() const {
    return empty() ? 0
                   : std::size_t(hi.x - lo.x) * std::size_t(hi.y - lo.y) * std::size_t(hi.z - lo.z);
  }
  bool contains(const Index3& i) const {
    return i.x >= lo.x && i.x < hi.x && i.y >= lo.y && i.y < hi.y && i.z >= lo.z && i.z < hi.z;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (int z = lo.z; z < hi.z; ++z)
      for (int y = lo.y; y < hi.y; ++y)
        for (int x = lo.x; x < hi.x; ++x) fn(Index3{x, y, z});
  }
};

/// Axis-aligned cube centred on the vehicle; one update iteration only
/// touches what lies inside it.
struct UpdateCube {
  Vec3 center = Vec3::Zero();
  double side = 1.0;

  UpdateCube() = default;
  UpdateCube(const Vec3& c, double s) : center(c), side(s) {
    if (!(s > 0.0)) throw std::invalid_argument("update cube side must be positive");
  }

  bool contains(const Vec3& p) const {
    const double h = 0.5 * side;
    return std::abs(p.x() - center.x()) <= h && std::abs(p.y() - center.y()) <= h &&
           std::abs(p.z() - center.z()) <= h;
  }

  UpdateCube inflated(double margin) const { return UpdateCube(center, side + 2.0 * margin); }
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  OccupancyGrid(double resolution, const Vec3& origin, const Index3& dims,
                Occupancy fill = Occupancy::unknown)
      : resolution_(resolution), origin_(origin), dims_(dims) {
    validate_geometry();
    states_.assign(voxel_count(), fill);
  }

  OccupancyGrid(double resolution, const Vec3& origin, const Index3& dims,
                std::vector<Occupancy> states)
      : resolution_(resolution), origin_(origin), dims_(dims), states_(std::move(states)) {
    validate_geometry();
    if (states_.size() != voxel_count()) {
      throw std::invalid_argument("state array length does not match nx*ny*nz");
    }
  }

  double resolution() const noexcept { return resolution_; }
  const Vec3& origin() const noexcept { return origin_; }
  const Index3& dims() const noexcept { return dims_; }
  std::size_t voxel_count() const noexcept {
    return std::size_t(dims_.x) * std::size_t(dims_.y) * std::size_t(dims_.z);
  }
  std::span<const Occupancy> states() const noexcept { return states_; }
  Vec3 extent() const { return Vec3(dims_.x, dims_.y, dims_.z) * resolution_; }
  VoxelBox full_box() const { return {{0, 0, 0}, dims_}; }

  bool in_bounds(const Index3& i) const noexcept {
    return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < dims_.x && i.y < dims_.y && i.z < dims_.z;
  }

  std::size_t linear(const Index3& i) const noexcept {
    return std::size_t(i.x) + std::size_t(dims_.x) * (std::size_t(i.y) + std::size_t(dims_.y) * std::size_t(i.z));
  }

  Index3 unlinear(std::size_t n) const noexcept {
    const std::size_t nx = std::size_t(dims_.x), ny = std::size_t(dims_.y);
    return {int(n % nx), int((n / nx) % ny), int(n / (nx * ny))};
  }

  /// Voxel containing `p`; may be out of bounds.
  Index3 voxel_of(const Vec3& p) const {
    const Vec3 f = (p - origin_) / resolution_;
    return {int(std::floor(f.x())), int(std::floor(f.y())), int(std::floor(f.z()))};
  }

  Vec3 center(const Index3& i) const {
    return origin_ + resolution_ * Vec3(i.x + 0.5, i.y + 0.5, i.z + 0.5);
  }

  /// Out-of-array voxels read as unknown.
  Occupancy state(const Index3& i) const noexcept {
    return in_bounds(i) ? states_[linear(i)] : Occupancy::unknown;
  }

  void set(const Index3& i, Occupancy s) {
    if (!in_bounds(i)) throw std::out_of_range("voxel index out of bounds");
    if (s == Occupancy::out_of_bounds) throw std::invalid_argument("cannot store out_of_bounds");
    states_[linear(i)] = s;
  }

  Occupancy state_at(const Vec3& p) const {
    const Index3 i = voxel_of(p);
    return in_bounds(i) ? states_[linear(i)] : Occupancy::out_of_bounds;
  }

  bool is_free(const Index3& i) const noexcept { return state(i) == Occupancy::free; }

  void fill_box(const VoxelBox& box, Occupancy s) {
    const VoxelBox b = clip(box);
    b.for_each([&](const Index3& i) { states_[linear(i)] = s; });
  }

  VoxelBox clip(const VoxelBox& b) const {
    return {{std::max(b.lo.x, 0), std::max(b.lo.y, 0), std::max(b.lo.z, 0)},
            {std::min(b.hi.x, dims_.x), std::min(b.hi.y, dims_.y), std::min(b.hi.z, dims_.z)}};
  }

  /// Voxels whose centroid lies inside the cube, clipped to the array.
  VoxelBox voxel_range(const UpdateCube& cube) const {
    const double h = 0.5 * cube.side;
    auto lo = [&](double c, double o) { return int(std::ceil((c - h - o) / resolution_ - 0.5)); };
    auto hi = [&](double c, double o) { return int(std::floor((c + h - o) / resolution_ - 0.5)) + 1; };
    return clip({{lo(cube.center.x(), origin_.x()), lo(cube.center.y(), origin_.y()),
                  lo(cube.center.z(), origin_.z())},
                 {hi(cube.center.x(), origin_.x()), hi(cube.center.y(), origin_.y()),
                  hi(cube.center.z(), origin_.z())}});
  }

  friend bool operator==(const OccupancyGrid& a, const OccupancyGrid& b) {
    return a.resolution_ == b.resolution_ && a.origin_ == b.origin_ && a.dims_ == b.dims_ &&
           a.states_ == b.states_;
  }

 private:
  void validate_geometry() const {
    if (!(resolution_ > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    if (dims_.x < 0 || dims_.y < 0 || dims_.z < 0) throw std::invalid_argument("negative grid dims");
  }

  double resolution_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  Index3 dims_{0, 0, 0};
  std::vector<Occupancy> states_;
};

inline constexpr std::array<Index3, 6> kFaceNeighbors{
    {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

inline Index3 operator+(const Index3& a, const Index3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }

enum class FrontierConnectivity { face6, full26 };

/// Centroids of occupied voxels inside the cube.
inline std::vector<Vec3> obstacle_points(const OccupancyGrid& grid, const UpdateCube& cube) {
  std::vector<Vec3> out;
  grid.voxel_range(cube).for_each([&](const Index3& i) {
    if (grid.state(i) == Occupancy::occupied) out.push_back(grid.center(i));
  });
  return out;
}

/// Occupied voxels with at least one in-array face neighbour that is not
/// occupied. For any query point lying in a non-occupied voxel of the same
/// box, the nearest occupied centroid is always one of these.
inline std::vector<Vec3> surface_obstacle_points(const OccupancyGrid& grid, const VoxelBox& box) {
  std::vector<Vec3> out;
  grid.clip(box).for_each([&](const Index3& i) {
    if (grid.state(i) != Occupancy::occupied) return;
    for (const Index3& d : kFaceNeighbors) {
      const Index3 n = i + d;
      if (grid.in_bounds(n) && grid.state(n) != Occupancy::occupied) {
        out.push_back(grid.center(i));
        return;
      }
    }
  });
  return out;
}

inline bool is_frontier(const OccupancyGrid& grid, const Index3& i,
                        FrontierConnectivity conn = FrontierConnectivity::face6) {
  if (grid.state(i) != Occupancy::free) return false;
  if (conn == FrontierConnectivity::face6) {
    for (const Index3& d : kFaceNeighbors) {
      if (grid.state(i + d) == Occupancy::unknown) return true;
    }
    return false;
  }
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if ((dx | dy | dz) == 0) continue;
        if (grid.state(i + Index3{dx, dy, dz}) == Occupancy::unknown) return true;
      }
  return false;
}

inline std::vector<Vec3> frontier_points(const OccupancyGrid& grid, const VoxelBox& box,
                                         FrontierConnectivity conn = FrontierConnectivity::face6) {
  std::vector<Vec3> out;
  grid.clip(box).for_each([&](const Index3& i) {
    if (is_frontier(grid, i, conn)) out.push_back(grid.center(i));
  });
  return out;
}

/// Free voxels adjacent to unknown space (array boundary counts as unknown).
inline std::vector<Vec3> frontier_points(const OccupancyGrid& grid, const UpdateCube& cube,
                                         FrontierConnectivity conn = FrontierConnectivity::face6) {
  return frontier_points(grid, grid.voxel_range(cube), conn);
}

/// Visits voxels pierced by the segment a→b one boundary crossing at a time.
/// Stops early when `visit` returns false; returns false in that case.
template <typename Visit>
bool walk_voxels(const OccupancyGrid& grid, const Vec3& a, const Vec3& b, Visit&& visit) {
  Index3 cur = grid.voxel_of(a);
  const Index3 end = grid.voxel_of(b);
  const Vec3 dir = b - a;
  const double res = grid.resolution();
  std::array<int, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  const std::array<int, 3> start_idx{cur.x, cur.y, cur.z};
  for (int ax = 0; ax < 3; ++ax) {
    const double d = dir[ax];
    if (d > 0.0) {
      step[ax] = 1;
      const double boundary = grid.origin()[ax] + (start_idx[ax] + 1) * res;
      t_max[ax] = (boundary - a[ax]) / d;
      t_delta[ax] = res / d;
    } else if (d < 0.0) {
      step[ax] = -1;
      const double boundary = grid.origin()[ax] + start_idx[ax] * res;
      t_max[ax] = (boundary - a[ax]) / d;
      t_delta[ax] = -res / d;
    } else {
      step[ax] = 0;
      t_max[ax] = std::numeric_limits<double>::infinity();
      t_delta[ax] = std::numeric_limits<double>::infinity();
    }
  }
  const int max_steps = std::abs(end.x - cur.x) + std::abs(end.y - cur.y) + std::abs(end.z - cur.z);
  if (!visit(cur)) return false;
  for (int n = 0; n < max_steps && !(cur == end); ++n) {
    int ax = 0;
    if (t_max[1] < t_max[ax]) ax = 1;
    if (t_max[2] < t_max[ax]) ax = 2;
    if (t_max[ax] > 1.0) break;
    (ax == 0 ? cur.x : ax == 1 ? cur.y : cur.z) += step[ax];
    t_max[ax] += t_delta[ax];
    if (!visit(cur)) return false;
  }
  if (!(cur == end)) return visit(end);
  return true;
}

/// True iff every voxel traversed by the segment is free. The walk always
/// starts from the lexicographically smaller endpoint so the result does not
/// depend on argument order.
inline bool raycast_free(const OccupancyGrid& grid, const Vec3& from, const Vec3& to) {
  const bool swap = std::lexicographical_compare(to.data(), to.data() + 3, from.data(), from.data() + 3);
  const Vec3& a = swap ? to : from;
  const Vec3& b = swap ? from : to;
  if (!grid.is_free(grid.voxel_of(a)) || !grid.is_free(grid.voxel_of(b))) return false;
  return walk_voxels(grid, a, b, [&](const Index3& i) { return grid.is_free(i); });
}

/// Coarse voxel = occupied if any child is occupied, else free if any child is
/// free, else unknown.
inline OccupancyGrid downsample(const OccupancyGrid& grid, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return grid;
  const Index3& d = grid.dims();
  const Index3 cd{(d.x + factor - 1) / factor, (d.y + factor - 1) / factor, (d.z + factor - 1) / factor};
  std::vector<Occupancy> coarse(std::size_t(cd.x) * cd.y * cd.z, Occupancy::unknown);
  auto rank = [](Occupancy s) { return static_cast<int>(s); };  // unknown < free < occupied
  grid.full_box().for_each([&](const Index3& i) {
    const std::size_t c = std::size_t(i.x / factor) +
                          std::size_t(cd.x) * (std::size_t(i.y / factor) + std::size_t(cd.y) * std::size_t(i.z / factor));
    const Occupancy s = grid.state(i);
    if (rank(s) > rank(coarse[c])) coarse[c] = s;
  });
  return OccupancyGrid(grid.resolution() * factor, grid.origin(), cd, std::move(coarse));
}

// VOXGRID v1: "VXG1", f64 resolution, 3×f64 origin, 3×u32 dims, then
// (u8 state, u32 count) runs, x-fastest.
inline std::vector<std::uint8_t> save_grid(const OccupancyGrid& grid) {
  ByteWriter w;
  w.magic("VXG1");
  w.f64(grid.resolution());
  for (int a = 0; a < 3; ++a) w.f64(grid.origin()[a]);
  w.u32(std::uint32_t(grid.dims().x));
  w.u32(std::uint32_t(grid.dims().y));
  w.u32(std::uint32_t(grid.dims().z));
  const auto states = grid.states();
  std::size_t n = 0;
  while (n < states.size()) {
    const Occupancy s = states[n];
    std::size_t run = 1;
    while (n + run < states.size() && states[n + run] == s && run < 0xFFFFFFFFu) ++run;
    w.u8(static_cast<std::uint8_t>(s));
    w.u32(std::uint32_t(run));
    n += run;
  }
  return std::move(w).take();
}

inline OccupancyGrid load_grid(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("VXG1");
  if (r.remaining() < 8 * 4 + 4 * 3) {
    throw ParseError(ParseError::Kind::bad_header, "VOXGRID header truncated");
  }
  const double res = r.f64();
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = r.f64();
  const std::uint32_t nx = r.u32(), ny = r.u32(), nz = r.u32();
  if (!(res > 0.0) || !std::isfinite(res) || !origin.allFinite()) {
    throw ParseError(ParseError::Kind::bad_header, "VOXGRID resolution/origin invalid");
  }
  constexpr std::uint64_t kMaxVoxels = std::uint64_t(1) << 34;
  const std::uint64_t total = std::uint64_t(nx) * ny * nz;
  if (nx > 0x7FFFFFFFu || ny > 0x7FFFFFFFu || nz > 0x7FFFFFFFu || total > kMaxVoxels) {
    throw ParseError(ParseError::Kind::bad_header, "VOXGRID dims too large");
  }
  std::vector<Occupancy> states;
  states.reserve(std::size_t(std::min<std::uint64_t>(total, r.remaining() * 64 + 1)));
  int prev_state = -1;
  std::uint32_t prev_count = 0;
  while (states.size() < total) {
    const std::uint8_t s = r.u8();
    const std::uint32_t count = r.u32();
    if (s > 2) throw ParseError(ParseError::Kind::bad_payload, "VOXGRID invalid state byte");
    if (count == 0) throw ParseError(ParseError::Kind::bad_payload, "VOXGRID zero-length run");
    // Runs are maximal, so a valid file re-encodes to the same bytes.
    if (s == prev_state && prev_count != 0xFFFFFFFFu) {
      throw ParseError(ParseError::Kind::bad_payload, "VOXGRID non-canonical run split");
    }
    prev_state = s;
    prev_count = count;
    if (states.size() + count > total) {
      throw ParseError(ParseError::Kind::bad_payload, "VOXGRID runs exceed voxel count");
    }
    states.insert(states.end(), count, static_cast<Occupancy>(s));
  }
  r.expect_end();
  return OccupancyGrid(res, origin, Index3{int(nx), int(ny), int(nz)}, std::move(states));
}

}  // namespace spheremap
