#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spheremap/voxel_grid.hpp"

namespace spheremap {

using NodeId = std::uint32_t;

class NotFoundError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct Neighbor {
  NodeId id;
  double distance;
};

/// Dynamic point index over sphere centres: a uniform spatial hash with exact
/// post-filtering. Query results are sorted by (distance, id).
class NodeIndex {
 public:
  explicit NodeIndex(double cell_size = 4.0) : cell_(cell_size) {
    if (!(cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
  }

  double cell_size() const noexcept { return cell_; }
  std::size_t size() const noexcept { return positions_.size(); }
  bool contains(NodeId id) const { return positions_.count(id) != 0; }

  /// `radius` is an optional payload carried alongside the position.
  void insert(NodeId id, const Vec3& p, double radius = 0.0) {
    if (contains(id)) remove(id);
    positions_.emplace(id, p);
    cells_[key(cell_of(p))].push_back({id, p, radius});
  }

  void set_radius(NodeId id, double radius) {
    auto it = positions_.find(id);
    if (it == positions_.end()) throw NotFoundError("node id not in index");
    for (Entry& e : cells_.at(key(cell_of(it->second)))) {
      if (e.id == id) e.radius = radius;
    }
  }

  void remove(NodeId id) {
    auto it = positions_.find(id);
    if (it == positions_.end()) throw NotFoundError("node id not in index");
    auto cit = cells_.find(key(cell_of(it->second)));
    auto& bucket = cit->second;
    bucket.erase(std::find_if(bucket.begin(), bucket.end(), [id](const Entry& e) { return e.id == id; }));
    if (bucket.empty()) cells_.erase(cit);
    positions_.erase(it);
  }

  /// Calls fn(id, position, radius) for every entry within distance r of q;
  /// unordered.
  template <typename Fn>
  void for_each_within(const Vec3& q, double r, Fn&& fn) const {
    find_within(q, r, [&](NodeId id, const Vec3& p, double radius) {
      fn(id, p, radius);
      return false;
    });
  }

  /// First entry within distance r of q for which pred(id, position, radius)
  /// holds. Visiting order is deterministic for a given insertion history.
  template <typename Pred>
  std::optional<NodeId> find_within(const Vec3& q, double r, Pred&& pred) const {
    const double r2 = r * r;
    const CellKey lo = cell_of(q - Vec3::Constant(r));
    const CellKey hi = cell_of(q + Vec3::Constant(r));
    for (std::int64_t z = lo.z; z <= hi.z; ++z)
      for (std::int64_t y = lo.y; y <= hi.y; ++y)
        for (std::int64_t x = lo.x; x <= hi.x; ++x) {
          auto it = cells_.find(key({x, y, z}));
          if (it == cells_.end()) continue;
          for (const Entry& e : it->second) {
            if ((e.p - q).squaredNorm() <= r2 && pred(e.id, e.p, e.radius)) return e.id;
          }
        }
    return std::nullopt;
  }

  /// Entries whose position lies in the axis-aligned box [lo, hi].
  template <typename Fn>
  void for_each_in_box(const Vec3& lo_p, const Vec3& hi_p, Fn&& fn) const {
    const CellKey lo = cell_of(lo_p);
    const CellKey hi = cell_of(hi_p);
    for (std::int64_t z = lo.z; z <= hi.z; ++z)
      for (std::int64_t y = lo.y; y <= hi.y; ++y)
        for (std::int64_t x = lo.x; x <= hi.x; ++x) {
          auto it = cells_.find(key({x, y, z}));
          if (it == cells_.end()) continue;
          for (const Entry& e : it->second) {
            if ((e.p.array() >= lo_p.array()).all() && (e.p.array() <= hi_p.array()).all()) fn(e.id, e.p, e.radius);
          }
        }
  }

  std::vector<Neighbor> within_radius(const Vec3& q, double r) const {
    std::vector<Neighbor> out;
    for_each_within(q, r, [&](NodeId id, const Vec3& p, double) { out.push_back({id, (p - q).norm()}); });
    sort_neighbors(out);
    return out;
  }

  std::vector<Neighbor> nearest_k(const Vec3& q, std::size_t k) const {
    std::vector<Neighbor> out;
    if (k == 0 || positions_.empty()) return out;
    if (k >= positions_.size()) {
      for (const auto& [id, p] : positions_) out.push_back({id, (p - q).norm()});
      sort_neighbors(out);
      return out;
    }
    // Grow the search radius until the k-th hit is provably final.
    double r = cell_;
    for (;;) {
      out = within_radius(q, r);
      if (out.size() >= k) {
        out.resize(k);
        return out;
      }
      r *= 2.0;
    }
  }

  std::vector<std::pair<NodeId, Vec3>> entries() const {
    std::vector<std::pair<NodeId, Vec3>> out(positions_.begin(), positions_.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

 private:
  struct Entry {
    NodeId id;
    Vec3 p;
    double radius;
  };

  struct CellKey {
    std::int64_t x, y, z;
  };

  static void sort_neighbors(std::vector<Neighbor>& v) {
    std::sort(v.begin(), v.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    });
  }

  CellKey cell_of(const Vec3& p) const {
    return {std::int64_t(std::floor(p.x() / cell_)), std::int64_t(std::floor(p.y() / cell_)),
            std::int64_t(std::floor(p.z() / cell_))};
  }

  static std::uint64_t key(const CellKey& c) {
    constexpr std::int64_t kBias = 1 << 20;
    auto part = [](std::int64_t v) { return std::uint64_t(v + kBias) & 0x1FFFFFu; };
    return part(c.x) | (part(c.y) << 21) | (part(c.z) << 42);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<Entry>> cells_;
  std::unordered_map<NodeId, Vec3> positions_;
};

}  // namespace spheremap
