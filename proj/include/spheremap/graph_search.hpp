#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory_resource>
#include <optional>
#include <queue>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spheremap/node_index.hpp"

namespace spheremap {

struct SearchPath {
  std::vector<NodeId> nodes;
  double cost = 0.0;
};

struct SearchSource {
  NodeId id;
  double cost;
};

namespace detail {

inline constexpr NodeId kNoParent = std::numeric_limits<NodeId>::max();

struct SearchLabel {
  double g;
  NodeId parent;
};

struct QueueEntry {
  double f;
  double h;
  NodeId id;
  double g;
};

struct QueueOrder {
  // Min-heap on (f, h, id).
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.id > b.id;
  }
};

// Search state lives in a monotonic arena: labels are never erased, and the
// per-node allocations of a node-based hash map dominate small searches.
using LabelMap = std::pmr::unordered_map<NodeId, SearchLabel>;
using OpenQueue = std::priority_queue<QueueEntry, std::pmr::vector<QueueEntry>, QueueOrder>;

inline std::vector<NodeId> unwind(const LabelMap& labels, NodeId last) {
  std::vector<NodeId> out;
  for (NodeId n = last; n != kNoParent; n = labels.at(n).parent) out.push_back(n);
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// A* over sparse integer node ids. `neighbors(id, relax)` must call
/// relax(neighbor, edge_cost) for each admissible edge; `heuristic(id)` must
/// not overestimate. Ties break on lower (f, h, id).
template <typename Neighbors, typename Heuristic>
std::optional<SearchPath> astar_search(std::span<const SearchSource> sources, NodeId target,
                                       Neighbors&& neighbors, Heuristic&& heuristic) {
  using namespace detail;
  std::array<std::byte, 32 * 1024> buffer;
  std::pmr::monotonic_buffer_resource arena(buffer.data(), buffer.size());
  LabelMap labels(&arena);
  OpenQueue open(QueueOrder{}, std::pmr::vector<QueueEntry>(&arena));
  for (const SearchSource& s : sources) {
    auto [it, fresh] = labels.try_emplace(s.id, SearchLabel{s.cost, kNoParent});
    if (!fresh && s.cost >= it->second.g) continue;
    it->second = {s.cost, kNoParent};
    const double h = heuristic(s.id);
    open.push({s.cost + h, h, s.id, s.cost});
  }
  while (!open.empty()) {
    const QueueEntry top = open.top();
    open.pop();
    if (top.g > labels.at(top.id).g) continue;
    if (top.id == target) return SearchPath{unwind(labels, target), top.g};
    neighbors(top.id, [&](NodeId next, double edge_cost) {
      const double g = top.g + edge_cost;
      auto [it, fresh] = labels.try_emplace(next, SearchLabel{g, top.id});
      if (!fresh) {
        if (g >= it->second.g) return;
        it->second = {g, top.id};
      }
      const double h = heuristic(next);
      open.push({g + h, h, next, g});
    });
  }
  return std::nullopt;
}

/// Dijkstra from the sources until every target is settled (or the reachable
/// set is exhausted). Returns settled targets only.
template <typename Neighbors>
std::unordered_map<NodeId, SearchPath> shortest_paths_to(std::span<const SearchSource> sources,
                                                         std::span<const NodeId> targets,
                                                         Neighbors&& neighbors) {
  using namespace detail;
  std::unordered_map<NodeId, SearchPath> out;
  std::unordered_map<NodeId, bool> wanted;
  for (NodeId t : targets) wanted.emplace(t, true);
  std::size_t remaining = wanted.size();
  std::array<std::byte, 32 * 1024> buffer;
  std::pmr::monotonic_buffer_resource arena(buffer.data(), buffer.size());
  LabelMap labels(&arena);
  OpenQueue open(QueueOrder{}, std::pmr::vector<QueueEntry>(&arena));
  for (const SearchSource& s : sources) {
    auto [it, fresh] = labels.try_emplace(s.id, SearchLabel{s.cost, kNoParent});
    if (!fresh && s.cost >= it->second.g) continue;
    it->second = {s.cost, kNoParent};
    open.push({s.cost, 0.0, s.id, s.cost});
  }
  while (!open.empty() && remaining > 0) {
    const QueueEntry top = open.top();
    open.pop();
    if (top.g > labels.at(top.id).g) continue;
    if (auto w = wanted.find(top.id); w != wanted.end() && w->second) {
      w->second = false;
      --remaining;
      out.emplace(top.id, SearchPath{unwind(labels, top.id), top.g});
    }
    neighbors(top.id, [&](NodeId next, double edge_cost) {
      const double g = top.g + edge_cost;
      auto [it, fresh] = labels.try_emplace(next, SearchLabel{g, top.id});
      if (!fresh) {
        if (g >= it->second.g) return;
        it->second = {g, top.id};
      }
      open.push({g, 0.0, next, g});
    });
  }
  return out;
}

/// Best-first search over dense indices 0..n-1. With a zero heuristic this
/// is Dijkstra. `done(i)` is called as each node is settled and stops the
/// search when it returns true. Unreached nodes keep g = +inf. A node with an
/// infinite heuristic cannot reach the target and is labelled but not queued.
struct DenseSearch {
  std::vector<double> g;
  std::vector<std::uint32_t> parent;

  /// Indices from the source to `last`.
  std::vector<std::uint32_t> path_to(std::uint32_t last) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = last; i != detail::kNoParent; i = parent[i]) out.push_back(i);
    std::reverse(out.begin(), out.end());
    return out;
  }
};

template <typename Neighbors, typename Heuristic, typename Done>
DenseSearch dense_search(std::size_t n, std::span<const std::pair<std::uint32_t, double>> sources,
                         Neighbors&& neighbors, Heuristic&& heuristic, Done&& done) {
  using namespace detail;
  DenseSearch out{std::vector<double>(n, std::numeric_limits<double>::infinity()),
                  std::vector<std::uint32_t>(n, kNoParent)};
  std::vector<char> closed(n, 0);
  std::vector<QueueEntry> storage;
  storage.reserve(2 * n);
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueOrder> open(QueueOrder{}, std::move(storage));
  for (const auto& [i, cost] : sources) {
    if (!(cost < out.g[i])) continue;
    out.g[i] = cost;
    const double h = heuristic(i);
    open.push({cost + h, h, i, cost});
  }
  while (!open.empty()) {
    const QueueEntry top = open.top();
    open.pop();
    if (closed[top.id] || top.g > out.g[top.id]) continue;
    closed[top.id] = 1;
    if (done(std::uint32_t(top.id))) break;
    neighbors(std::uint32_t(top.id), [&](std::uint32_t next, double edge_cost) {
      const double g = top.g + edge_cost;
      if (!(g < out.g[next])) return;
      out.g[next] = g;
      out.parent[next] = top.id;
      const double h = heuristic(next);
      if (std::isfinite(h)) open.push({g + h, h, next, g});
    });
  }
  return out;
}

}  // namespace spheremap
