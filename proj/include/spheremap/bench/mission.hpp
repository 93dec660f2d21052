#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "spheremap/bench/world_gen.hpp"
#include "spheremap/sphere_map.hpp"
#include "spheremap/voxel_grid.hpp"

namespace spheremap::bench {

struct MissionTrace {
  std::vector<Vec3> waypoints;
};

/// Depth-first tour over the world's landmark links, walking back along each
/// link when backtracking, sampled every `step` metres.
inline MissionTrace make_tour(const World& world, double step) {
  if (!(step > 0.0)) throw ConfigError("tour step must be > 0");
  MissionTrace trace;
  if (world.landmarks.empty()) return trace;
  std::vector<std::vector<int>> adj(world.landmarks.size());
  for (const auto& [a, b] : world.links) adj[a].push_back(b), adj[b].push_back(a);
  for (auto& list : adj) std::sort(list.begin(), list.end());

  std::vector<int> order{0};
  std::vector<char> seen(world.landmarks.size(), 0);
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  seen[0] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < adj[node].size()) {
      const int m = adj[node][next++];
      if (seen[m]) continue;
      seen[m] = 1;
      order.push_back(m);
      stack.push_back({m, 0});
    } else {
      stack.pop_back();
      if (!stack.empty()) order.push_back(stack.back().first);
    }
  }
  trace.waypoints.push_back(world.landmarks[order[0]]);
  for (std::size_t k = 1; k < order.size(); ++k) {
    const Vec3 a = world.landmarks[order[k - 1]], b = world.landmarks[order[k]];
    const int n = std::max(1, int(std::ceil((b - a).norm() / step)));
    for (int i = 1; i <= n; ++i) trace.waypoints.push_back(a + (b - a) * (double(i) / n));
  }
  return trace;
}

/// Serpentine lattice of cube centres covering the grid at mid height, with
/// neighbouring cubes overlapping by a quarter of their side.
inline MissionTrace sweep_positions(const OccupancyGrid& grid, double cube_side, int passes = 1) {
  MissionTrace trace;
  const Vec3 lo = grid.origin(), ext = grid.extent();
  const double pitch = 0.75 * cube_side;
  const int nx = std::max(1, int(std::ceil(ext.x() / pitch))), ny = std::max(1, int(std::ceil(ext.y() / pitch)));
  for (int p = 0; p < passes; ++p) {
    for (int y = 0; y < ny; ++y) {
      for (int k = 0; k < nx; ++k) {
        const int x = (y % 2 == 0) ? k : nx - 1 - k;
        trace.waypoints.emplace_back(lo.x() + std::min(ext.x(), (x + 0.5) * pitch),
                                     lo.y() + std::min(ext.y(), (y + 0.5) * pitch), lo.z() + 0.5 * ext.z());
      }
    }
  }
  return trace;
}

struct RevealOptions {
  double range = 20.0;
  double step_deg = 0.5;
  double elevation_limit_deg = 45.0;
};

/// Raycast fan from `origin`: voxels along each ray become known as in
/// `truth` until the first occupied voxel, which is revealed too. Returns the
/// number of voxels whose state changed.
inline std::size_t reveal_fan(const OccupancyGrid& truth, OccupancyGrid& known, const Vec3& origin,
                              const RevealOptions& opt = {}) {
  std::size_t changed = 0;
  const double step = opt.step_deg * std::numbers::pi / 180.0;
  const int n_az = int(std::lround(360.0 / opt.step_deg));
  const int n_el = int(std::floor(opt.elevation_limit_deg / opt.step_deg));
  for (int e = -n_el; e <= n_el; ++e) {
    const double el = e * step, ce = std::cos(el), se = std::sin(el);
    for (int a = 0; a < n_az; ++a) {
      const double az = a * step;
      const Vec3 end = origin + opt.range * Vec3(ce * std::cos(az), ce * std::sin(az), se);
      walk_voxels(truth, origin, end, [&](const Index3& i) {
        if (!truth.in_bounds(i)) return false;
        const Occupancy s = truth.state(i);
        const std::size_t n = truth.linear(i);
        if (known.states()[n] != s) {
          known.set(i, s);
          ++changed;
        }
        return s == Occupancy::free;
      });
    }
  }
  return changed;
}

enum class RevealMode { raycast, full };

struct MissionOptions {
  RevealMode reveal = RevealMode::raycast;
  RevealOptions sensor;
  std::size_t checkpoint_every = 0;  ///< 0 = only the final state
  /// Called with (iteration index, map, known grid) at checkpoints and at the end.
  std::function<void(std::size_t, const SphereMap&, const OccupancyGrid&)> on_checkpoint;
};

struct IterationRecord {
  std::size_t index = 0;
  Vec3 position = Vec3::Zero();
  double reveal_seconds = 0.0;
  IterationReport report;
};

struct MissionResult {
  SphereMap map;
  OccupancyGrid known;
  std::vector<IterationRecord> iterations;
};

/// Drives one update iteration per trace waypoint. The known grid starts all
/// unknown (raycast reveal) or equal to the truth (full reveal).
inline MissionResult run_mission(const OccupancyGrid& truth, const MissionTrace& trace, const BuildParams& params,
                                 const PlannerParams& cost = {}, const MissionOptions& options = {}) {
  MissionResult out{SphereMap(params, cost),
                    options.reveal == RevealMode::full
                        ? truth
                        : OccupancyGrid(truth.resolution(), truth.origin(), truth.dims(), Occupancy::unknown),
                    {}};
  std::vector<Vec3> positions = trace.waypoints;
  if (positions.empty()) positions.push_back(truth.origin() + 0.5 * truth.extent());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    IterationRecord rec;
    rec.index = k;
    rec.position = positions[k];
    if (options.reveal == RevealMode::raycast) {
      const auto t0 = std::chrono::steady_clock::now();
      reveal_fan(truth, out.known, positions[k], options.sensor);
      rec.reveal_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    rec.report = out.map.update_iteration(out.known, positions[k]);
    out.iterations.push_back(rec);
    const bool last = k + 1 == positions.size();
    if (options.on_checkpoint && (last || (options.checkpoint_every > 0 && (k + 1) % options.checkpoint_every == 0))) {
      options.on_checkpoint(k, out.map, out.known);
    }
  }
  return out;
}

}  // namespace spheremap::bench
