#pragma once

#include <algorithm>

#include "spheremap/params.hpp"
#include "spheremap/sphere_geometry.hpp"

namespace spheremap {

/// Grid clearances are lattice distances, so exact ties with r_min are common
/// and rounding can tip them either way. Grid planners and the brute-force
/// path check demand this much more than r_min.
inline constexpr double kClearanceSlack = 1e-9;

struct TransitionCost {
  double length = 0.0;
  double risk = 0.0;

  double total() const { return length + risk; }
};

/// Discretised length and risk increments between two points with known
/// obstacle clearances r1, r2.
inline TransitionCost transition_cost(const Vec3& p1, double r1, const Vec3& p2, double r2,
                                      const PlannerParams& params) {
  const double len = (p1 - p2).norm();
  const double gap = std::max(0.0, params.d_max - 0.5 * (r1 + r2));
  return {len, params.xi * gap * gap * len};
}

/// The straight segment p1→p2 keeps clearance above r_min when the two
/// clearance spheres intersect in a circle wider than r_min.
inline bool edge_traversable(const Vec3& p1, double r1, const Vec3& p2, double r2, double r_min) {
  return intersection_radius(p1, r1, p2, r2) > r_min;
}

}  // namespace spheremap
