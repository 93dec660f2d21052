#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <tuple>
#include <utility>

#include "spheremap/voxel_grid.hpp"

namespace spheremap {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Radius of the circle where the two sphere surfaces meet. Disjoint or
/// tangent spheres give 0; a sphere inside the other gives the smaller radius.
inline double intersection_radius(Vec3 pa, double ra, Vec3 pb, double rb) {
  // Canonical argument order keeps the result bit-identical under swapping.
  if (rb > ra || (rb == ra && std::tuple(pb.x(), pb.y(), pb.z()) < std::tuple(pa.x(), pa.y(), pa.z()))) {
    std::swap(pa, pb);
    std::swap(ra, rb);
  }
  const double d = (pa - pb).norm();
  if (d >= ra + rb) return 0.0;
  if (d <= std::abs(ra - rb)) return std::min(ra, rb);
  const double t = d * d - rb * rb + ra * ra;
  const double v = 4.0 * d * d * ra * ra - t * t;
  return v <= 0.0 ? 0.0 : std::sqrt(v) / (2.0 * d);
}

inline double intersection_radius(const Sphere& a, const Sphere& b) {
  return intersection_radius(a.center, a.radius, b.center, b.radius);
}

inline double sphere_volume(double r) { return 4.0 / 3.0 * std::numbers::pi * r * r * r; }

/// Volume of the intersection of two balls with radii R, r at centre distance d.
inline double lens_volume(double R, double r, double d) {
  if (d >= R + r) return 0.0;
  if (d <= std::abs(R - r)) return sphere_volume(std::min(R, r));
  const double s = R + r - d;
  return std::numbers::pi * s * s *
         (d * d + 2.0 * d * r - 3.0 * r * r + 2.0 * d * R + 6.0 * r * R - 3.0 * R * R) / (12.0 * d);
}

/// Fraction of ball `inner` covered by ball `outer`.
inline double coverage_fraction(const Sphere& inner, const Sphere& outer) {
  const double d = (inner.center - outer.center).norm();
  if (d + inner.radius <= outer.radius) return 1.0;
  return lens_volume(outer.radius, inner.radius, d) / sphere_volume(inner.radius);
}

/// Smallest sphere enclosing both spheres.
inline Sphere enclose(const Sphere& a, const Sphere& b) {
  const Vec3 delta = b.center - a.center;
  const double d = delta.norm();
  if (d + b.radius <= a.radius) return a;
  if (d + a.radius <= b.radius) return b;
  const double r = 0.5 * (d + a.radius + b.radius);
  return {a.center + (r - a.radius) / d * delta, r};
}

/// Ritter-style bound over spheres, seeded at the centroid of the centres.
/// Order-dependent; callers pass members in a canonical order.
inline Sphere bounding_sphere(std::span<const Sphere> spheres) {
  if (spheres.empty()) return {};
  Vec3 c = Vec3::Zero();
  for (const Sphere& s : spheres) c += s.center;
  c /= double(spheres.size());
  Sphere bound{c, 0.0};
  for (const Sphere& s : spheres) bound = enclose(bound, s);
  return bound;
}

}  // namespace spheremap
