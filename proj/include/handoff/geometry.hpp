#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <limits>

namespace handoff {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  double norm2() const { return x * x + y * y; }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  Vec2 perp() const { return {-y, x}; }  // 90° CCW
  bool operator==(const Vec2&) const = default;
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Oriented rectangle: center, heading of the +x (long) axis, half extents.
struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  Vec2 half_extent{1.0, 1.0};  // (along heading, across heading)

  std::array<Vec2, 4> corners() const {
    const Vec2 ax = Vec2{std::cos(heading), std::sin(heading)};
    const Vec2 ay = ax.perp();
    const Vec2 ex = ax * half_extent.x;
    const Vec2 ey = ay * half_extent.y;
    return {center + ex + ey, center - ex + ey, center - ex - ey, center + ex - ey};
  }

  /// World point -> rectangle-local frame.
  Vec2 to_local(Vec2 p) const {
    const Vec2 d = p - center;
    const double c = std::cos(heading), s = std::sin(heading);
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }

  bool contains(Vec2 p) const {
    const Vec2 l = to_local(p);
    return std::abs(l.x) <= half_extent.x && std::abs(l.y) <= half_extent.y;
  }

  double area() const { return 4.0 * half_extent.x * half_extent.y; }
};

namespace detail {

inline std::pair<double, double> project_onto(const std::array<Vec2, 4>& pts, Vec2 axis) {
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  for (const Vec2& p : pts) {
    const double d = p.dot(axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

}  // namespace detail

/// Separating-axis overlap test for two oriented rectangles. Touching edges
/// count as overlap.
inline bool rects_overlap(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)},
  };
  for (const Vec2& axis : axes) {
    const auto [alo, ahi] = detail::project_onto(ca, axis);
    const auto [blo, bhi] = detail::project_onto(cb, axis);
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

/// Minimum distance between a point and a segment.
inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.norm2();
  if (len2 <= 0.0) return distance(p, a);
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

inline double segment_segment_distance(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
  // Proper intersection -> zero distance.
  const auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = (q - p).cross(r - p);
    return (v > 0.0) - (v < 0.0);
  };
  const int o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
  const int o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
  if (o1 != o2 && o3 != o4) return 0.0;
  double d = point_segment_distance(b0, a0, a1);
  d = std::min(d, point_segment_distance(b1, a0, a1));
  d = std::min(d, point_segment_distance(a0, b0, b1));
  d = std::min(d, point_segment_distance(a1, b0, b1));
  return d;
}

/// Minimum boundary distance between two oriented rectangles; 0 when they
/// intersect (consistent with rects_overlap).
inline double rect_distance(const OrientedRect& a, const OrientedRect& b) {
  if (rects_overlap(a, b)) return 0.0;
  const auto ca = a.corners();
  const auto cb = b.corners();
  double best = std::numeric_limits<double>::max();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, segment_segment_distance(ca[i], ca[(i + 1) % 4],
                                                     cb[j], cb[(j + 1) % 4]));
    }
  }
  return best;
}

/// Intersection point of segments [a0,a1] and [b0,b1], if one exists.
inline bool segment_intersection(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1, Vec2* out) {
  const Vec2 r = a1 - a0;
  const Vec2 s = b1 - b0;
  const double denom = r.cross(s);
  if (std::abs(denom) < 1e-12) return false;
  const double t = (b0 - a0).cross(s) / denom;
  const double u = (b0 - a0).cross(r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return false;
  if (out) *out = a0 + r * t;
  return true;
}

}  // namespace handoff
