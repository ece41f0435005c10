#ifndef HAWKROVER_GEOMETRY_HPP
#define HAWKROVER_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace hawkrover {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(b - a); }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline double bearing(Vec2 from, Vec2 to) { return std::atan2(to.y - from.y, to.x - from.x); }

/// Wraps to [0, 2pi).
inline double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Signed smallest difference a - b, in (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::remainder(a - b, kTwoPi);
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

struct Pose2 {
  Vec2 position;
  double heading = 0.0;  // radians, world frame, counter-clockwise from +x
};

/// Distance along the ray origin + t*dir (|dir| = 1) to segment [a, b], if hit at t > 0.
inline std::optional<double> ray_segment_hit(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double denom = cross(dir, e);
  if (denom == 0.0) return std::nullopt;
  const Vec2 w = a - origin;
  const double t = cross(w, e) / denom;
  const double u = cross(w, dir) / denom;
  if (t <= 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

/// True if the closed segments [p, q] and [a, b] share a point strictly inside both
/// (touching at an endpoint does not count).
inline bool segments_cross(Vec2 p, Vec2 q, Vec2 a, Vec2 b, double eps = 1e-12) {
  const Vec2 r = q - p;
  const Vec2 s = b - a;
  const double denom = cross(r, s);
  if (std::abs(denom) < 1e-18) return false;  // parallel or collinear: grazing, not crossing
  const Vec2 w = a - p;
  const double t = cross(w, s) / denom;
  const double u = cross(w, r) / denom;
  return t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps;
}

/// Convex polygon in counter-clockwise order.
struct ConvexPolygon {
  std::vector<Vec2> vertices;

  std::size_t size() const { return vertices.size(); }
  Vec2 edge_start(std::size_t i) const { return vertices[i]; }
  Vec2 edge_end(std::size_t i) const { return vertices[(i + 1) % vertices.size()]; }

  /// Strict interior test.
  bool contains(Vec2 p) const {
    for (std::size_t i = 0; i < size(); ++i) {
      if (cross(edge_end(i) - edge_start(i), p - edge_start(i)) <= 0.0) return false;
    }
    return true;
  }

  /// Length fraction of segment [p, q] lying inside the polygon (Cyrus-Beck clipping).
  double clipped_fraction(Vec2 p, Vec2 q) const {
    double t_in = 0.0;
    double t_out = 1.0;
    const Vec2 d = q - p;
    for (std::size_t i = 0; i < size(); ++i) {
      const Vec2 a = edge_start(i);
      const Vec2 e = edge_end(i) - a;
      // inside: cross(e, x - a) > 0
      const double num = cross(e, p - a);
      const double den = cross(e, d);
      if (den == 0.0) {
        if (num <= 0.0) return 0.0;
        continue;
      }
      const double t = -num / den;
      if (den > 0.0) {
        t_in = std::max(t_in, t);
      } else {
        t_out = std::min(t_out, t);
      }
      if (t_in >= t_out) return 0.0;
    }
    return t_out - t_in;
  }
};

/// Orders vertices counter-clockwise; returns false if not strictly convex.
inline bool make_convex_ccw(std::vector<Vec2>& pts) {
  if (pts.size() < 3) return false;
  double area2 = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) area2 += cross(pts[i], pts[(i + 1) % pts.size()]);
  if (area2 == 0.0) return false;
  if (area2 < 0.0) std::reverse(pts.begin(), pts.end());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 a = pts[i];
    const Vec2 b = pts[(i + 1) % pts.size()];
    const Vec2 c = pts[(i + 2) % pts.size()];
    if (cross(b - a, c - b) <= 0.0) return false;
  }
  return true;
}

/// Mirror image of p across the infinite line through a and b.
inline Vec2 reflect_across(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double t = dot(p - a, e) / dot(e, e);
  const Vec2 foot = a + t * e;
  return 2.0 * foot - p;
}

}  // namespace hawkrover

#endif  // HAWKROVER_GEOMETRY_HPP
