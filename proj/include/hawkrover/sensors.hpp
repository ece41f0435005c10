#ifndef HAWKROVER_SENSORS_HPP
#define HAWKROVER_SENSORS_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hawkrover/error.hpp"
#include "hawkrover/geometry.hpp"
#include "hawkrover/scene.hpp"

namespace hawkrover {

/// Constant-speed piecewise-linear path. The vehicle rests at the first waypoint
/// for `start_delay` seconds before moving.
struct Trajectory {
  std::vector<Vec2> waypoints;
  double speed = 1.0;  // m/s
  bool loop = false;
  double start_delay = 0.0;  // s

  void validate() const {
    require(waypoints.size() >= 2, Errc::invalid_argument, "trajectory needs at least 2 waypoints");
    require(speed > 0.0, Errc::invalid_argument, "trajectory speed must be positive");
    require(start_delay >= 0.0, Errc::invalid_argument, "negative start delay");
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      require(!(waypoints[i] == waypoints[i - 1]), Errc::invalid_argument, "consecutive waypoints coincide");
    }
    if (loop) require(!(waypoints.front() == waypoints.back()), Errc::invalid_argument,
                      "loop trajectories close implicitly; do not repeat the first waypoint");
  }

  std::size_t segment_count() const { return loop ? waypoints.size() : waypoints.size() - 1; }
  Vec2 segment_start(std::size_t i) const { return waypoints[i]; }
  Vec2 segment_end(std::size_t i) const { return waypoints[(i + 1) % waypoints.size()]; }

  double length() const {
    double total = 0.0;
    for (std::size_t i = 0; i < segment_count(); ++i) total += distance(segment_start(i), segment_end(i));
    return total;
  }

  /// Time at which a non-loop trajectory reaches its last waypoint.
  double end_time() const { return start_delay + length() / speed; }
};

namespace detail {

struct TrackPoint {
  Vec2 position;
  std::size_t segment = 0;
  bool moving = false;
};

inline TrackPoint locate(const Trajectory& traj, double t) {
  if (t < traj.start_delay) return {traj.waypoints.front(), 0, false};
  double s = (t - traj.start_delay) * traj.speed;
  const double total = traj.length();
  if (traj.loop) {
    s = std::fmod(s, total);
  } else if (s >= total) {
    return {traj.waypoints.back(), traj.segment_count() - 1, false};
  }
  for (std::size_t i = 0; i < traj.segment_count(); ++i) {
    const double len = distance(traj.segment_start(i), traj.segment_end(i));
    if (s < len || i + 1 == traj.segment_count()) {
      const Vec2 a = traj.segment_start(i);
      const Vec2 dir = (1.0 / len) * (traj.segment_end(i) - a);
      return {a + std::min(s, len) * dir, i, true};
    }
    s -= len;
  }
  return {traj.waypoints.back(), traj.segment_count() - 1, false};
}

inline double segment_heading(const Trajectory& traj, std::size_t i) {
  return wrap_two_pi(bearing(traj.segment_start(i), traj.segment_end(i)));
}

}  // namespace detail

inline Pose2 pose_at(const Trajectory& traj, double t) {
  require(t >= 0.0, Errc::out_of_range, "negative trajectory time");
  if (!traj.loop) require(t <= traj.end_time(), Errc::out_of_range, "time past the end of the trajectory");
  const auto p = detail::locate(traj, t);
  return {p.position, detail::segment_heading(traj, p.segment)};
}

/// World-frame velocity, defined for any t (zero before the start and after the end).
inline Vec2 velocity_at(const Trajectory& traj, double t) {
  if (t < 0.0) return {};
  const auto p = detail::locate(traj, t);
  if (!p.moving) return {};
  return traj.speed * unit(detail::segment_heading(traj, p.segment));
}

struct LidarScan {
  std::uint64_t timestamp = 0;
  double max_range = 0.0;
  std::vector<double> ranges;  // ray k at heading + 2*pi*k/n

  /// Planar points in the sensor frame (z = 0).
  std::vector<std::array<double, 3>> to_points() const {
    std::vector<std::array<double, 3>> pts(ranges.size());
    const double n = static_cast<double>(ranges.size());
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const double a = kTwoPi * static_cast<double>(k) / n;
      pts[k] = {ranges[k] * std::cos(a), ranges[k] * std::sin(a), 0.0};
    }
    return pts;
  }
};

/// Depth image (metres) in row-major order; column 0 looks fov/2 to the left of the heading.
struct CameraFrame {
  std::uint64_t timestamp = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

struct ImuSample {
  std::uint64_t timestamp = 0;
  std::array<double, 3> acceleration{};  // body frame, m/s^2
  std::array<double, 3> magnetic{};      // unit heading vector, world frame
  std::array<double, 3> orientation{};   // roll, pitch, yaw (only yaw is nonzero)
};

struct PositionSample {
  std::uint64_t timestamp = 0;
  Vec2 position;
};

/// Per-sensor clock: constant offset plus truncated Gaussian jitter.
struct ClockModel {
  std::int64_t offset_ns = 0;
  double jitter_std_ns = 0.0;
  std::uint64_t seed = 0;

  static constexpr std::int64_t kMaxOffsetNs = 1'000'000;  // NTP sync bound

  void validate() const {
    require(offset_ns >= -kMaxOffsetNs && offset_ns <= kMaxOffsetNs, Errc::invalid_argument,
            "clock offset exceeds the 1 ms sync bound");
    require(jitter_std_ns >= 0.0, Errc::invalid_argument, "negative jitter");
  }

  /// Upper bound on |stamped - true|.
  double max_error_ns() const { return static_cast<double>(std::abs(offset_ns)) + 6.0 * jitter_std_ns; }
};

/// Range to the nearest wall or blocker edge along a world-frame ray, or max_range.
inline double cast_ray(const Scene& scene, Vec2 origin, double angle, double max_range) {
  const Vec2 dir = unit(angle);
  double best = max_range;
  for (const auto& w : scene.walls) {
    if (auto t = ray_segment_hit(origin, dir, w.a, w.b); t && *t < best) best = *t;
  }
  for (const auto& b : scene.blockers) {
    for (std::size_t i = 0; i < b.shape.size(); ++i) {
      if (auto t = ray_segment_hit(origin, dir, b.shape.edge_start(i), b.shape.edge_end(i)); t && *t < best) best = *t;
    }
  }
  return best;
}

inline double lidar_ray_angle(const Pose2& pose, std::size_t k, std::size_t n_rays) {
  return pose.heading + kTwoPi * static_cast<double>(k) / static_cast<double>(n_rays);
}

inline LidarScan render_lidar(const Scene& scene, const Pose2& pose, std::size_t n_rays = 1600, double max_range = 12.0) {
  require(n_rays > 0 && max_range > 0.0, Errc::invalid_argument, "bad LiDAR parameters");
  LidarScan scan;
  scan.max_range = max_range;
  scan.ranges.resize(n_rays);
  for (std::size_t k = 0; k < n_rays; ++k) {
    scan.ranges[k] = cast_ray(scene, pose.position, lidar_ray_angle(pose, k, n_rays), max_range);
  }
  return scan;
}

inline double camera_column_angle(const Pose2& pose, std::size_t col, std::size_t width, double fov) {
  if (width == 1) return pose.heading;
  return pose.heading + 0.5 * fov - fov * static_cast<double>(col) / static_cast<double>(width - 1);
}

/// 2.5-D billboard depth camera: one ray per column, shared by every row.
inline CameraFrame render_camera(const Scene& scene, const Pose2& pose, std::size_t width, std::size_t height,
                                 double fov, double max_range) {
  require(fov > 0.0 && fov < std::numbers::pi, Errc::invalid_argument, "camera fov must be in (0, pi)");
  require(width > 0 && height > 0 && max_range > 0.0, Errc::invalid_argument, "bad camera parameters");
  CameraFrame frame;
  frame.width = width;
  frame.height = height;
  frame.pixels.resize(width * height);
  for (std::size_t c = 0; c < width; ++c) {
    const double depth = cast_ray(scene, pose.position, camera_column_angle(pose, c, width, fov), max_range);
    for (std::size_t r = 0; r < height; ++r) frame.pixels[r * width + c] = depth;
  }
  return frame;
}

struct ImuNoise {
  double accel_std = 0.0;  // m/s^2
  double gyro_std = 0.0;   // rad, on the reported yaw
  double fd_step = 0.01;   // s, central-difference step (the IMU period)
};

/// Body-frame acceleration from central differences of the trajectory velocity.
inline ImuSample sample_imu(const Trajectory& traj, double t, const ImuNoise& noise, std::mt19937_64& rng) {
  const Pose2 pose = pose_at(traj, t);
  const Vec2 dv = velocity_at(traj, t + noise.fd_step) - velocity_at(traj, t - noise.fd_step);
  const Vec2 a_world = (0.5 / noise.fd_step) * dv;
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);

  ImuSample out;
  out.acceleration = {c * a_world.x + s * a_world.y, -s * a_world.x + c * a_world.y, 0.0};
  double yaw = pose.heading;
  if (noise.accel_std > 0.0) {
    std::normal_distribution<double> n(0.0, noise.accel_std);
    out.acceleration[0] += n(rng);
    out.acceleration[1] += n(rng);
  }
  if (noise.gyro_std > 0.0) {
    std::normal_distribution<double> n(0.0, noise.gyro_std);
    yaw = wrap_two_pi(yaw + n(rng));
  }
  out.magnetic = {std::cos(yaw), std::sin(yaw), 0.0};
  out.orientation = {0.0, 0.0, yaw};
  return out;
}

}  // namespace hawkrover

#endif  // HAWKROVER_SENSORS_HPP
