#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "hawkrover/payload.hpp"
#include "hawkrover/preprocess.hpp"
#include "hawkrover/sensors.hpp"
#include "hawkrover/session.hpp"
#include "support/oracles.hpp"

using namespace hawkrover;

namespace {

constexpr double kPi = std::numbers::pi;

// Line-equation intersection, written independently of ray_segment_hit.
double brute_range(const Scene& s, Vec2 o, double angle, double max_range) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  double best = max_range;
  auto hit = [&](Vec2 a, Vec2 b) {
    const double ex = b.x - a.x, ey = b.y - a.y;
    // o + t d = a + u e  ->  [dx -ex; dy -ey] [t u]^T = a - o
    const double det = dx * (-ey) - (-ex) * dy;
    if (det == 0.0) return;
    const double rx = a.x - o.x, ry = a.y - o.y;
    const double t = (rx * (-ey) - (-ex) * ry) / det;
    const double u = (dx * ry - dy * rx) / det;
    if (t > 0.0 && u >= 0.0 && u <= 1.0 && t < best) best = t;
  };
  for (const auto& w : s.walls) hit(w.a, w.b);
  for (const auto& b : s.blockers)
    for (std::size_t i = 0; i < b.shape.size(); ++i) hit(b.shape.edge_start(i), b.shape.edge_end(i));
  return best;
}

Scene random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-9.0, 9.0);
  std::uniform_real_distribution<double> r(0.3, 1.5);
  Scene s = oracle::free_space_scene();
  for (int i = 0; i < 6; ++i) s.walls.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}, 10.0});
  for (int i = 0; i < 3; ++i) {
    const Vec2 c{u(rng), u(rng)};
    const double h = r(rng);
    Blocker b;
    b.shape.vertices = {{c.x - h, c.y - h}, {c.x + h, c.y - h}, {c.x + h, c.y + h}, {c.x - h, c.y + h}};
    s.blockers.push_back(b);
  }
  return s;
}

Trajectory line(Vec2 a, Vec2 b, double speed = 1.0) {
  Trajectory t;
  t.waypoints = {a, b};
  t.speed = speed;
  return t;
}

}  // namespace

// ---------------------------------------------------------------- trajectory

TEST(Trajectory, UniformMotion) {
  const auto t = line({0, 0}, {10, 0});
  const auto p = pose_at(t, 4.0);
  EXPECT_DOUBLE_EQ(p.position.x, 4.0);
  EXPECT_DOUBLE_EQ(p.position.y, 0.0);
  EXPECT_DOUBLE_EQ(p.heading, 0.0);
  EXPECT_EQ(pose_at(t, 0.0).position, (Vec2{0, 0}));
  EXPECT_THROW(pose_at(t, 10.5), Error);
  EXPECT_THROW(pose_at(t, -1.0), Error);
}

TEST(Trajectory, LoopWraps) {
  Trajectory t;
  t.waypoints = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  t.loop = true;
  EXPECT_DOUBLE_EQ(t.length(), 40.0);
  const auto a = pose_at(t, 45.0);
  const auto b = pose_at(t, 5.0);
  EXPECT_NEAR(a.position.x, b.position.x, 1e-12);
  EXPECT_NEAR(a.position.y, b.position.y, 1e-12);
  EXPECT_DOUBLE_EQ(a.heading, b.heading);
  EXPECT_NEAR(pose_at(t, 15.0).heading, kPi / 2.0, 1e-15);
}

TEST(Trajectory, StartDelayRestsAtFirstWaypoint) {
  auto t = line({1, 1}, {5, 1});
  t.start_delay = 2.0;
  EXPECT_EQ(pose_at(t, 1.5).position, (Vec2{1, 1}));
  EXPECT_EQ(velocity_at(t, 1.5), (Vec2{}));
  EXPECT_NEAR(pose_at(t, 3.0).position.x, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(t.end_time(), 6.0);
}

TEST(Trajectory, Validation) {
  Trajectory t;
  t.waypoints = {{0, 0}};
  EXPECT_THROW(t.validate(), Error);
  t.waypoints = {{0, 0}, {0, 0}};
  EXPECT_THROW(t.validate(), Error);
  t.waypoints = {{0, 0}, {1, 0}};
  t.speed = 0.0;
  EXPECT_THROW(t.validate(), Error);
}

// ---------------------------------------------------------------- LiDAR

TEST(Lidar, EmptySceneReturnsMaxRange) {
  const auto scan = render_lidar(oracle::free_space_scene(), {{0, 0}, 0.3}, 1600, 12.0);
  ASSERT_EQ(scan.ranges.size(), 1600u);
  for (double r : scan.ranges) EXPECT_EQ(r, 12.0);
}

TEST(Lidar, WallStraightAhead) {
  Scene s = oracle::free_space_scene();
  s.walls.push_back({{2, -5}, {2, 5}, 10.0});
  const auto scan = render_lidar(s, {{0, 0}, 0.0}, 1600, 12.0);
  EXPECT_DOUBLE_EQ(scan.ranges[0], 2.0);
  EXPECT_EQ(scan.ranges[800], 12.0);
  const auto pts = scan.to_points();
  EXPECT_DOUBLE_EQ(pts[0][0], 2.0);
  EXPECT_DOUBLE_EQ(pts[0][2], 0.0);
}

TEST(Lidar, MatchesBruteForceIntersection) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Scene s = random_scene(rng);
    const Pose2 pose{{std::uniform_real_distribution<double>(-8, 8)(rng), std::uniform_real_distribution<double>(-8, 8)(rng)},
                     std::uniform_real_distribution<double>(0, kTwoPi)(rng)};
    const auto scan = render_lidar(s, pose, 1600, 12.0);
    for (std::size_t k = 0; k < scan.ranges.size(); ++k) {
      const double a = pose.heading + kTwoPi * static_cast<double>(k) / 1600.0;
      const double r = brute_range(s, pose.position, a, 12.0);
      ASSERT_NEAR(scan.ranges[k], r, 1e-9) << "ray " << k;
      EXPECT_GT(scan.ranges[k], 0.0);
      EXPECT_LE(scan.ranges[k], 12.0);
    }
  }
}

// ---------------------------------------------------------------- camera

TEST(Camera, EmptySceneUniform) {
  const auto f = render_camera(oracle::free_space_scene(), {{0, 0}, 1.0}, 16, 9, kPi / 2.0, 12.0);
  ASSERT_EQ(f.pixels.size(), 16u * 9u);
  for (double d : f.pixels) EXPECT_EQ(d, 12.0);
}

TEST(Camera, PerpendicularWallGeometry) {
  Scene s = oracle::free_space_scene();
  s.walls.push_back({{2, -10}, {2, 10}, 10.0});
  const double fov = kPi / 2.0;
  const auto f = render_camera(s, {{0, 0}, 0.0}, 9, 4, fov, 12.0);
  EXPECT_NEAR(f.at(0, 4), 2.0, 1e-12);
  EXPECT_NEAR(f.at(3, 0), 2.0 / std::cos(fov / 2.0), 1e-12);
  EXPECT_NEAR(f.at(2, 8), 2.0 / std::cos(fov / 2.0), 1e-12);
}

TEST(Camera, RejectsBadFov) {
  EXPECT_THROW(render_camera(oracle::free_space_scene(), {}, 4, 4, kPi, 10.0), Error);
  EXPECT_THROW(render_camera(oracle::free_space_scene(), {}, 4, 4, 0.0, 10.0), Error);
}

TEST(Camera, ColumnsAgreeWithLidar) {
  // 90 degree fov over 5 columns lands on every fourth of 16 LiDAR rays.
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = random_scene(rng);
    const Pose2 pose{{std::uniform_real_distribution<double>(-8, 8)(rng), std::uniform_real_distribution<double>(-8, 8)(rng)},
                     std::uniform_real_distribution<double>(0, kTwoPi)(rng)};
    const auto cam = render_camera(s, pose, 5, 2, kPi / 2.0, 12.0);
    const auto scan = render_lidar(s, pose, 16, 12.0);
    const std::size_t rays[5] = {2, 1, 0, 15, 14};
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(cam.at(0, c), scan.ranges[rays[c]], 1e-9);
      EXPECT_EQ(cam.at(1, c), cam.at(0, c));
    }
  }
}

// ---------------------------------------------------------------- IMU

TEST(Imu, StraightSegmentHasNoAcceleration) {
  std::mt19937_64 rng(1);
  const auto t = line({0, 0}, {0, 10});
  const auto s = sample_imu(t, 3.0, {}, rng);
  EXPECT_NEAR(s.acceleration[0], 0.0, 1e-12);
  EXPECT_NEAR(s.acceleration[1], 0.0, 1e-12);
  EXPECT_NEAR(s.magnetic[0], 0.0, 1e-15);
  EXPECT_NEAR(s.magnetic[1], 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.orientation[2], kPi / 2.0);
}

TEST(Imu, YawStaysInRange) {
  std::mt19937_64 rng(2);
  Trajectory t;
  t.waypoints = {{0, 0}, {5, 0}, {5, -5}, {0, -5}};
  t.loop = true;
  ImuNoise noise;
  noise.gyro_std = 0.5;
  for (int i = 0; i < 2000; ++i) {
    const auto s = sample_imu(t, 0.01 * i, noise, rng);
    EXPECT_GE(s.orientation[2], 0.0);
    EXPECT_LT(s.orientation[2], kTwoPi);
  }
}

TEST(Imu, CornerTurnIntegratesToWaypointDisplacement) {
  Trajectory t;
  t.waypoints = {{0, 0}, {4, 0}, {4, 3}};
  t.speed = 1.0;
  t.start_delay = 0.5;
  std::mt19937_64 rng(3);
  ImuNoise noise;
  noise.fd_step = 0.01;
  std::vector<ImuSample> samples;
  const auto n = static_cast<std::size_t>(std::floor(t.end_time() / 0.01));
  for (std::size_t k = 0; k <= n; ++k) {
    auto s = sample_imu(t, 0.01 * static_cast<double>(k), noise, rng);
    s.timestamp = k * 10'000'000ULL;
    samples.push_back(s);
  }
  const auto track = dead_reckon(samples);
  const Vec2 truth = pose_at(t, 0.01 * static_cast<double>(n)).position;
  EXPECT_LT(distance(track.back().position, truth), 0.01 * t.length());
}

// ---------------------------------------------------------------- session

TEST(Session, OneSecondRecordCounts) {
  std::map<StreamId, std::size_t> counts;
  const auto cfg = oracle::ideal_session(1.0);
  run_session(oracle::lab_scene(), oracle::lab_trajectory(), CodebookConfig{}.build(), cfg,
              [&](TimestampedRecord&& r) { ++counts[r.stream]; });
  EXPECT_EQ(counts[StreamId::camera], 30u);
  EXPECT_EQ(counts[StreamId::lidar], 15u);
  EXPECT_EQ(counts[StreamId::imu], 100u);
  EXPECT_EQ(counts[StreamId::mmwave], 10u);
  EXPECT_EQ(counts[StreamId::position], 100u);
  EXPECT_EQ(counts.count(StreamId::camera_rear), 0u);
}

TEST(Session, RearCameraToggle) {
  auto cfg = oracle::ideal_session(0.5);
  cfg.camera.rear = true;
  std::size_t rear = 0;
  run_session(oracle::lab_scene(), oracle::lab_trajectory(), CodebookConfig{}.build(), cfg,
              [&](TimestampedRecord&& r) { rear += r.stream == StreamId::camera_rear; });
  EXPECT_EQ(rear, 15u);
}

TEST(Session, ZeroJitterGapsAreNominal) {
  const auto cfg = oracle::ideal_session(2.0);
  const auto log = oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg);
  std::map<StreamId, std::vector<std::uint64_t>> ts;
  for (const auto& r : log.records) ts[r.stream].push_back(r.timestamp);
  for (auto& [id, v] : ts) {
    const double period = 1e9 / cfg.rate_of(id);
    for (std::size_t i = 1; i < v.size(); ++i) {
      EXPECT_LE(std::abs(static_cast<double>(v[i] - v[i - 1]) - period), 1.0) << stream_name(id);
    }
  }
}

TEST(Session, RateFidelityWithinOne) {
  auto cfg = oracle::ideal_session(3.7);
  const auto log = oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg);
  for (auto id : {StreamId::camera, StreamId::lidar, StreamId::imu, StreamId::mmwave, StreamId::position}) {
    const double expected = cfg.rate_of(id) * cfg.duration;
    EXPECT_LE(std::abs(static_cast<double>(log.count(id)) - expected), 1.0) << stream_name(id);
  }
}

TEST(Session, ClockBoundAndPerStreamOrder) {
  SessionConfig cfg;
  cfg.duration = 3.0;
  const auto log = oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg);
  std::map<StreamId, std::uint64_t> index;
  std::map<StreamId, std::uint64_t> last;
  for (const auto& r : log.records) {
    const auto i = index[r.stream]++;
    const double truth = std::round(static_cast<double>(i) * 1e9 / cfg.rate_of(r.stream));
    const auto& clk = cfg.clocks[static_cast<std::size_t>(r.stream)];
    EXPECT_LE(std::abs(static_cast<double>(r.timestamp) - truth), clk.max_error_ns() + 1.0);
    EXPECT_LE(std::abs(static_cast<double>(r.timestamp) - truth), 1e6);
    EXPECT_GE(r.timestamp, last[r.stream]);
    last[r.stream] = r.timestamp;
  }
}

TEST(Session, DeterministicBytes) {
  SessionConfig cfg;
  cfg.duration = 1.0;
  cfg.imu_noise.accel_std = 0.05;
  cfg.imu_noise.gyro_std = 0.01;
  const auto a = oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg);
  const auto b = oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) ASSERT_EQ(a.records[i], b.records[i]);
}

TEST(Session, SweepUsesPoseAtTrueTime) {
  const auto cfg = oracle::ideal_session(1.0);
  const Scene scene = oracle::lab_scene();
  const auto traj = oracle::lab_trajectory();
  const auto log = oracle::simulate(scene, traj, cfg);
  const auto cb = CodebookConfig{}.build();
  for (const auto& r : log.records) {
    if (r.stream != StreamId::mmwave) continue;
    const auto s = payload::decode_sweep(r);
    const auto ref = sweep(scene, pose_at(traj, static_cast<double>(r.timestamp) * 1e-9), cb, cfg.radio, r.timestamp);
    EXPECT_EQ(s.best_index, ref.best_index);
    EXPECT_EQ(s.snr, ref.snr);
  }
}

TEST(Session, RejectsBadConfig) {
  auto cfg = oracle::ideal_session(1.0);
  cfg.rates.lidar = 0.0;
  try {
    oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_rate);
  }
  cfg = oracle::ideal_session(1.0);
  cfg.clocks[0].offset_ns = 2'000'000;
  EXPECT_THROW(oracle::simulate(oracle::lab_scene(), oracle::lab_trajectory(), cfg), Error);
}

TEST(Session, JsonRoundTrip) {
  SessionConfig cfg;
  cfg.duration = 12.5;
  cfg.camera.rear = true;
  cfg.clocks[3].offset_ns = -123;
  const auto back = session_from_json(session_to_json(cfg));
  EXPECT_EQ(session_to_json(back).dump(), session_to_json(cfg).dump());
  const auto t = oracle::lab_trajectory();
  EXPECT_EQ(trajectory_to_json(trajectory_from_json(trajectory_to_json(t))).dump(), trajectory_to_json(t).dump());
}

// ---------------------------------------------------------------- payloads

TEST(Payload, RoundTrips) {
  const Scene s = oracle::lab_scene();
  const Pose2 pose{{2, 2}, 0.7};
  const auto cam = render_camera(s, pose, 20, 10, 1.2, 12.0);
  const auto back = payload::decode_camera({StreamId::camera, 5, payload::encode(cam)});
  EXPECT_EQ(back.pixels, cam.pixels);
  EXPECT_EQ(back.timestamp, 5u);

  CameraFrame noisy = cam;
  noisy.pixels[25] += 0.5;
  EXPECT_EQ(payload::decode_camera({StreamId::camera, 0, payload::encode(noisy)}).pixels, noisy.pixels);

  const auto scan = render_lidar(s, pose, 100, 9.0);
  const auto lb = payload::decode_lidar({StreamId::lidar, 0, payload::encode(scan)});
  EXPECT_EQ(lb.ranges, scan.ranges);
  EXPECT_EQ(lb.max_range, 9.0);

  std::mt19937_64 rng(4);
  const auto imu = sample_imu(oracle::lab_trajectory(), 3.0, {0.1, 0.1, 0.01}, rng);
  const auto ib = payload::decode_imu({StreamId::imu, 0, payload::encode(imu)});
  EXPECT_EQ(ib.acceleration, imu.acceleration);
  EXPECT_EQ(ib.magnetic, imu.magnetic);
  EXPECT_EQ(ib.orientation, imu.orientation);

  const auto sw = sweep(s, pose, CodebookConfig{}.build(), {}, 0);
  const auto sb = payload::decode_sweep({StreamId::mmwave, 0, payload::encode(sw)});
  EXPECT_EQ(sb.snr, sw.snr);
  EXPECT_EQ(sb.best_index, sw.best_index);

  const auto pb = payload::decode_position({StreamId::position, 0, payload::encode(PositionSample{0, {1.25, -3.5}})});
  EXPECT_EQ(pb.position, (Vec2{1.25, -3.5}));
}
