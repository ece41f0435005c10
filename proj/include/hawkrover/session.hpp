#ifndef HAWKROVER_SESSION_HPP
#define HAWKROVER_SESSION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "json.hpp"

#include "hawkrover/codec.hpp"
#include "hawkrover/payload.hpp"
#include "hawkrover/propagation.hpp"
#include "hawkrover/scene.hpp"
#include "hawkrover/sensors.hpp"

namespace hawkrover {

struct SensorRates {
  double camera = 30.0;
  double lidar = 15.0;
  double imu = 100.0;
  double mmwave = 10.0;
  double position = 100.0;
};

struct CameraConfig {
  std::size_t width = 160;
  std::size_t height = 90;
  double fov = std::numbers::pi / 2.0;
  double max_range = 12.0;
  bool rear = false;
};

struct LidarConfig {
  std::size_t rays = 1600;
  double max_range = 12.0;
};

struct CodebookConfig {
  std::size_t count = kBeamCount;
  double mainlobe_deg = 10.0;
  double gain_db = 15.0;
  double sidelobe_db = -10.0;

  BeamCodebook build() const {
    return build_codebook(count, mainlobe_deg * std::numbers::pi / 180.0, gain_db, sidelobe_db);
  }
};

struct SessionConfig {
  double duration = 10.0;  // s
  SensorRates rates;
  // Indexed by StreamId (camera .. camera_rear).
  std::array<ClockModel, 6> clocks = {{
      {300'000, 50'000.0, 11},
      {-200'000, 50'000.0, 12},
      {100'000, 50'000.0, 13},
      {-400'000, 50'000.0, 14},
      {0, 50'000.0, 15},
      {250'000, 50'000.0, 16},
  }};
  CameraConfig camera;
  LidarConfig lidar;
  ImuNoise imu_noise;
  std::uint64_t imu_seed = 7;
  RadioParams radio;

  double rate_of(StreamId id) const {
    switch (id) {
      case StreamId::camera:
      case StreamId::camera_rear: return rates.camera;
      case StreamId::lidar: return rates.lidar;
      case StreamId::imu: return rates.imu;
      case StreamId::mmwave: return rates.mmwave;
      case StreamId::position: return rates.position;
      default: return 0.0;
    }
  }

  void validate() const {
    require(duration > 0.0, Errc::invalid_argument, "session duration must be positive");
    for (double r : {rates.camera, rates.lidar, rates.imu, rates.mmwave, rates.position}) {
      require(r > 0.0 && std::isfinite(r), Errc::invalid_rate, "sensor rates must be positive");
    }
    for (const auto& c : clocks) c.validate();
  }
};

inline std::uint64_t seconds_to_ns(double s) { return static_cast<std::uint64_t>(std::llround(s * 1e9)); }

/// Simulates one recording session, handing records to `sink` in global timestamp
/// order (ties by stream id), hence also in per-stream order.
inline void run_session(const Scene& scene, const Trajectory& traj, const BeamCodebook& codebook,
                        const SessionConfig& cfg, const std::function<void(TimestampedRecord&&)>& sink) {
  scene.validate();
  traj.validate();
  cfg.validate();

  struct Channel {
    StreamId id;
    double rate = 0.0;
    ClockModel clock;
    std::mt19937_64 rng;
    std::uint64_t index = 0;
    std::uint64_t true_ns = 0;
    std::uint64_t stamp = 0;
    std::uint64_t last_stamp = 0;
    bool live = true;
  };

  const std::uint64_t end_ns = seconds_to_ns(cfg.duration);
  std::vector<Channel> channels;
  for (auto id : {StreamId::camera, StreamId::lidar, StreamId::imu, StreamId::mmwave, StreamId::position,
                  StreamId::camera_rear}) {
    if (id == StreamId::camera_rear && !cfg.camera.rear) continue;
    const auto& clock = cfg.clocks[static_cast<std::size_t>(id)];
    channels.push_back({id, cfg.rate_of(id), clock, std::mt19937_64(clock.seed)});
  }

  auto schedule = [&](Channel& ch) {
    ch.true_ns = static_cast<std::uint64_t>(std::llround(static_cast<double>(ch.index) * 1e9 / ch.rate));
    if (ch.true_ns >= end_ns) {
      ch.live = false;
      return;
    }
    std::int64_t jitter = 0;
    if (ch.clock.jitter_std_ns > 0.0) {
      std::normal_distribution<double> n(0.0, ch.clock.jitter_std_ns);
      const auto cap = static_cast<std::int64_t>(std::floor(6.0 * ch.clock.jitter_std_ns));
      jitter = std::clamp<std::int64_t>(std::llround(n(ch.rng)), -cap, cap);
    }
    const std::int64_t stamped = static_cast<std::int64_t>(ch.true_ns) + ch.clock.offset_ns + jitter;
    ch.stamp = std::max<std::uint64_t>(static_cast<std::uint64_t>(std::max<std::int64_t>(stamped, 0)), ch.last_stamp);
    ch.last_stamp = ch.stamp;
    ++ch.index;
  };
  for (auto& ch : channels) schedule(ch);

  std::mt19937_64 imu_rng(cfg.imu_seed);
  const double traj_end = traj.loop ? std::numeric_limits<double>::infinity() : traj.end_time();
  auto pose_at_time = [&](double t) { return pose_at(traj, std::min(t, traj_end)); };

  while (true) {
    Channel* next = nullptr;
    for (auto& ch : channels) {
      if (!ch.live) continue;
      if (!next || ch.stamp < next->stamp) next = &ch;
    }
    if (!next) break;

    const double t = static_cast<double>(next->true_ns) * 1e-9;
    const Pose2 pose = pose_at_time(t);
    TimestampedRecord rec{next->id, next->stamp, {}};
    switch (next->id) {
      case StreamId::camera:
        rec.payload = payload::encode(render_camera(scene, pose, cfg.camera.width, cfg.camera.height, cfg.camera.fov,
                                                    cfg.camera.max_range));
        break;
      case StreamId::camera_rear: {
        const Pose2 back{pose.position, pose.heading + std::numbers::pi};
        rec.payload = payload::encode(render_camera(scene, back, cfg.camera.width, cfg.camera.height, cfg.camera.fov,
                                                    cfg.camera.max_range));
        break;
      }
      case StreamId::lidar:
        rec.payload = payload::encode(render_lidar(scene, pose, cfg.lidar.rays, cfg.lidar.max_range));
        break;
      case StreamId::imu: {
        ImuNoise noise = cfg.imu_noise;
        noise.fd_step = 1.0 / cfg.rates.imu;
        rec.payload = payload::encode(sample_imu(traj, std::min(t, traj_end), noise, imu_rng));
        break;
      }
      case StreamId::mmwave:
        rec.payload = payload::encode(sweep(scene, pose, codebook, cfg.radio, next->stamp));
        break;
      case StreamId::position:
        rec.payload = payload::encode(PositionSample{next->stamp, pose.position});
        break;
      default:
        break;
    }
    schedule(*next);
    sink(std::move(rec));
  }
}

// ---- JSON documents -------------------------------------------------------------

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  try {
    for (const auto& w : j.at("waypoints")) t.waypoints.push_back(scene_json::vec_from_json(w));
    t.speed = j.value("speed", 1.0);
    t.loop = j.value("loop", false);
    t.start_delay = j.value("start_delay_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_error, std::string("trajectory: ") + e.what());
  }
  t.validate();
  return t;
}

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json wps = nlohmann::json::array();
  for (auto w : t.waypoints) wps.push_back({w.x, w.y});
  return {{"waypoints", wps}, {"speed", t.speed}, {"loop", t.loop}, {"start_delay_s", t.start_delay}};
}

inline CodebookConfig codebook_from_json(const nlohmann::json& j) {
  CodebookConfig c;
  c.count = j.value("count", c.count);
  c.mainlobe_deg = j.value("mainlobe_deg", c.mainlobe_deg);
  c.gain_db = j.value("gain_db", c.gain_db);
  c.sidelobe_db = j.value("sidelobe_db", c.sidelobe_db);
  return c;
}

inline nlohmann::json codebook_to_json(const CodebookConfig& c) {
  return {{"count", c.count}, {"mainlobe_deg", c.mainlobe_deg}, {"gain_db", c.gain_db}, {"sidelobe_db", c.sidelobe_db}};
}

inline SessionConfig session_from_json(const nlohmann::json& j) {
  SessionConfig c;
  try {
    c.duration = j.value("duration_s", c.duration);
    if (j.contains("rates")) {
      const auto& r = j.at("rates");
      c.rates.camera = r.value("camera", c.rates.camera);
      c.rates.lidar = r.value("lidar", c.rates.lidar);
      c.rates.imu = r.value("imu", c.rates.imu);
      c.rates.mmwave = r.value("mmwave", c.rates.mmwave);
      c.rates.position = r.value("position", c.rates.position);
    }
    if (j.contains("clocks")) {
      const auto& cl = j.at("clocks");
      for (std::size_t i = 0; i < c.clocks.size(); ++i) {
        const char* name = stream_name(static_cast<StreamId>(i));
        if (!cl.contains(name)) continue;
        const auto& cj = cl.at(name);
        c.clocks[i].offset_ns = cj.value("offset_ns", c.clocks[i].offset_ns);
        c.clocks[i].jitter_std_ns = cj.value("jitter_std_ns", c.clocks[i].jitter_std_ns);
        c.clocks[i].seed = cj.value("seed", c.clocks[i].seed);
      }
    }
    if (j.contains("camera")) {
      const auto& cj = j.at("camera");
      c.camera.width = cj.value("width", c.camera.width);
      c.camera.height = cj.value("height", c.camera.height);
      c.camera.fov = cj.value("fov_deg", c.camera.fov * 180.0 / std::numbers::pi) * std::numbers::pi / 180.0;
      c.camera.max_range = cj.value("max_range", c.camera.max_range);
      c.camera.rear = cj.value("rear", c.camera.rear);
    }
    if (j.contains("lidar")) {
      const auto& lj = j.at("lidar");
      c.lidar.rays = lj.value("rays", c.lidar.rays);
      c.lidar.max_range = lj.value("max_range", c.lidar.max_range);
    }
    if (j.contains("imu")) {
      const auto& ij = j.at("imu");
      c.imu_noise.accel_std = ij.value("accel_std", c.imu_noise.accel_std);
      c.imu_noise.gyro_std = ij.value("gyro_std", c.imu_noise.gyro_std);
      c.imu_seed = ij.value("seed", c.imu_seed);
    }
    if (j.contains("radio")) {
      const auto& rj = j.at("radio");
      c.radio.carrier_hz = rj.value("carrier_hz", c.radio.carrier_hz);
      c.radio.tx_power_dbm = rj.value("tx_power_dbm", c.radio.tx_power_dbm);
      c.radio.noise_floor_dbm = rj.value("noise_floor_dbm", c.radio.noise_floor_dbm);
      c.radio.sentinel_snr_db = rj.value("sentinel_snr_db", c.radio.sentinel_snr_db);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_error, std::string("session: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json session_to_json(const SessionConfig& c) {
  nlohmann::json clocks;
  for (std::size_t i = 0; i < c.clocks.size(); ++i) {
    clocks[stream_name(static_cast<StreamId>(i))] = {
        {"offset_ns", c.clocks[i].offset_ns}, {"jitter_std_ns", c.clocks[i].jitter_std_ns}, {"seed", c.clocks[i].seed}};
  }
  return {
      {"duration_s", c.duration},
      {"rates",
       {{"camera", c.rates.camera}, {"lidar", c.rates.lidar}, {"imu", c.rates.imu}, {"mmwave", c.rates.mmwave},
        {"position", c.rates.position}}},
      {"clocks", clocks},
      {"camera",
       {{"width", c.camera.width}, {"height", c.camera.height}, {"fov_deg", c.camera.fov * 180.0 / std::numbers::pi},
        {"max_range", c.camera.max_range}, {"rear", c.camera.rear}}},
      {"lidar", {{"rays", c.lidar.rays}, {"max_range", c.lidar.max_range}}},
      {"imu", {{"accel_std", c.imu_noise.accel_std}, {"gyro_std", c.imu_noise.gyro_std}, {"seed", c.imu_seed}}},
      {"radio",
       {{"carrier_hz", c.radio.carrier_hz}, {"tx_power_dbm", c.radio.tx_power_dbm},
        {"noise_floor_dbm", c.radio.noise_floor_dbm}, {"sentinel_snr_db", c.radio.sentinel_snr_db}}},
  };
}

}  // namespace hawkrover

#endif  // HAWKROVER_SESSION_HPP
