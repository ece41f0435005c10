#ifndef HAWKROVER_PREPROCESS_HPP
#define HAWKROVER_PREPROCESS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hawkrover/codec.hpp"
#include "hawkrover/error.hpp"
#include "hawkrover/geometry.hpp"
#include "hawkrover/payload.hpp"
#include "hawkrover/propagation.hpp"
#include "hawkrover/session.hpp"
#include "hawkrover/session_log.hpp"

namespace hawkrover {

struct TimedVector {
  std::uint64_t timestamp = 0;
  std::vector<double> values;
};

struct Anchor {
  std::uint64_t timestamp = 0;
  BeamSweep sweep;
};

/// Every mmWave sweep in the log, in timestamp order.
inline std::vector<Anchor> anchor_on_mmwave(const SessionLog& log) {
  std::vector<Anchor> anchors;
  for (const auto& r : log.records) {
    if (r.stream != StreamId::mmwave) continue;
    auto s = payload::decode_sweep(r);
    anchors.push_back({r.timestamp, std::move(s)});
  }
  require(!anchors.empty(), Errc::no_mmwave_data, "log holds no mmWave sweeps");
  std::stable_sort(anchors.begin(), anchors.end(),
                   [](const Anchor& a, const Anchor& b) { return a.timestamp < b.timestamp; });
  return anchors;
}

/// Component-wise linear interpolation between the records bracketing t.
inline std::vector<double> interpolate_numeric(std::span<const TimedVector> stream, std::uint64_t t) {
  require(stream.size() >= 2, Errc::invalid_argument, "interpolation needs at least two records");
  require(t >= stream.front().timestamp && t <= stream.back().timestamp, Errc::out_of_range,
          "interpolation time outside the stream");
  auto hi = std::lower_bound(stream.begin(), stream.end(), t,
                             [](const TimedVector& r, std::uint64_t v) { return r.timestamp < v; });
  if (hi->timestamp == t) return hi->values;
  auto lo = hi - 1;
  require(lo->values.size() == hi->values.size(), Errc::shape_mismatch, "records differ in length");
  const double w = static_cast<double>(t - lo->timestamp) / static_cast<double>(hi->timestamp - lo->timestamp);
  std::vector<double> out(lo->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lo->values[i] + w * (hi->values[i] - lo->values[i]);
  return out;
}

/// Distance from t to the nearer of its two bracketing records.
inline std::uint64_t bracket_gap(std::span<const TimedVector> stream, std::uint64_t t) {
  auto hi = std::lower_bound(stream.begin(), stream.end(), t,
                             [](const TimedVector& r, std::uint64_t v) { return r.timestamp < v; });
  if (hi->timestamp == t) return 0;
  return std::min(t - (hi - 1)->timestamp, hi->timestamp - t);
}

struct NearestFrame {
  std::size_t index = 0;
  std::uint64_t gap = 0;
};

/// Record minimizing |timestamp - t|; the earlier record wins ties.
inline NearestFrame nearest_frame(std::span<const std::uint64_t> timestamps, std::uint64_t t) {
  require(!timestamps.empty(), Errc::invalid_argument, "empty frame stream");
  auto hi = std::lower_bound(timestamps.begin(), timestamps.end(), t);
  if (hi == timestamps.end()) return {timestamps.size() - 1, t - timestamps.back()};
  const auto hi_idx = static_cast<std::size_t>(hi - timestamps.begin());
  if (hi_idx == 0) return {0, *hi - t};
  const std::uint64_t gap_hi = *hi - t;
  const std::uint64_t gap_lo = t - timestamps[hi_idx - 1];
  if (gap_lo <= gap_hi) return {hi_idx - 1, gap_lo};
  return {hi_idx, gap_hi};
}

enum class NormalizationMode : std::uint8_t { pooled = 0, per_beam = 1 };

struct NormalizationStats {
  NormalizationMode mode = NormalizationMode::pooled;
  std::vector<double> mean;  // one entry (pooled) or one per beam
  std::vector<double> std;

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// z-score statistics over the given (training) sweeps, population standard deviation.
inline NormalizationStats normalize_snr(std::span<const BeamSweep> sweeps,
                                        NormalizationMode mode = NormalizationMode::pooled) {
  require(!sweeps.empty(), Errc::degenerate_distribution, "no sweeps to normalize");
  const std::size_t beams = sweeps.front().snr.size();
  const std::size_t groups = mode == NormalizationMode::pooled ? 1 : beams;
  NormalizationStats st{mode, std::vector<double>(groups, 0.0), std::vector<double>(groups, 0.0)};
  std::vector<double> count(groups, 0.0);
  for (const auto& s : sweeps) {
    require(s.snr.size() == beams, Errc::shape_mismatch, "sweeps differ in beam count");
    for (std::size_t k = 0; k < beams; ++k) {
      const std::size_t g = groups == 1 ? 0 : k;
      st.mean[g] += s.snr[k];
      count[g] += 1.0;
    }
  }
  for (std::size_t g = 0; g < groups; ++g) st.mean[g] /= count[g];
  for (const auto& s : sweeps) {
    for (std::size_t k = 0; k < beams; ++k) {
      const std::size_t g = groups == 1 ? 0 : k;
      const double d = s.snr[k] - st.mean[g];
      st.std[g] += d * d;
    }
  }
  for (std::size_t g = 0; g < groups; ++g) {
    st.std[g] = std::sqrt(st.std[g] / count[g]);
    require(st.std[g] > 0.0, Errc::degenerate_distribution, "SNR distribution has zero spread");
  }
  return st;
}

inline std::vector<double> apply_normalization(const NormalizationStats& st, std::span<const double> snr) {
  std::vector<double> out(snr.size());
  for (std::size_t k = 0; k < snr.size(); ++k) {
    const std::size_t g = st.mean.size() == 1 ? 0 : k;
    out[k] = (snr[k] - st.mean[g]) / st.std[g];
  }
  return out;
}

struct TimedPosition {
  std::uint64_t timestamp = 0;
  Vec2 position;
};

/// Yaw-rotated body accelerations, trapezoid-integrated twice from rest.
/// Positions are relative to the first sample.
inline std::vector<TimedPosition> dead_reckon(std::span<const ImuSample> imu) {
  require(imu.size() >= 2, Errc::invalid_argument, "dead reckoning needs at least two samples");
  auto world_accel = [](const ImuSample& s) {
    const double c = std::cos(s.orientation[2]);
    const double sn = std::sin(s.orientation[2]);
    return Vec2{c * s.acceleration[0] - sn * s.acceleration[1], sn * s.acceleration[0] + c * s.acceleration[1]};
  };
  std::vector<TimedPosition> out(imu.size());
  out[0] = {imu[0].timestamp, {}};
  Vec2 vel{};
  Vec2 acc = world_accel(imu[0]);
  for (std::size_t k = 1; k < imu.size(); ++k) {
    require(imu[k].timestamp > imu[k - 1].timestamp, Errc::non_monotone_timestamps,
            "IMU timestamps must increase strictly");
    const double dt = static_cast<double>(imu[k].timestamp - imu[k - 1].timestamp) * 1e-9;
    const Vec2 acc_next = world_accel(imu[k]);
    const Vec2 vel_next = vel + (0.5 * dt) * (acc + acc_next);
    out[k] = {imu[k].timestamp, out[k - 1].position + (0.5 * dt) * (vel + vel_next)};
    vel = vel_next;
    acc = acc_next;
  }
  return out;
}

enum class PositionSource : std::uint8_t { imu = 0, location = 1 };

struct PreprocessOptions {
  std::size_t camera_downsample = 5;
  PositionSource position_source = PositionSource::imu;
  NormalizationMode normalization = NormalizationMode::pooled;
  double train_fraction = 0.8;
  std::size_t imu_window_steps = 10;
  SensorRates nominal_rates;
  double max_clock_error_ns = 1e6;
};

/// Per-step IMU/position features: acceleration xyz, magnetic xyz, relative position xy.
inline constexpr std::size_t kImuStepFeatures = 8;

struct AlignedSample {
  std::uint64_t timestamp = 0;  // the sweep's
  std::size_t camera_width = 0;
  std::size_t camera_height = 0;
  std::vector<double> camera;          // downsampled depth, row-major
  std::vector<double> lidar;           // ranges
  Vec2 rel_position;                   // m, relative to session start
  std::size_t imu_steps = 0;
  std::vector<double> imu_window;      // imu_steps x kImuStepFeatures, oldest first
  std::vector<double> snr_raw;
  std::vector<double> snr_norm;
  std::size_t label = 0;
  // Distances from the anchor to the source records each constituent came from.
  std::uint64_t camera_gap_ns = 0;
  std::uint64_t lidar_gap_ns = 0;
  std::uint64_t imu_gap_ns = 0;
  std::uint64_t position_gap_ns = 0;

  friend bool operator==(const AlignedSample&, const AlignedSample&) = default;
};

struct Dataset {
  std::vector<AlignedSample> samples;
  NormalizationStats stats;
  std::size_t anchors = 0;
  std::map<std::string, std::size_t> dropped;  // reason -> count

  std::size_t train_count(double fraction) const {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(samples.size())));
  }
};

inline std::vector<double> downsample_mean(const CameraFrame& f, std::size_t factor, std::size_t& w, std::size_t& h) {
  require(factor >= 1, Errc::invalid_argument, "camera downsample factor must be >= 1");
  w = f.width / factor;
  h = f.height / factor;
  require(w > 0 && h > 0, Errc::invalid_argument, "camera downsample factor larger than the frame");
  std::vector<double> out(w * h, 0.0);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::size_t dr = 0; dr < factor; ++dr) {
        for (std::size_t dc = 0; dc < factor; ++dc) acc += f.at(r * factor + dr, c * factor + dc);
      }
      out[r * w + c] = acc * inv;
    }
  }
  return out;
}

/// The full alignment pipeline: anchor on sweeps, interpolate LiDAR / IMU / position,
/// pick the nearest camera frame, normalize SNR with training-split statistics.
inline Dataset build_dataset(const SessionLog& log, const PreprocessOptions& opt = {}) {
  Dataset ds;
  const auto anchors = anchor_on_mmwave(log);
  ds.anchors = anchors.size();

  std::vector<std::uint64_t> cam_ts;
  std::vector<const TimestampedRecord*> cam_recs;
  std::vector<TimedVector> lidar;
  std::vector<ImuSample> imu;
  std::vector<TimedVector> location;
  for (const auto& r : log.records) {
    switch (r.stream) {
      case StreamId::camera:
        cam_ts.push_back(r.timestamp);
        cam_recs.push_back(&r);
        break;
      case StreamId::lidar: {
        auto s = payload::decode_lidar(r);
        lidar.push_back({r.timestamp, std::move(s.ranges)});
        break;
      }
      case StreamId::imu: imu.push_back(payload::decode_imu(r)); break;
      case StreamId::position: {
        auto p = payload::decode_position(r);
        location.push_back({r.timestamp, {p.position.x, p.position.y}});
        break;
      }
      default: break;
    }
  }
  require(!cam_ts.empty(), Errc::missing_stream, "log has no camera stream");
  require(!lidar.empty(), Errc::missing_stream, "log has no LiDAR stream");
  require(!imu.empty(), Errc::missing_stream, "log has no IMU stream");
  if (opt.position_source == PositionSource::location) {
    require(!location.empty(), Errc::missing_stream, "log has no location stream");
  }

  // Relative position track.
  std::vector<TimedVector> track;
  if (opt.position_source == PositionSource::imu) {
    if (imu.size() >= 2) {
      for (const auto& p : dead_reckon(imu)) track.push_back({p.timestamp, {p.position.x, p.position.y}});
    }
  } else {
    const Vec2 origin{location.front().values[0], location.front().values[1]};
    for (const auto& p : location) track.push_back({p.timestamp, {p.values[0] - origin.x, p.values[1] - origin.y}});
  }
  std::vector<TimedVector> imu_vec;
  imu_vec.reserve(imu.size());
  for (const auto& s : imu) {
    imu_vec.push_back({s.timestamp,
                       {s.acceleration[0], s.acceleration[1], s.acceleration[2], s.magnetic[0], s.magnetic[1],
                        s.magnetic[2]}});
  }

  const auto period_ns = [](double rate) { return 1e9 / rate; };
  const double cam_bound = 0.5 * period_ns(opt.nominal_rates.camera) + opt.max_clock_error_ns;
  const double lidar_bound = 0.5 * period_ns(opt.nominal_rates.lidar) + opt.max_clock_error_ns;
  const double imu_bound = 0.5 * period_ns(opt.nominal_rates.imu) + opt.max_clock_error_ns;
  const double pos_rate = opt.position_source == PositionSource::imu ? opt.nominal_rates.imu : opt.nominal_rates.position;
  const double pos_bound = 0.5 * period_ns(pos_rate) + opt.max_clock_error_ns;
  const auto step_ns = static_cast<std::uint64_t>(std::llround(period_ns(opt.nominal_rates.mmwave) /
                                                               static_cast<double>(opt.imu_window_steps)));
  const std::uint64_t window_span = step_ns * (opt.imu_window_steps - 1);

  auto covers = [](const std::vector<TimedVector>& s, std::uint64_t t) {
    return s.size() >= 2 && t >= s.front().timestamp && t <= s.back().timestamp;
  };

  std::vector<BeamSweep> kept_sweeps;
  for (const auto& a : anchors) {
    const std::uint64_t t = a.timestamp;
    if (t < cam_ts.front() || t > cam_ts.back()) {
      ++ds.dropped["camera-coverage"];
      continue;
    }
    if (!covers(lidar, t)) {
      ++ds.dropped["lidar-coverage"];
      continue;
    }
    if (t < window_span || !covers(imu_vec, t - window_span) || !covers(imu_vec, t)) {
      ++ds.dropped["imu-coverage"];
      continue;
    }
    if (!covers(track, t - window_span) || !covers(track, t)) {
      ++ds.dropped["position-coverage"];
      continue;
    }

    AlignedSample s;
    s.timestamp = t;
    const auto cam = nearest_frame(cam_ts, t);
    s.camera_gap_ns = cam.gap;
    s.lidar_gap_ns = bracket_gap(lidar, t);
    s.imu_gap_ns = bracket_gap(imu_vec, t);
    s.position_gap_ns = bracket_gap(track, t);
    if (static_cast<double>(s.camera_gap_ns) > cam_bound || static_cast<double>(s.lidar_gap_ns) > lidar_bound ||
        static_cast<double>(s.imu_gap_ns) > imu_bound || static_cast<double>(s.position_gap_ns) > pos_bound) {
      ++ds.dropped["stale"];
      continue;
    }

    const auto frame = payload::decode_camera(*cam_recs[cam.index]);
    s.camera = downsample_mean(frame, opt.camera_downsample, s.camera_width, s.camera_height);
    s.lidar = interpolate_numeric(lidar, t);
    const auto pos = interpolate_numeric(track, t);
    s.rel_position = {pos[0], pos[1]};
    s.imu_steps = opt.imu_window_steps;
    s.imu_window.reserve(opt.imu_window_steps * kImuStepFeatures);
    for (std::size_t j = 0; j < opt.imu_window_steps; ++j) {
      const std::uint64_t tj = t - window_span + j * step_ns;
      const auto iv = interpolate_numeric(imu_vec, tj);
      const auto pv = interpolate_numeric(track, tj);
      s.imu_window.insert(s.imu_window.end(), iv.begin(), iv.end());
      s.imu_window.insert(s.imu_window.end(), pv.begin(), pv.end());
    }
    s.snr_raw = a.sweep.snr;
    s.label = a.sweep.best_index;
    kept_sweeps.push_back(a.sweep);
    ds.samples.push_back(std::move(s));
  }

  const std::size_t n_train = ds.train_count(opt.train_fraction);
  if (n_train >= 1) {
    ds.stats = normalize_snr(std::span(kept_sweeps).first(n_train), opt.normalization);
    for (auto& s : ds.samples) s.snr_norm = apply_normalization(ds.stats, s.snr_raw);
  } else {
    ++ds.dropped["no-training-split"];
  }
  return ds;
}

}  // namespace hawkrover

#endif  // HAWKROVER_PREPROCESS_HPP
