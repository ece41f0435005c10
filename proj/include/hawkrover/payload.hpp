#ifndef HAWKROVER_PAYLOAD_HPP
#define HAWKROVER_PAYLOAD_HPP

// Per-stream payload layouts (all little-endian):
//   camera / camera_rear : u16 width, u16 height, u8 layout, then
//                          layout 0: width*height f64 depths, row-major
//                          layout 1: width f64 column depths (every row identical)
//   lidar                : u32 n, f64 max_range, n f64 ranges
//   imu                  : 9 f64 = acceleration xyz, magnetic xyz, orientation xyz
//   mmwave               : u8 best_index, u8 n, n f64 SNR (dB)
//   position             : 2 f64 = x, y (m)
// The record timestamp is carried by the frame, not the payload.

#include <algorithm>

#include "hawkrover/bytes.hpp"
#include "hawkrover/codec.hpp"
#include "hawkrover/propagation.hpp"
#include "hawkrover/sensors.hpp"

namespace hawkrover::payload {

inline Bytes encode(const CameraFrame& f) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(f.width));
  w.u16(static_cast<std::uint16_t>(f.height));
  bool column_constant = true;
  for (std::size_t r = 1; r < f.height && column_constant; ++r) {
    column_constant = std::equal(f.pixels.begin() + static_cast<std::ptrdiff_t>(r * f.width),
                                 f.pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * f.width), f.pixels.begin());
  }
  w.u8(column_constant ? 1 : 0);
  if (column_constant) {
    w.f64s(std::span(f.pixels).first(f.width));
  } else {
    w.f64s(f.pixels);
  }
  return w.take();
}

inline CameraFrame decode_camera(const TimestampedRecord& rec) {
  ByteReader r(rec.payload);
  CameraFrame f;
  f.timestamp = rec.timestamp;
  f.width = r.u16();
  f.height = r.u16();
  const auto layout = r.u8();
  f.pixels.resize(f.width * f.height);
  if (layout == 1) {
    r.f64s(std::span(f.pixels).first(f.width));
    for (std::size_t row = 1; row < f.height; ++row) {
      std::copy_n(f.pixels.begin(), f.width, f.pixels.begin() + static_cast<std::ptrdiff_t>(row * f.width));
    }
  } else {
    require(layout == 0, Errc::invalid_argument, "unknown camera payload layout");
    r.f64s(f.pixels);
  }
  return f;
}

inline Bytes encode(const LidarScan& s) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(s.ranges.size()));
  w.f64(s.max_range);
  w.f64s(s.ranges);
  return w.take();
}

inline LidarScan decode_lidar(const TimestampedRecord& rec) {
  ByteReader r(rec.payload);
  LidarScan s;
  s.timestamp = rec.timestamp;
  s.ranges.resize(r.u32());
  s.max_range = r.f64();
  r.f64s(s.ranges);
  return s;
}

inline Bytes encode(const ImuSample& s) {
  ByteWriter w;
  w.f64s(s.acceleration);
  w.f64s(s.magnetic);
  w.f64s(s.orientation);
  return w.take();
}

inline ImuSample decode_imu(const TimestampedRecord& rec) {
  ByteReader r(rec.payload);
  ImuSample s;
  s.timestamp = rec.timestamp;
  r.f64s(s.acceleration);
  r.f64s(s.magnetic);
  r.f64s(s.orientation);
  return s;
}

inline Bytes encode(const BeamSweep& s) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(s.best_index));
  w.u8(static_cast<std::uint8_t>(s.snr.size()));
  w.f64s(s.snr);
  return w.take();
}

inline BeamSweep decode_sweep(const TimestampedRecord& rec) {
  ByteReader r(rec.payload);
  BeamSweep s;
  s.timestamp = rec.timestamp;
  s.best_index = r.u8();
  s.snr.resize(r.u8());
  r.f64s(s.snr);
  return s;
}

inline Bytes encode(const PositionSample& s) {
  ByteWriter w;
  w.f64(s.position.x);
  w.f64(s.position.y);
  return w.take();
}

inline PositionSample decode_position(const TimestampedRecord& rec) {
  ByteReader r(rec.payload);
  PositionSample s;
  s.timestamp = rec.timestamp;
  s.position.x = r.f64();
  s.position.y = r.f64();
  return s;
}

}  // namespace hawkrover::payload

#endif  // HAWKROVER_PAYLOAD_HPP
