#ifndef HAWKROVER_DATASET_IO_HPP
#define HAWKROVER_DATASET_IO_HPP

// Dataset container:
//   "HWKD" | u32 header_len | header | u32 CRC32(header) | frame*   (stream dataset_sample)
// header: u16 version | u8 normalization mode | u32 groups | groups f64 mean | groups f64 std
//         | u32 anchors | u32 drop reasons | per reason: str name, u32 count
// sample payload: u8 label | f64 rel_x | f64 rel_y | u16 cam_w | u16 cam_h | cam_w*cam_h f64
//         | u32 lidar_n | lidar_n f64 | u16 imu_steps | u16 imu_features | steps*features f64
//         | u8 beams | beams f64 snr_raw | beams f64 snr_norm | 4 u64 gaps (camera, lidar, imu, position)

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "hawkrover/codec.hpp"
#include "hawkrover/preprocess.hpp"
#include "hawkrover/session_log.hpp"

namespace hawkrover {

inline constexpr std::array<std::uint8_t, 4> kDatasetMagic = {0x48, 0x57, 0x4B, 0x44};  // "HWKD"
inline constexpr std::uint16_t kDatasetVersion = 1;

inline Bytes encode_sample(const AlignedSample& s) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(s.label));
  w.f64(s.rel_position.x);
  w.f64(s.rel_position.y);
  w.u16(static_cast<std::uint16_t>(s.camera_width));
  w.u16(static_cast<std::uint16_t>(s.camera_height));
  w.f64s(s.camera);
  w.u32(static_cast<std::uint32_t>(s.lidar.size()));
  w.f64s(s.lidar);
  w.u16(static_cast<std::uint16_t>(s.imu_steps));
  w.u16(static_cast<std::uint16_t>(kImuStepFeatures));
  w.f64s(s.imu_window);
  w.u8(static_cast<std::uint8_t>(s.snr_raw.size()));
  w.f64s(s.snr_raw);
  w.f64s(s.snr_norm);
  w.u64(s.camera_gap_ns);
  w.u64(s.lidar_gap_ns);
  w.u64(s.imu_gap_ns);
  w.u64(s.position_gap_ns);
  return w.take();
}

inline AlignedSample decode_sample(const TimestampedRecord& rec) {
  ByteReader r(rec.payload);
  AlignedSample s;
  s.timestamp = rec.timestamp;
  s.label = r.u8();
  s.rel_position.x = r.f64();
  s.rel_position.y = r.f64();
  s.camera_width = r.u16();
  s.camera_height = r.u16();
  s.camera.resize(s.camera_width * s.camera_height);
  r.f64s(s.camera);
  s.lidar.resize(r.u32());
  r.f64s(s.lidar);
  s.imu_steps = r.u16();
  const std::size_t features = r.u16();
  require(features == kImuStepFeatures, Errc::corrupt_header, "unexpected IMU feature width");
  s.imu_window.resize(s.imu_steps * features);
  r.f64s(s.imu_window);
  const std::size_t beams = r.u8();
  s.snr_raw.resize(beams);
  r.f64s(s.snr_raw);
  s.snr_norm.resize(beams);
  r.f64s(s.snr_norm);
  s.camera_gap_ns = r.u64();
  s.lidar_gap_ns = r.u64();
  s.imu_gap_ns = r.u64();
  s.position_gap_ns = r.u64();
  return s;
}

inline Bytes encode_dataset(const Dataset& ds) {
  ByteWriter body;
  body.u16(kDatasetVersion);
  body.u8(static_cast<std::uint8_t>(ds.stats.mode));
  body.u32(static_cast<std::uint32_t>(ds.stats.mean.size()));
  body.f64s(ds.stats.mean);
  body.f64s(ds.stats.std);
  body.u32(static_cast<std::uint32_t>(ds.anchors));
  body.u32(static_cast<std::uint32_t>(ds.dropped.size()));
  for (const auto& [reason, n] : ds.dropped) {
    body.str(reason);
    body.u32(static_cast<std::uint32_t>(n));
  }
  ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(static_cast<std::uint32_t>(body.data().size()));
  w.bytes(body.data());
  w.u32(crc32(body.data()));
  Bytes out = w.take();
  for (const auto& s : ds.samples) encode_frame_into({StreamId::dataset_sample, s.timestamp, encode_sample(s)}, out);
  return out;
}

inline Dataset decode_dataset(ByteView data) {
  require(data.size() >= 8 && std::equal(kDatasetMagic.begin(), kDatasetMagic.end(), data.begin()),
          Errc::corrupt_header, "missing dataset magic");
  ByteReader r(data.subspan(4));
  const std::size_t len = r.u32();
  require(data.size() >= 12 + len, Errc::corrupt_header, "dataset header truncated");
  const auto body = data.subspan(8, len);
  ByteReader crc_rd(data.subspan(8 + len, 4));
  require(crc_rd.u32() == crc32(body), Errc::corrupt_header, "dataset header CRC mismatch");
  Dataset ds;
  ByteReader h(body);
  require(h.u16() == kDatasetVersion, Errc::corrupt_header, "unsupported dataset version");
  ds.stats.mode = static_cast<NormalizationMode>(h.u8());
  const std::size_t groups = h.u32();
  ds.stats.mean.resize(groups);
  ds.stats.std.resize(groups);
  h.f64s(ds.stats.mean);
  h.f64s(ds.stats.std);
  ds.anchors = h.u32();
  const std::size_t reasons = h.u32();
  for (std::size_t i = 0; i < reasons; ++i) {
    auto name = h.str();
    ds.dropped[name] = h.u32();
  }
  std::size_t pos = 12 + len;
  while (pos < data.size()) {
    auto res = decode_frame(data.subspan(pos));
    require(res.ok(), Errc::corrupt_header, std::string("dataset frame: ") + to_string(res.status));
    require(res.record.stream == StreamId::dataset_sample, Errc::corrupt_header, "unexpected stream in dataset");
    ds.samples.push_back(decode_sample(res.record));
    pos += res.consumed;
  }
  return ds;
}

inline void write_bytes(const std::string& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::io_error, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  require(static_cast<bool>(out), Errc::io_error, "write failed on " + path);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::io_error, "cannot open " + path + " for writing");
  out << text;
  require(static_cast<bool>(out), Errc::io_error, "write failed on " + path);
}

inline void save_dataset(const std::string& path, const Dataset& ds) { write_bytes(path, encode_dataset(ds)); }
inline Dataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

/// One row per sample: timestamp, label, rel_x, rel_y, snr_norm_0 .. snr_norm_{n-1}.
inline std::string dataset_csv(const Dataset& ds) {
  std::ostringstream os;
  os << std::setprecision(17);
  const std::size_t beams = ds.samples.empty() ? 0 : ds.samples.front().snr_norm.size();
  os << "timestamp_ns,label,rel_x,rel_y";
  for (std::size_t k = 0; k < beams; ++k) os << ",snr_norm_" << k;
  os << '\n';
  for (const auto& s : ds.samples) {
    os << s.timestamp << ',' << s.label << ',' << s.rel_position.x << ',' << s.rel_position.y;
    for (double v : s.snr_norm) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace hawkrover

#endif  // HAWKROVER_DATASET_IO_HPP
