#ifndef HAWKROVER_CODEC_HPP
#define HAWKROVER_CODEC_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <zlib.h>

#include "hawkrover/bytes.hpp"
#include "hawkrover/error.hpp"

namespace hawkrover {

enum class StreamId : std::uint8_t {
  camera = 0,
  lidar = 1,
  imu = 2,
  mmwave = 3,
  position = 4,
  camera_rear = 5,
  dataset_sample = 6,  // AlignedSample rows inside dataset containers
};

inline constexpr std::size_t kStreamCount = 7;

inline bool is_registered(std::uint8_t id) { return id < kStreamCount; }

inline const char* stream_name(StreamId id) {
  switch (id) {
    case StreamId::camera: return "camera";
    case StreamId::lidar: return "lidar";
    case StreamId::imu: return "imu";
    case StreamId::mmwave: return "mmwave";
    case StreamId::position: return "position";
    case StreamId::camera_rear: return "camera_rear";
    case StreamId::dataset_sample: return "dataset_sample";
  }
  return "unknown";
}

struct TimestampedRecord {
  StreamId stream = StreamId::camera;
  std::uint64_t timestamp = 0;  // ns since session start
  Bytes payload;

  friend bool operator==(const TimestampedRecord&, const TimestampedRecord&) = default;
};

inline constexpr std::array<std::uint8_t, 4> kFrameMagic = {0x48, 0x57, 0x4B, 0x52};  // "HWKR"
inline constexpr std::size_t kFrameHeaderSize = 4 + 1 + 8 + 4;
inline constexpr std::size_t kFrameOverhead = kFrameHeaderSize + 4;

inline std::uint32_t crc32(ByteView data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, data.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

/// Appends one frame: magic, stream id, timestamp (LE u64), payload length (LE u32),
/// payload, CRC32 (LE u32) of everything before it.
inline void encode_frame_into(const TimestampedRecord& record, Bytes& out) {
  if (record.payload.size() > std::numeric_limits<std::uint32_t>::max()) {
    fail(Errc::payload_too_large, "payload of " + std::to_string(record.payload.size()) + " bytes");
  }
  require(is_registered(static_cast<std::uint8_t>(record.stream)), Errc::invalid_argument, "unregistered stream id");
  const std::size_t start = out.size();
  const std::size_t need = start + kFrameOverhead + record.payload.size();
  if (need > out.capacity()) out.reserve(std::max(need, out.capacity() * 2));
  ByteWriter w(out);
  w.bytes(kFrameMagic);
  w.u8(static_cast<std::uint8_t>(record.stream));
  w.u64(record.timestamp);
  w.u32(static_cast<std::uint32_t>(record.payload.size()));
  w.bytes(record.payload);
  w.u32(crc32(ByteView(out).subspan(start)));
}

inline Bytes encode_frame(const TimestampedRecord& record) {
  Bytes out;
  encode_frame_into(record, out);
  return out;
}

enum class DecodeStatus { ok, bad_magic, crc_mismatch, truncated_frame };

inline const char* to_string(DecodeStatus s) {
  switch (s) {
    case DecodeStatus::ok: return "ok";
    case DecodeStatus::bad_magic: return "bad-magic";
    case DecodeStatus::crc_mismatch: return "crc-mismatch";
    case DecodeStatus::truncated_frame: return "truncated-frame";
  }
  return "unknown";
}

struct DecodeResult {
  DecodeStatus status = DecodeStatus::ok;
  TimestampedRecord record;
  std::size_t consumed = 0;

  bool ok() const { return status == DecodeStatus::ok; }
};

/// Decodes the frame at the start of `data`. Never throws; an unregistered
/// stream id counts as a bad frame header (bad_magic).
inline DecodeResult decode_frame(ByteView data) {
  DecodeResult r;
  const std::size_t magic_len = std::min(data.size(), kFrameMagic.size());
  for (std::size_t i = 0; i < magic_len; ++i) {
    if (data[i] != kFrameMagic[i]) {
      r.status = DecodeStatus::bad_magic;
      return r;
    }
  }
  if (data.size() >= 5 && !is_registered(data[4])) {
    r.status = DecodeStatus::bad_magic;
    return r;
  }
  if (data.size() < kFrameHeaderSize) {
    r.status = DecodeStatus::truncated_frame;
    return r;
  }
  ByteReader rd(data.subspan(4));
  const auto stream = rd.u8();
  const auto ts = rd.u64();
  const std::size_t len = rd.u32();
  if (data.size() - kFrameHeaderSize < len + 4) {
    r.status = DecodeStatus::truncated_frame;
    return r;
  }
  const std::size_t body = kFrameHeaderSize + len;
  ByteReader crc_rd(data.subspan(body, 4));
  if (crc_rd.u32() != crc32(data.first(body))) {
    r.status = DecodeStatus::crc_mismatch;
    return r;
  }
  r.record.stream = static_cast<StreamId>(stream);
  r.record.timestamp = ts;
  r.record.payload.assign(data.begin() + kFrameHeaderSize, data.begin() + static_cast<std::ptrdiff_t>(body));
  r.consumed = body + 4;
  return r;
}

}  // namespace hawkrover

#endif  // HAWKROVER_CODEC_HPP
