#ifndef HAWKROVER_SESSION_LOG_HPP
#define HAWKROVER_SESSION_LOG_HPP

// Session log file:
//   "HWKS" | u32 header_len | header | u32 CRC32(header) | frame*
// header (v1, 26 bytes): u16 version | u64 scene_hash | u64 config_hash | u64 start_time_ns
// Frames use the wire framing from codec.hpp, one after another.

#include <array>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "hawkrover/bytes.hpp"
#include "hawkrover/codec.hpp"
#include "hawkrover/error.hpp"

namespace hawkrover {

inline constexpr std::array<std::uint8_t, 4> kLogMagic = {0x48, 0x57, 0x4B, 0x53};  // "HWKS"
inline constexpr std::uint16_t kLogVersion = 1;

struct SessionHeader {
  std::uint16_t version = kLogVersion;
  std::uint64_t scene_hash = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t start_time_ns = 0;

  friend bool operator==(const SessionHeader&, const SessionHeader&) = default;
};

struct SessionLog {
  SessionHeader header;
  std::vector<TimestampedRecord> records;
  bool truncated = false;                        // trailing partial frame dropped
  DecodeStatus tail_status = DecodeStatus::ok;   // why reading stopped early, if it did
  std::size_t valid_bytes = 0;                   // file prefix holding header + complete frames

  std::size_t count(StreamId id) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.stream == id;
    return n;
  }
};

inline Bytes encode_log_header(const SessionHeader& h) {
  ByteWriter body;
  body.u16(h.version);
  body.u64(h.scene_hash);
  body.u64(h.config_hash);
  body.u64(h.start_time_ns);
  ByteWriter w;
  w.bytes(kLogMagic);
  w.u32(static_cast<std::uint32_t>(body.data().size()));
  w.bytes(body.data());
  w.u32(crc32(body.data()));
  return w.take();
}

/// Single-owner append-only writer. Enforces per-stream non-decreasing timestamps.
class LogWriter {
 public:
  LogWriter(const std::string& path, const SessionHeader& header) : path_(path), out_(path, std::ios::binary) {
    require(static_cast<bool>(out_), Errc::io_error, "cannot open " + path + " for writing");
    write(encode_log_header(header));
  }
  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;
  ~LogWriter() {
    if (out_.is_open()) out_.close();
  }

  void append(const TimestampedRecord& record) {
    auto& last = last_ts_[static_cast<std::size_t>(record.stream)];
    require(record.timestamp >= last, Errc::non_monotone_timestamps,
            std::string("stream ") + stream_name(record.stream) + " went back in time");
    last = record.timestamp;
    scratch_.clear();
    encode_frame_into(record, scratch_);
    write(scratch_);
    ++frames_;
  }

  void close() {
    out_.flush();
    require(static_cast<bool>(out_), Errc::io_error, "write failed on " + path_);
    out_.close();
  }

  std::size_t frames() const { return frames_; }

 private:
  void write(const Bytes& b) {
    out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    require(static_cast<bool>(out_), Errc::io_error, "write failed on " + path_);
  }

  std::string path_;
  std::ofstream out_;
  Bytes scratch_;
  std::array<std::uint64_t, kStreamCount> last_ts_{};
  std::size_t frames_ = 0;
};

inline void write_log(const std::string& path, const SessionHeader& header, std::span<const TimestampedRecord> feed) {
  LogWriter w(path, header);
  for (const auto& r : feed) w.append(r);
  w.close();
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  Bytes data(size);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in) || size == 0, Errc::io_error, "read failed on " + path);
  return data;
}

/// Parses an in-memory log image. A damaged tail stops reading but is not an error.
inline SessionLog parse_log(ByteView data) {
  SessionLog log;
  require(data.size() >= 8 && std::equal(kLogMagic.begin(), kLogMagic.end(), data.begin()), Errc::corrupt_header,
          "missing session log magic");
  ByteReader r(data.subspan(4));
  const std::size_t header_len = r.u32();
  require(data.size() >= 8 + header_len + 4, Errc::corrupt_header, "header extends past end of file");
  const auto body = data.subspan(8, header_len);
  ByteReader crc_rd(data.subspan(8 + header_len, 4));
  require(crc_rd.u32() == crc32(body), Errc::corrupt_header, "header CRC mismatch");
  require(header_len >= 26, Errc::corrupt_header, "header too short");
  ByteReader h(body);
  log.header.version = h.u16();
  require(log.header.version == kLogVersion, Errc::corrupt_header, "unsupported log version");
  log.header.scene_hash = h.u64();
  log.header.config_hash = h.u64();
  log.header.start_time_ns = h.u64();

  std::size_t pos = 8 + header_len + 4;
  while (pos < data.size()) {
    auto res = decode_frame(data.subspan(pos));
    if (!res.ok()) {
      log.tail_status = res.status;
      log.truncated = res.status == DecodeStatus::truncated_frame;
      break;
    }
    pos += res.consumed;
    log.records.push_back(std::move(res.record));
  }
  log.valid_bytes = pos;
  return log;
}

inline SessionLog read_log(const std::string& path) { return parse_log(read_file(path)); }

}  // namespace hawkrover

#endif  // HAWKROVER_SESSION_LOG_HPP
