#ifndef HAWKROVER_FRAMESTREAM_HPP
#define HAWKROVER_FRAMESTREAM_HPP

// Raw frame streams over byte pipes (stdin/stdout, files, fifos): frames back to back
// with no container header. Used by the record and replay commands.

#include <functional>
#include <istream>
#include <ostream>

#include "hawkrover/codec.hpp"
#include "hawkrover/error.hpp"

namespace hawkrover {

struct FrameStreamStats {
  std::size_t frames = 0;
  std::size_t bytes = 0;
  DecodeStatus stop = DecodeStatus::ok;  // ok = clean end of stream
};

/// Reads frames until EOF or the first undecodable frame; a trailing partial frame
/// ends the stream with truncated_frame.
inline FrameStreamStats read_frame_stream(std::istream& in, const std::function<void(TimestampedRecord&&)>& sink,
                                          std::size_t chunk = 1 << 16) {
  FrameStreamStats st;
  Bytes buf;
  std::size_t start = 0;
  bool eof = false;
  while (true) {
    const ByteView pending(buf.data() + start, buf.size() - start);
    auto res = decode_frame(pending);
    if (res.ok()) {
      st.bytes += res.consumed;
      ++st.frames;
      start += res.consumed;
      sink(std::move(res.record));
      continue;
    }
    if (res.status != DecodeStatus::truncated_frame) {
      st.stop = res.status;
      return st;
    }
    if (eof) {
      st.stop = pending.empty() ? DecodeStatus::ok : DecodeStatus::truncated_frame;
      return st;
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(start));
    start = 0;
    const std::size_t old = buf.size();
    buf.resize(old + chunk);
    in.read(reinterpret_cast<char*>(buf.data() + old), static_cast<std::streamsize>(chunk));
    buf.resize(old + static_cast<std::size_t>(in.gcount()));
    if (in.gcount() == 0) eof = true;
  }
}

inline void write_frame(std::ostream& out, const TimestampedRecord& r) {
  const Bytes f = encode_frame(r);
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size()));
  require(static_cast<bool>(out), Errc::io_error, "frame write failed");
}

}  // namespace hawkrover

#endif  // HAWKROVER_FRAMESTREAM_HPP
