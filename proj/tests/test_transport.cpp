#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "hawkrover/bus.hpp"
#include "hawkrover/codec.hpp"
#include "hawkrover/framestream.hpp"
#include "hawkrover/session_log.hpp"
#include "support/transport.hpp"

using namespace hawkrover;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hawkrover_transport_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

// ---------------------------------------------------------------- bytes

TEST(Bytes, LittleEndianLayout) {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x03040506);
  w.u64(0x0708090a0b0c0d0eULL);
  const Bytes expect = {0x02, 0x01, 0x06, 0x05, 0x04, 0x03, 0x0e, 0x0d, 0x0c, 0x0b, 0x0a, 0x09, 0x08, 0x07};
  EXPECT_EQ(w.data(), expect);
  ByteReader r(w.data());
  EXPECT_EQ(r.u16(), 0x0102);
  EXPECT_EQ(r.u32(), 0x03040506u);
  EXPECT_EQ(r.u64(), 0x0708090a0b0c0d0eULL);
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.u8(), Error);
}

TEST(Bytes, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
}

// ---------------------------------------------------------------- codec

TEST(Codec, FrameLayout) {
  const TimestampedRecord r{StreamId::lidar, 0x1122334455667788ULL, {0xAA, 0xBB}};
  const auto f = encode_frame(r);
  ASSERT_EQ(f.size(), kFrameOverhead + 2);
  EXPECT_EQ(f[0], 'H');
  EXPECT_EQ(f[3], 'R');
  EXPECT_EQ(f[4], 1);
  EXPECT_EQ(f[5], 0x88);
  EXPECT_EQ(f[13], 2);
  EXPECT_EQ(f[17], 0xAA);
  // CRC-32 of the bytes before it, IEEE polynomial, computed bitwise here.
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < f.size() - 4; ++i) {
    crc ^= f[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  crc ^= 0xFFFFFFFFu;
  ByteReader tail(ByteView(f).subspan(f.size() - 4));
  EXPECT_EQ(tail.u32(), crc);
}

TEST(Codec, RoundTripRandomRecords) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const auto r = transport::random_record(rng, i % 100 == 0 ? 1 << 16 : 256);
    const auto f = encode_frame(r);
    const auto d = decode_frame(f);
    ASSERT_TRUE(d.ok());
    ASSERT_EQ(d.consumed, f.size());
    ASSERT_EQ(d.record, r);
  }
}

TEST(Codec, LargePayloadRoundTrip) {
  std::mt19937_64 rng(2);
  TimestampedRecord r{StreamId::camera, 42, Bytes(1 << 20)};
  for (auto& b : r.payload) b = static_cast<std::uint8_t>(rng());
  const auto d = decode_frame(encode_frame(r));
  ASSERT_TRUE(d.ok());
  EXPECT_EQ(d.record, r);
}

TEST(Codec, EmptyPayload) {
  const TimestampedRecord r{StreamId::position, 7, {}};
  const auto d = decode_frame(encode_frame(r));
  ASSERT_TRUE(d.ok());
  EXPECT_EQ(d.record, r);
}

TEST(Codec, BadMagic) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto f = encode_frame(transport::random_record(rng, 64));
    f[rng() % 4] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_EQ(decode_frame(f).status, DecodeStatus::bad_magic);
  }
}

TEST(Codec, UnregisteredStreamIdIsBadHeader) {
  auto f = encode_frame({StreamId::imu, 1, {1, 2, 3}});
  f[4] = 200;
  EXPECT_EQ(decode_frame(f).status, DecodeStatus::bad_magic);
  EXPECT_THROW(encode_frame({static_cast<StreamId>(9), 1, {}}), Error);
}

TEST(Codec, CrcMismatch) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    auto f = encode_frame(transport::random_record(rng, 64));
    // any byte after the stream id: timestamp, length-preserving payload, or the CRC
    std::size_t pos = 5 + rng() % (f.size() - 5);
    if (pos >= 13 && pos < 17) pos = f.size() - 1;  // corrupting the length reads as truncation
    f[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_EQ(decode_frame(f).status, DecodeStatus::crc_mismatch) << pos;
  }
}

TEST(Codec, Truncation) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto f = encode_frame(transport::random_record(rng, 64));
    const std::size_t cut = rng() % f.size();
    const auto d = decode_frame(ByteView(f).first(cut));
    EXPECT_EQ(d.status, DecodeStatus::truncated_frame) << cut;
  }
}

TEST(Codec, FuzzNeverThrows) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20000; ++i) {
    Bytes junk(rng() % 64);
    for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
    if (rng() % 2 && junk.size() >= 4) std::copy(kFrameMagic.begin(), kFrameMagic.end(), junk.begin());
    DecodeResult d;
    EXPECT_NO_THROW(d = decode_frame(junk));
    if (d.ok()) {
      EXPECT_LE(d.consumed, junk.size());
    }
  }
}

TEST(Codec, ConcatenatedFramesDecodeInSequence) {
  std::mt19937_64 rng(7);
  Bytes stream;
  std::vector<TimestampedRecord> recs;
  for (int i = 0; i < 100; ++i) {
    recs.push_back(transport::random_record(rng, 128));
    encode_frame_into(recs.back(), stream);
  }
  std::size_t pos = 0;
  for (const auto& r : recs) {
    const auto d = decode_frame(ByteView(stream).subspan(pos));
    ASSERT_TRUE(d.ok());
    EXPECT_EQ(d.record, r);
    pos += d.consumed;
  }
  EXPECT_EQ(pos, stream.size());
}

// ---------------------------------------------------------------- frame streams

TEST(FrameStream, ReadsAcrossChunkBoundaries) {
  std::mt19937_64 rng(8);
  std::stringstream ss;
  std::vector<TimestampedRecord> recs;
  for (int i = 0; i < 50; ++i) {
    recs.push_back(transport::random_record(rng, 300));
    write_frame(ss, recs.back());
  }
  const std::string image = ss.str();
  for (std::size_t chunk : {1u, 7u, 64u, 4096u}) {
    std::istringstream in(image);
    std::vector<TimestampedRecord> got;
    const auto st = read_frame_stream(in, [&](TimestampedRecord&& r) { got.push_back(std::move(r)); }, chunk);
    EXPECT_EQ(st.stop, DecodeStatus::ok);
    EXPECT_EQ(st.frames, recs.size());
    EXPECT_EQ(st.bytes, image.size());
    EXPECT_EQ(got, recs);
  }
}

TEST(FrameStream, PartialTailIsTruncation) {
  std::stringstream ss;
  write_frame(ss, {StreamId::imu, 1, {1, 2, 3}});
  write_frame(ss, {StreamId::imu, 2, {4, 5, 6}});
  std::string image = ss.str();
  image.resize(image.size() - 3);
  std::istringstream in(image);
  std::size_t n = 0;
  const auto st = read_frame_stream(in, [&](TimestampedRecord&&) { ++n; }, 5);
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(st.stop, DecodeStatus::truncated_frame);
}

TEST(FrameStream, GarbageStopsWithBadMagic) {
  std::istringstream in(std::string("not a frame at all"));
  const auto st = read_frame_stream(in, [](TimestampedRecord&&) {});
  EXPECT_EQ(st.stop, DecodeStatus::bad_magic);
  EXPECT_EQ(st.frames, 0u);
}

// ---------------------------------------------------------------- bus

TEST(Bus, DeliversEveryRecordInPublishOrder) {
  Bus bus(8);
  auto lidar = bus.subscribe({StreamId::lidar});
  auto all = bus.subscribe({StreamId::lidar, StreamId::imu});
  constexpr std::uint64_t kPerStream = 2000;
  std::thread producer([&] {
    for (std::uint64_t i = 0; i < kPerStream; ++i) {
      bus.publish({StreamId::lidar, i, {static_cast<std::uint8_t>(i)}});
      bus.publish({StreamId::imu, i, {}});
      bus.publish({StreamId::camera, i, {}});
    }
    bus.close();
  });
  std::map<StreamId, std::uint64_t> seen_all;
  std::uint64_t seen_lidar = 0;
  std::thread c1([&] {
    while (auto r = lidar->next()) {
      EXPECT_EQ(r->stream, StreamId::lidar);
      EXPECT_EQ(r->timestamp, seen_lidar);
      ++seen_lidar;
    }
  });
  std::thread c2([&] {
    while (auto r = all->next()) {
      EXPECT_NE(r->stream, StreamId::camera);
      EXPECT_EQ(r->timestamp, seen_all[r->stream]);
      ++seen_all[r->stream];
    }
  });
  producer.join();
  c1.join();
  c2.join();
  EXPECT_EQ(seen_lidar, kPerStream);
  EXPECT_EQ(seen_all[StreamId::lidar], kPerStream);
  EXPECT_EQ(seen_all[StreamId::imu], kPerStream);
  EXPECT_EQ(bus.published(), 3 * kPerStream);
}

TEST(Bus, ManyProducersLoseNothing) {
  Bus bus(4);
  auto sub = bus.subscribe({StreamId::camera, StreamId::lidar, StreamId::imu, StreamId::mmwave});
  constexpr int kProducers = 4;
  constexpr std::uint64_t kEach = 1500;
  std::vector<std::thread> producers;
  for (int p = 0; p < kProducers; ++p) {
    producers.emplace_back([&, p] {
      for (std::uint64_t i = 0; i < kEach; ++i) bus.publish({static_cast<StreamId>(p), i, {}});
    });
  }
  std::map<StreamId, std::uint64_t> next_ts;
  std::uint64_t total = 0;
  std::thread consumer([&] {
    while (auto r = sub->next()) {
      EXPECT_EQ(r->timestamp, next_ts[r->stream]);
      ++next_ts[r->stream];
      ++total;
    }
  });
  for (auto& t : producers) t.join();
  bus.close();
  consumer.join();
  EXPECT_EQ(total, kProducers * kEach);
}

TEST(Bus, BackpressureBlocksInsteadOfDropping) {
  Bus bus(2);
  auto sub = bus.subscribe({StreamId::imu});
  std::atomic<int> published{0};
  std::thread producer([&] {
    for (int i = 0; i < 10; ++i) {
      bus.publish({StreamId::imu, static_cast<std::uint64_t>(i), {}});
      ++published;
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(published.load(), 2);
  EXPECT_EQ(sub->pending(), 2u);
  for (int i = 0; i < 10; ++i) {
    auto r = sub->next();
    ASSERT_TRUE(r);
    EXPECT_EQ(r->timestamp, static_cast<std::uint64_t>(i));
  }
  producer.join();
  EXPECT_GT(bus.blocked_publishes(), 0u);
}

TEST(Bus, CancelReleasesBlockedPublisher) {
  Bus bus(1);
  auto slow = bus.subscribe({StreamId::imu});
  auto fast = bus.subscribe({StreamId::imu});
  std::atomic<bool> done{false};
  std::thread producer([&] {
    for (int i = 0; i < 50; ++i) bus.publish({StreamId::imu, static_cast<std::uint64_t>(i), {}});
    done = true;
  });
  std::thread drain([&] {
    for (int i = 0; i < 50; ++i) ASSERT_TRUE(fast->next());
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_FALSE(done.load());
  slow->cancel();
  producer.join();
  drain.join();
  EXPECT_TRUE(done.load());
  EXPECT_FALSE(slow->try_next());
}

TEST(Bus, CloseDrainsThenEnds) {
  Bus bus(16);
  auto sub = bus.subscribe({StreamId::mmwave});
  bus.publish({StreamId::mmwave, 1, {}});
  bus.publish({StreamId::mmwave, 2, {}});
  bus.close();
  EXPECT_TRUE(bus.closed());
  EXPECT_EQ(sub->next()->timestamp, 1u);
  EXPECT_EQ(sub->next()->timestamp, 2u);
  EXPECT_FALSE(sub->next());
  try {
    bus.publish({StreamId::mmwave, 3, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bus_closed);
  }
  EXPECT_THROW(bus.subscribe({StreamId::imu}), Error);
}

TEST(Bus, CloseWakesBlockedConsumer) {
  Bus bus(4);
  auto sub = bus.subscribe({StreamId::camera});
  std::thread consumer([&] { EXPECT_FALSE(sub->next()); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  bus.close();
  consumer.join();
}

TEST(Bus, CloseFailsBlockedPublisher) {
  Bus bus(1);
  auto sub = bus.subscribe({StreamId::camera});
  bus.publish({StreamId::camera, 0, {}});
  std::atomic<bool> threw{false};
  std::thread producer([&] {
    try {
      bus.publish({StreamId::camera, 1, {}});
    } catch (const Error& e) {
      threw = e.code() == Errc::bus_closed;
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  bus.close();
  producer.join();
  EXPECT_TRUE(threw.load());
}

// ---------------------------------------------------------------- session log

TEST(SessionLog, WriteReadRoundTrip) {
  std::mt19937_64 rng(9);
  const auto path = temp_file("roundtrip.hwks").string();
  const SessionHeader h{kLogVersion, 0x1111, 0x2222, 123456789};
  const auto recs = transport::random_feed(rng, 500);
  write_log(path, h, recs);
  const auto log = read_log(path);
  EXPECT_EQ(log.header, h);
  EXPECT_EQ(log.records, recs);
  EXPECT_FALSE(log.truncated);
  EXPECT_EQ(log.tail_status, DecodeStatus::ok);
  EXPECT_EQ(log.valid_bytes, fs::file_size(path));
}

TEST(SessionLog, RejectsBackwardsTimestamps) {
  const auto path = temp_file("backwards.hwks").string();
  LogWriter w(path, {});
  w.append({StreamId::imu, 10, {}});
  w.append({StreamId::lidar, 5, {}});
  try {
    w.append({StreamId::imu, 9, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_monotone_timestamps);
  }
}

TEST(SessionLog, TruncationRecoversCompletePrefix) {
  std::mt19937_64 rng(10);
  const auto path = temp_file("truncated.hwks").string();
  const auto recs = transport::random_feed(rng, 200);
  write_log(path, {}, recs);
  const Bytes full = read_file(path);
  std::vector<std::size_t> ends;  // file offset after each frame
  std::size_t pos = encode_log_header({}).size();
  for (const auto& r : recs) {
    pos += kFrameOverhead + r.payload.size();
    ends.push_back(pos);
  }
  ASSERT_EQ(ends.back(), full.size());
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cut = encode_log_header({}).size() + rng() % (full.size() - encode_log_header({}).size());
    const auto log = parse_log(ByteView(full).first(cut));
    const auto complete = static_cast<std::size_t>(std::upper_bound(ends.begin(), ends.end(), cut) - ends.begin());
    ASSERT_EQ(log.records.size(), complete);
    EXPECT_TRUE(std::equal(log.records.begin(), log.records.end(), recs.begin()));
    const bool clean = complete > 0 ? ends[complete - 1] == cut : cut == encode_log_header({}).size();
    EXPECT_EQ(log.truncated, !clean);
    EXPECT_EQ(log.valid_bytes, complete > 0 ? ends[complete - 1] : encode_log_header({}).size());
  }
}

TEST(SessionLog, AppendAfterRecoveryYieldsValidLog) {
  std::mt19937_64 rng(11);
  const auto path = temp_file("recover.hwks").string();
  auto recs = transport::random_feed(rng, 50);
  write_log(path, {}, recs);
  fs::resize_file(path, fs::file_size(path) - 7);
  auto log = read_log(path);
  ASSERT_TRUE(log.truncated);
  fs::resize_file(path, log.valid_bytes);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    const auto f = encode_frame({StreamId::camera, 1'000'000'000, {9, 9}});
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size()));
  }
  const auto again = read_log(path);
  EXPECT_FALSE(again.truncated);
  ASSERT_EQ(again.records.size(), 50u);
  EXPECT_EQ(again.records.back().payload, (Bytes{9, 9}));
}

TEST(SessionLog, CorruptMidFrameStopsWithCrcStatus) {
  std::mt19937_64 rng(12);
  const auto path = temp_file("corrupt.hwks").string();
  const auto recs = transport::random_feed(rng, 20);
  write_log(path, {}, recs);
  Bytes data = read_file(path);
  const std::size_t header = encode_log_header({}).size();
  const std::size_t third = header + 2 * kFrameOverhead + recs[0].payload.size() + recs[1].payload.size();
  data[third + 8] ^= 0xFF;  // timestamp byte of the third frame
  const auto log = parse_log(data);
  EXPECT_EQ(log.records.size(), 2u);
  EXPECT_EQ(log.tail_status, DecodeStatus::crc_mismatch);
  EXPECT_FALSE(log.truncated);
}

TEST(SessionLog, HeaderErrors) {
  Bytes data = encode_log_header({kLogVersion, 1, 2, 3});
  data[10] ^= 1;
  try {
    parse_log(data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::corrupt_header);
  }
  EXPECT_THROW(parse_log(Bytes{'N', 'O', 'P', 'E', 0, 0, 0, 0}), Error);
  EXPECT_THROW(parse_log(Bytes{'H', 'W'}), Error);
  EXPECT_THROW(read_log(temp_file("does-not-exist.hwks").string()), Error);
}
