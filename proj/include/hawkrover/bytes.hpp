#ifndef HAWKROVER_BYTES_HPP
#define HAWKROVER_BYTES_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "hawkrover/error.hpp"

namespace hawkrover {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

// Little-endian append-only writer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : external_(&out) {}

  void u8(std::uint8_t v) { buf().push_back(v); }
  void u16(std::uint16_t v) { put_int(v); }
  void u32(std::uint32_t v) { put_int(v); }
  void u64(std::uint64_t v) { put_int(v); }
  void f64(double v) { put_int(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void bytes(ByteView b) { buf().insert(buf().end(), b.begin(), b.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf().insert(buf().end(), s.begin(), s.end());
  }

  Bytes& data() { return buf(); }
  Bytes take() { return std::move(buf()); }

 private:
  template <typename T>
  void put_int(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf().push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& buf() { return external_ ? *external_ : own_; }

  Bytes own_;
  Bytes* external_ = nullptr;
};

// Little-endian cursor; throws Errc::out_of_range when reading past the end.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_int<std::uint8_t>()); }
  std::uint16_t u16() { return get_int<std::uint16_t>(); }
  std::uint32_t u32() { return get_int<std::uint32_t>(); }
  std::uint64_t u64() { return get_int<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_int<std::uint64_t>()); }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  ByteView bytes(std::size_t n) {
    need(n);
    auto view = data_.subspan(pos_, n);
    pos_ += n;
    return view;
  }
  std::string str() {
    auto n = u32();
    auto view = bytes(n);
    return std::string(view.begin(), view.end());
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(Errc::out_of_range, "read past end of buffer");
  }
  template <typename T>
  T get_int() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

/// 64-bit FNV-1a, used for content hashes in headers and stage caches.
inline std::uint64_t fnv1a64(ByteView data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (auto b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return fnv1a64(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()), seed);
}

}  // namespace hawkrover

#endif  // HAWKROVER_BYTES_HPP
