#ifndef HAWKROVER_NN_CHECKPOINT_HPP
#define HAWKROVER_NN_CHECKPOINT_HPP

// Checkpoint layout, little-endian:
//   "HWKC" | u16 version | str metadata | u32 tensor count
//   per tensor: str name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
//   u32 CRC-32 of everything before it
// where str = u32 byte length + bytes.

#include <map>
#include <string>
#include <vector>

#include "hawkrover/bytes.hpp"
#include "hawkrover/codec.hpp"
#include "hawkrover/dataset_io.hpp"
#include "hawkrover/error.hpp"
#include "hawkrover/nn/tensor.hpp"
#include "hawkrover/session_log.hpp"

namespace hawkrover::nn {

inline constexpr char kCheckpointMagic[4] = {'H', 'W', 'K', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline Checkpoint snapshot(const ParameterList& params, std::string metadata = {}) {
  Checkpoint c{std::move(metadata), {}};
  for (const auto& p : params) c.tensors.emplace_back(p.name, p.param->value);
  return c;
}

inline Bytes encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(ByteView(reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 4));
  w.u16(kCheckpointVersion);
  w.str(c.metadata);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.f64s(t.values());
  }
  Bytes out = w.take();
  const std::uint32_t crc = crc32(out);
  ByteWriter tail(out);
  tail.u32(crc);
  return out;
}

inline Checkpoint decode_checkpoint(ByteView data) {
  require(data.size() >= 14, Errc::corrupt_header, "checkpoint too short");
  const std::uint32_t stored = ByteReader(data.subspan(data.size() - 4)).u32();
  require(crc32(data.first(data.size() - 4)) == stored, Errc::corrupt_header, "checkpoint checksum mismatch");
  ByteReader r(data.first(data.size() - 4));
  for (char m : kCheckpointMagic) require(r.u8() == static_cast<std::uint8_t>(m), Errc::corrupt_header, "not a checkpoint");
  const auto version = r.u16();
  require(version == kCheckpointVersion, Errc::corrupt_header, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.metadata = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    require(rank <= 8, Errc::corrupt_header, "implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    const std::size_t n = Tensor::count(shape);
    require(n <= r.remaining() / 8, Errc::corrupt_header, "tensor larger than file");
    std::vector<double> values(n);
    r.f64s(values);
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  require(r.remaining() == 0, Errc::corrupt_header, "trailing bytes in checkpoint");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) { write_bytes(path, encode_checkpoint(c)); }

inline Checkpoint load_checkpoint(const std::string& path) {
  const Bytes data = read_file(path);
  return decode_checkpoint(data);
}

/// Copies stored values into live parameters; names and shapes must match exactly.
inline void restore(const ParameterList& params, const Checkpoint& c) {
  require(params.size() == c.tensors.size(), Errc::shape_mismatch,
          "checkpoint holds " + std::to_string(c.tensors.size()) + " tensors, model has " +
              std::to_string(params.size()));
  for (const auto& p : params) {
    const Tensor* t = c.find(p.name);
    require(t != nullptr, Errc::shape_mismatch, "checkpoint lacks tensor " + p.name);
    require(t->same_shape(p.param->value), Errc::shape_mismatch,
            p.name + ": checkpoint shape " + t->shape_string() + " vs model " + p.param->value.shape_string());
    p.param->value = *t;
  }
}

}  // namespace hawkrover::nn

#endif  // HAWKROVER_NN_CHECKPOINT_HPP
