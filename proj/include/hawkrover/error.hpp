#ifndef HAWKROVER_ERROR_HPP
#define HAWKROVER_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hawkrover {

enum class Errc {
  invalid_argument,
  invalid_pose,
  out_of_range,
  invalid_rate,
  shape_mismatch,
  label_out_of_range,
  payload_too_large,
  bus_closed,
  io_error,
  corrupt_header,
  no_mmwave_data,
  missing_stream,
  degenerate_distribution,
  non_monotone_timestamps,
  nan_loss,
  modality_disabled,
  window_length_mismatch,
  insufficient_data,
  length_mismatch,
  missing_context,
  config_error,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::invalid_pose: return "invalid-pose";
    case Errc::out_of_range: return "out-of-range";
    case Errc::invalid_rate: return "invalid-rate";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::label_out_of_range: return "label-out-of-range";
    case Errc::payload_too_large: return "payload-too-large";
    case Errc::bus_closed: return "bus-closed";
    case Errc::io_error: return "io-error";
    case Errc::corrupt_header: return "corrupt-header";
    case Errc::no_mmwave_data: return "no-mmwave-data";
    case Errc::missing_stream: return "missing-stream";
    case Errc::degenerate_distribution: return "degenerate-distribution";
    case Errc::non_monotone_timestamps: return "non-monotone-timestamps";
    case Errc::nan_loss: return "nan-loss";
    case Errc::modality_disabled: return "modality-disabled";
    case Errc::window_length_mismatch: return "window-length-mismatch";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::length_mismatch: return "length-mismatch";
    case Errc::missing_context: return "missing-context";
    case Errc::config_error: return "config-error";
  }
  return "unknown";
}

/// Exception carrying a machine-readable error class next to the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace hawkrover

#endif  // HAWKROVER_ERROR_HPP
