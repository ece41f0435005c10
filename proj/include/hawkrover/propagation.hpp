#ifndef HAWKROVER_PROPAGATION_HPP
#define HAWKROVER_PROPAGATION_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "hawkrover/error.hpp"
#include "hawkrover/geometry.hpp"
#include "hawkrover/scene.hpp"

namespace hawkrover {

inline constexpr std::size_t kBeamCount = 36;
inline constexpr double kSpeedOfLight = 299792458.0;

struct Beam {
  double center = 0.0;         // radians, UE body frame
  double mainlobe_width = 0.0; // radians
  double gain_db = 0.0;
  double sidelobe_db = 0.0;
};

/// Uniform azimuth codebook with a flat two-level (mainlobe / sidelobe) pattern.
class BeamCodebook {
 public:
  BeamCodebook() = default;
  explicit BeamCodebook(std::vector<Beam> beams) : beams_(std::move(beams)) {}

  std::size_t size() const { return beams_.size(); }
  const Beam& operator[](std::size_t k) const { return beams_[k]; }
  std::span<const Beam> beams() const { return beams_; }
  double spacing() const { return kTwoPi / static_cast<double>(beams_.size()); }

  /// Gain of beam k toward a body-frame angle.
  double gain_toward(std::size_t k, double body_angle) const {
    const Beam& b = beams_[k];
    return std::abs(angle_diff(body_angle, b.center)) <= 0.5 * b.mainlobe_width ? b.gain_db : b.sidelobe_db;
  }

 private:
  std::vector<Beam> beams_;
};

inline BeamCodebook build_codebook(std::size_t n_beams, double mainlobe_width, double gain_db, double sidelobe_db) {
  require(n_beams >= 2, Errc::invalid_argument, "codebook needs at least 2 beams");
  require(mainlobe_width > 0.0, Errc::invalid_argument, "mainlobe width must be positive");
  require(gain_db > sidelobe_db, Errc::invalid_argument, "mainlobe gain must exceed sidelobe floor");
  std::vector<Beam> beams(n_beams);
  for (std::size_t k = 0; k < n_beams; ++k) {
    beams[k] = {kTwoPi * static_cast<double>(k) / static_cast<double>(n_beams), mainlobe_width, gain_db, sidelobe_db};
  }
  return BeamCodebook(std::move(beams));
}

enum class PathKind : std::uint8_t { line_of_sight, single_reflection, penetration };

struct PropagationPath {
  std::vector<Vec2> vertices;  // tx ... rx
  PathKind kind = PathKind::line_of_sight;
  double total_length = 0.0;
  double extra_loss_db = 0.0;

  /// Departure angle at the transmitter, world frame.
  double departure_angle() const { return bearing(vertices[0], vertices[1]); }
};

namespace detail {

// Loss accumulated by a straight leg, or infinity if something opaque is in the way.
// `skip_wall` excludes the wall a reflection bounces off.
inline double leg_loss(const Scene& scene, Vec2 p, Vec2 q, std::ptrdiff_t skip_wall = -1) {
  for (std::size_t i = 0; i < scene.walls.size(); ++i) {
    if (static_cast<std::ptrdiff_t>(i) == skip_wall) continue;
    if (segments_cross(p, q, scene.walls[i].a, scene.walls[i].b)) return kInfiniteLoss;
  }
  double loss = 0.0;
  for (const auto& b : scene.blockers) {
    if (b.shape.clipped_fraction(p, q) > 1e-12) {
      if (b.opaque()) return kInfiniteLoss;
      loss += b.penetration_loss_db;
    }
  }
  return loss;
}

}  // namespace detail

/// LoS / penetration path first, then one specular path per wall in scene order.
inline std::vector<PropagationPath> trace_paths(const Scene& scene, Vec2 tx, Vec2 rx, int max_reflections) {
  require(max_reflections == 0 || max_reflections == 1, Errc::invalid_argument,
          "only max_reflections 0 or 1 is supported");
  require(scene.bounds.contains(tx) && scene.bounds.contains(rx), Errc::invalid_argument,
          "path endpoints must lie inside the scene bounds");
  std::vector<PropagationPath> paths;

  const double direct = detail::leg_loss(scene, tx, rx);
  if (!std::isinf(direct)) {
    paths.push_back({{tx, rx}, direct > 0.0 ? PathKind::penetration : PathKind::line_of_sight, distance(tx, rx), direct});
  }
  if (max_reflections == 0) return paths;

  for (std::size_t i = 0; i < scene.walls.size(); ++i) {
    const Wall& w = scene.walls[i];
    if (std::isinf(w.reflection_loss_db)) continue;
    const Vec2 e = w.b - w.a;
    const double side_tx = cross(e, tx - w.a);
    const double side_rx = cross(e, rx - w.a);
    if (side_tx * side_rx <= 0.0) continue;  // must be strictly on the same side

    const Vec2 image = reflect_across(rx, w.a, w.b);
    const Vec2 d = image - tx;
    const double denom = cross(d, e);
    if (denom == 0.0) continue;
    const double u = cross(w.a - tx, d) / denom;  // position along the wall
    if (u < 0.0 || u > 1.0) continue;
    const Vec2 spec = w.a + u * e;

    const double l1 = detail::leg_loss(scene, tx, spec, static_cast<std::ptrdiff_t>(i));
    if (std::isinf(l1)) continue;
    const double l2 = detail::leg_loss(scene, spec, rx, static_cast<std::ptrdiff_t>(i));
    if (std::isinf(l2)) continue;

    paths.push_back({{tx, spec, rx}, PathKind::single_reflection, distance(tx, spec) + distance(spec, rx),
                     w.reflection_loss_db + l1 + l2});
  }
  return paths;
}

/// Free-space path loss (negated) minus interaction losses.
inline double path_gain_db(const PropagationPath& path, double carrier_hz) {
  require(path.total_length > 0.0, Errc::invalid_argument, "zero-length path");
  const double fspl = 20.0 * std::log10(4.0 * std::numbers::pi * path.total_length * carrier_hz / kSpeedOfLight);
  return -fspl - path.extra_loss_db;
}

/// Index of the maximum; the lowest index wins ties.
inline std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

struct BeamSweep {
  std::uint64_t timestamp = 0;
  std::vector<double> snr;  // dB, one per codebook entry
  std::size_t best_index = 0;
};

struct RadioParams {
  double carrier_hz = 60.0e9;
  double tx_power_dbm = 10.0;
  double noise_floor_dbm = -70.0;
  double sentinel_snr_db = -40.0;
};

/// Exhaustive sweep of every UE beam toward an omnidirectional base station.
inline BeamSweep sweep(const Scene& scene, const Pose2& ue, const BeamCodebook& codebook, const RadioParams& radio,
                       std::uint64_t timestamp) {
  if (!scene.bounds.contains(ue.position)) fail(Errc::invalid_pose, "UE outside scene bounds");
  if (scene.inside_blocker(ue.position)) fail(Errc::invalid_pose, "UE inside a blocker");
  if (ue.position == scene.bs_pose.position) fail(Errc::invalid_pose, "UE co-located with the base station");

  const auto paths = trace_paths(scene, ue.position, scene.bs_pose.position, 1);
  std::vector<double> departure(paths.size());
  std::vector<double> gain(paths.size());
  for (std::size_t p = 0; p < paths.size(); ++p) {
    departure[p] = paths[p].departure_angle() - ue.heading;
    gain[p] = path_gain_db(paths[p], radio.carrier_hz);
  }

  BeamSweep out;
  out.timestamp = timestamp;
  out.snr.resize(codebook.size());
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    if (paths.empty()) {
      out.snr[k] = radio.sentinel_snr_db;
      continue;
    }
    double linear_mw = 0.0;
    for (std::size_t p = 0; p < paths.size(); ++p) {
      linear_mw += std::pow(10.0, (radio.tx_power_dbm + codebook.gain_toward(k, departure[p]) + gain[p]) / 10.0);
    }
    out.snr[k] = 10.0 * std::log10(linear_mw) - radio.noise_floor_dbm;
  }
  out.best_index = argmax_lowest(out.snr);
  return out;
}

}  // namespace hawkrover

#endif  // HAWKROVER_PROPAGATION_HPP
