#ifndef HAWKROVER_SCENE_HPP
#define HAWKROVER_SCENE_HPP

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hawkrover/error.hpp"
#include "hawkrover/geometry.hpp"

namespace hawkrover {

inline constexpr double kInfiniteLoss = std::numeric_limits<double>::infinity();

struct Rect {
  double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(Vec2 p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
};

/// Reflective line segment. An infinite reflection loss makes it absorbing
/// (visible to LiDAR and camera, never a specular path).
struct Wall {
  Vec2 a;
  Vec2 b;
  double reflection_loss_db = 10.0;
};

/// Convex obstacle; infinite penetration loss means opaque.
struct Blocker {
  ConvexPolygon shape;
  double penetration_loss_db = 25.0;

  bool opaque() const { return std::isinf(penetration_loss_db); }
};

struct Scene {
  Rect bounds;
  std::vector<Wall> walls;
  std::vector<Blocker> blockers;
  Pose2 bs_pose;

  bool inside_blocker(Vec2 p) const {
    for (const auto& b : blockers) {
      if (b.shape.contains(p)) return true;
    }
    return false;
  }

  void validate() const {
    require(bounds.width() > 0.0 && bounds.height() > 0.0, Errc::invalid_argument, "scene bounds are degenerate");
    for (const auto& w : walls) {
      require(bounds.contains(w.a) && bounds.contains(w.b), Errc::invalid_argument, "wall outside scene bounds");
      require(w.reflection_loss_db >= 0.0, Errc::invalid_argument, "negative reflection loss");
      require(!(w.a == w.b), Errc::invalid_argument, "zero-length wall");
    }
    for (const auto& b : blockers) {
      require(b.shape.size() >= 3, Errc::invalid_argument, "blocker needs at least 3 vertices");
      for (auto v : b.shape.vertices) require(bounds.contains(v), Errc::invalid_argument, "blocker outside scene bounds");
      require(b.penetration_loss_db >= 0.0, Errc::invalid_argument, "negative penetration loss");
    }
    require(bounds.contains(bs_pose.position), Errc::invalid_argument, "base station outside scene bounds");
    require(!inside_blocker(bs_pose.position), Errc::invalid_argument, "base station inside a blocker");
  }
};

// Scene document (JSON):
//   {"bounds": [xmin, ymin, xmax, ymax],
//    "walls": [{"from": [x, y], "to": [x, y], "reflection_loss_db": 10 | "inf"}],
//    "blockers": [{"polygon": [[x, y], ...], "penetration_loss_db": 25 | "inf"}],
//    "bs": {"position": [x, y], "heading_deg": 0}}
namespace scene_json {

inline double loss_from_json(const nlohmann::json& j, double fallback) {
  if (j.is_null()) return fallback;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "opaque" || s == "absorbing") return kInfiniteLoss;
    fail(Errc::config_error, "unknown loss value '" + s + "'");
  }
  return j.get<double>();
}

inline nlohmann::json loss_to_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline Vec2 vec_from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2, Errc::config_error, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace scene_json

inline Scene scene_from_json(const nlohmann::json& j) {
  using namespace scene_json;
  Scene s;
  try {
    const auto& b = j.at("bounds");
    require(b.is_array() && b.size() == 4, Errc::config_error, "bounds must be [xmin, ymin, xmax, ymax]");
    s.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    if (j.contains("walls")) {
      for (const auto& w : j.at("walls")) {
        s.walls.push_back({vec_from_json(w.at("from")), vec_from_json(w.at("to")),
                           loss_from_json(w.value("reflection_loss_db", nlohmann::json()), 10.0)});
      }
    }
    if (j.contains("blockers")) {
      for (const auto& bj : j.at("blockers")) {
        Blocker blk;
        for (const auto& v : bj.at("polygon")) blk.shape.vertices.push_back(vec_from_json(v));
        require(make_convex_ccw(blk.shape.vertices), Errc::invalid_argument, "blocker polygon is not convex");
        blk.penetration_loss_db = loss_from_json(bj.value("penetration_loss_db", nlohmann::json()), 25.0);
        s.blockers.push_back(std::move(blk));
      }
    }
    const auto& bs = j.at("bs");
    s.bs_pose.position = vec_from_json(bs.at("position"));
    s.bs_pose.heading = bs.value("heading_deg", 0.0) * std::numbers::pi / 180.0;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_error, std::string("scene document: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json scene_to_json(const Scene& s) {
  using namespace scene_json;
  nlohmann::json j;
  j["bounds"] = {s.bounds.xmin, s.bounds.ymin, s.bounds.xmax, s.bounds.ymax};
  j["walls"] = nlohmann::json::array();
  for (const auto& w : s.walls) {
    j["walls"].push_back({{"from", {w.a.x, w.a.y}}, {"to", {w.b.x, w.b.y}},
                          {"reflection_loss_db", loss_to_json(w.reflection_loss_db)}});
  }
  j["blockers"] = nlohmann::json::array();
  for (const auto& b : s.blockers) {
    nlohmann::json poly = nlohmann::json::array();
    for (auto v : b.shape.vertices) poly.push_back({v.x, v.y});
    j["blockers"].push_back({{"polygon", poly}, {"penetration_loss_db", loss_to_json(b.penetration_loss_db)}});
  }
  j["bs"] = {{"position", {s.bs_pose.position.x, s.bs_pose.position.y}},
             {"heading_deg", s.bs_pose.heading * 180.0 / std::numbers::pi}};
  return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path);
  try {
    return nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_error, path + ": " + e.what());
  }
}

inline Scene load_scene(const std::string& path) { return scene_from_json(read_json_file(path)); }

}  // namespace hawkrover

#endif  // HAWKROVER_SCENE_HPP
