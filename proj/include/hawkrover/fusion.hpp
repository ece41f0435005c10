#ifndef HAWKROVER_FUSION_HPP
#define HAWKROVER_FUSION_HPP

// Beam classifier over aligned multimodal samples: one encoder per modality
// (2-D CNN for the depth camera, circular 1-D CNN for the LiDAR ring, Elman RNN
// for the IMU/position window), concatenation in a fixed order, a dense+ReLU
// projection, an LSTM across consecutive anchors and a softmax head.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hawkrover/error.hpp"
#include "hawkrover/metrics.hpp"
#include "hawkrover/nn/checkpoint.hpp"
#include "hawkrover/nn/layers.hpp"
#include "hawkrover/nn/trainer.hpp"
#include "hawkrover/preprocess.hpp"
#include "hawkrover/propagation.hpp"

namespace hawkrover {

enum class Modality : std::uint8_t { camera = 0, lidar = 1, imu_position = 2 };
inline constexpr std::array<Modality, 3> kModalityOrder = {Modality::camera, Modality::lidar, Modality::imu_position};

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::camera: return "camera";
    case Modality::lidar: return "lidar";
    case Modality::imu_position: return "imu_position";
  }
  return "?";
}

inline Modality modality_from_string(const std::string& s) {
  for (Modality m : kModalityOrder)
    if (to_string(m) == s) return m;
  fail(Errc::config_error, "unknown modality '" + s + "'");
}

struct ModalitySet {
  bool camera = true;
  bool lidar = true;
  bool imu_position = true;

  bool has(Modality m) const {
    switch (m) {
      case Modality::camera: return camera;
      case Modality::lidar: return lidar;
      case Modality::imu_position: return imu_position;
    }
    return false;
  }
  void set(Modality m, bool on) {
    switch (m) {
      case Modality::camera: camera = on; break;
      case Modality::lidar: lidar = on; break;
      case Modality::imu_position: imu_position = on; break;
    }
  }
  std::size_t count() const { return std::size_t{camera} + std::size_t{lidar} + std::size_t{imu_position}; }

  /// "L", "L+C", "L+C+I" style label.
  std::string label() const {
    std::string s;
    auto add = [&](bool on, const char* tag) {
      if (!on) return;
      if (!s.empty()) s += "+";
      s += tag;
    };
    add(lidar, "L");
    add(camera, "C");
    add(imu_position, "I");
    return s;
  }

  friend bool operator==(const ModalitySet&, const ModalitySet&) = default;
};

/// Parses "L", "L+C", "C+I", ... (letters L, C, I joined by '+').
inline ModalitySet modality_set_from_label(const std::string& label) {
  ModalitySet m{false, false, false};
  std::size_t start = 0;
  while (start <= label.size()) {
    const std::size_t end = std::min(label.find('+', start), label.size());
    const std::string tok = label.substr(start, end - start);
    if (tok == "L") m.lidar = true;
    else if (tok == "C") m.camera = true;
    else if (tok == "I") m.imu_position = true;
    else fail(Errc::config_error, "bad modality label '" + label + "'");
    start = end + 1;
  }
  require(m.count() > 0, Errc::config_error, "empty modality label");
  return m;
}

struct CameraEncoderConfig {
  std::vector<std::size_t> channels{4, 4};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t features = 64;
  double input_scale = 1.0 / 12.0;
};

struct LidarEncoderConfig {
  std::vector<std::size_t> channels{4, 4};
  std::size_t kernel = 9;
  std::size_t pool = 4;
  std::size_t features = 64;
  bool global_pool = false;  // no per-stage pooling, one max over the whole ring at the end
  double input_scale = 1.0 / 12.0;
};

struct ImuEncoderConfig {
  std::size_t hidden = 32;
  double accel_scale = 1.0;
  double position_scale = 0.1;
};

struct FusionConfig {
  ModalitySet modalities;
  CameraEncoderConfig camera;
  LidarEncoderConfig lidar;
  ImuEncoderConfig imu;
  std::size_t fused = 64;
  std::size_t lstm_hidden = 64;
  std::size_t window = 5;
  std::size_t classes = kBeamCount;
  std::uint64_t init_seed = 1;

  void validate() const {
    require(modalities.count() >= 1, Errc::config_error, "at least one modality must be enabled");
    require(window >= 1, Errc::config_error, "window length must be >= 1");
    require(classes >= 2, Errc::config_error, "need at least two classes");
    require(fused >= 1 && lstm_hidden >= 1, Errc::config_error, "layer widths must be >= 1");
    require(camera.kernel % 2 == 1 && lidar.kernel % 2 == 1, Errc::config_error, "kernels must be odd");
    require(camera.pool >= 1 && lidar.pool >= 1, Errc::config_error, "pool sizes must be >= 1");
    require(camera.features >= 1 && lidar.features >= 1 && imu.hidden >= 1, Errc::config_error,
            "encoder widths must be >= 1");
    for (auto c : camera.channels) require(c >= 1, Errc::config_error, "camera channels must be >= 1");
    for (auto c : lidar.channels) require(c >= 1, Errc::config_error, "lidar channels must be >= 1");
  }
};

inline nlohmann::json to_json(const FusionConfig& c) {
  nlohmann::json mods = nlohmann::json::array();
  for (Modality m : kModalityOrder)
    if (c.modalities.has(m)) mods.push_back(to_string(m));
  return {{"modalities", mods},
          {"camera",
           {{"channels", c.camera.channels},
            {"kernel", c.camera.kernel},
            {"pool", c.camera.pool},
            {"features", c.camera.features},
            {"input_scale", c.camera.input_scale}}},
          {"lidar",
           {{"channels", c.lidar.channels},
            {"kernel", c.lidar.kernel},
            {"pool", c.lidar.pool},
            {"features", c.lidar.features},
            {"global_pool", c.lidar.global_pool},
            {"input_scale", c.lidar.input_scale}}},
          {"imu",
           {{"hidden", c.imu.hidden}, {"accel_scale", c.imu.accel_scale}, {"position_scale", c.imu.position_scale}}},
          {"fused", c.fused},
          {"lstm_hidden", c.lstm_hidden},
          {"window", c.window},
          {"classes", c.classes},
          {"init_seed", c.init_seed}};
}

inline FusionConfig fusion_config_from_json(const nlohmann::json& j) {
  FusionConfig c;
  if (j.contains("modalities")) {
    const auto& m = j.at("modalities");
    if (m.is_string()) {
      c.modalities = modality_set_from_label(m.get<std::string>());
    } else {
      c.modalities = {false, false, false};
      for (const auto& s : m) c.modalities.set(modality_from_string(s.get<std::string>()), true);
    }
  }
  if (j.contains("camera")) {
    const auto& e = j.at("camera");
    c.camera.channels = e.value("channels", c.camera.channels);
    c.camera.kernel = e.value("kernel", c.camera.kernel);
    c.camera.pool = e.value("pool", c.camera.pool);
    c.camera.features = e.value("features", c.camera.features);
    c.camera.input_scale = e.value("input_scale", c.camera.input_scale);
  }
  if (j.contains("lidar")) {
    const auto& e = j.at("lidar");
    c.lidar.channels = e.value("channels", c.lidar.channels);
    c.lidar.kernel = e.value("kernel", c.lidar.kernel);
    c.lidar.pool = e.value("pool", c.lidar.pool);
    c.lidar.features = e.value("features", c.lidar.features);
    c.lidar.global_pool = e.value("global_pool", c.lidar.global_pool);
    c.lidar.input_scale = e.value("input_scale", c.lidar.input_scale);
  }
  if (j.contains("imu")) {
    const auto& e = j.at("imu");
    c.imu.hidden = e.value("hidden", c.imu.hidden);
    c.imu.accel_scale = e.value("accel_scale", c.imu.accel_scale);
    c.imu.position_scale = e.value("position_scale", c.imu.position_scale);
  }
  c.fused = j.value("fused", c.fused);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.window = j.value("window", c.window);
  c.classes = j.value("classes", c.classes);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

/// Input dimensions the model is built for.
struct InputShape {
  std::size_t camera_width = 32;
  std::size_t camera_height = 18;
  std::size_t lidar_rays = 1600;
  std::size_t imu_steps = 10;

  static InputShape of(const AlignedSample& s) {
    return {s.camera_width, s.camera_height, s.lidar.size(), s.imu_steps};
  }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

inline nlohmann::json to_json(const InputShape& s) {
  return {{"camera_width", s.camera_width},
          {"camera_height", s.camera_height},
          {"lidar_rays", s.lidar_rays},
          {"imu_steps", s.imu_steps}};
}

inline InputShape input_shape_from_json(const nlohmann::json& j) {
  return {j.at("camera_width").get<std::size_t>(), j.at("camera_height").get<std::size_t>(),
          j.at("lidar_rays").get<std::size_t>(), j.at("imu_steps").get<std::size_t>()};
}

/// Per-modality features handed to fuse(); slots for disabled modalities must stay empty.
struct ModalityFeatures {
  std::optional<std::vector<double>> camera;
  std::optional<std::vector<double>> lidar;
  std::optional<std::vector<double>> imu_position;

  std::optional<std::vector<double>>& slot(Modality m) {
    switch (m) {
      case Modality::camera: return camera;
      case Modality::lidar: return lidar;
      default: return imu_position;
    }
  }
  const std::optional<std::vector<double>>& slot(Modality m) const {
    return const_cast<ModalityFeatures*>(this)->slot(m);
  }
};

class FusionModel {
 public:
  struct CameraCache {
    std::vector<nn::Conv2dCache> conv;
    std::vector<nn::Tensor> pre_relu;
    std::vector<nn::PoolCache> pool;
    std::vector<std::size_t> final_shape;
    std::vector<double> flat;
  };
  struct LidarCache {
    std::vector<nn::Conv1dCache> conv;
    std::vector<nn::Tensor> pre_relu;
    std::vector<nn::PoolCache> pool;
    nn::PoolCache global;
    std::vector<std::size_t> final_shape;
    std::vector<double> flat;
  };
  struct AnchorCache {
    CameraCache camera;
    LidarCache lidar;
    nn::RnnCache imu;
    std::vector<double> concat;
    std::vector<double> fused_pre;
  };
  struct WindowCache {
    nn::LstmCache lstm;
    std::vector<double> last_hidden;
  };

  FusionModel(FusionConfig cfg, InputShape shape) : cfg_(std::move(cfg)), shape_(shape) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.init_seed);
    std::size_t concat = 0;
    if (cfg_.modalities.camera) {
      require(shape_.camera_width >= 1 && shape_.camera_height >= 1, Errc::shape_mismatch, "empty camera input");
      std::size_t c = 1, h = shape_.camera_height, w = shape_.camera_width;
      for (std::size_t out : cfg_.camera.channels) {
        cam_conv_.emplace_back(c, out, cfg_.camera.kernel, cfg_.camera.kernel, 1, cfg_.camera.kernel / 2);
        cam_conv_.back().init(rng);
        require(h >= cfg_.camera.pool && w >= cfg_.camera.pool, Errc::shape_mismatch,
                "camera input " + std::to_string(shape_.camera_width) + "x" + std::to_string(shape_.camera_height) +
                    " too small for " + std::to_string(cfg_.camera.channels.size()) + " pooling stages");
        h /= cfg_.camera.pool;
        w /= cfg_.camera.pool;
        c = out;
      }
      cam_dense_ = nn::Dense(c * h * w, cfg_.camera.features);
      cam_dense_.init(rng);
      concat += cfg_.camera.features;
    }
    if (cfg_.modalities.lidar) {
      std::size_t c = 1, n = shape_.lidar_rays;
      for (std::size_t out : cfg_.lidar.channels) {
        require(n >= cfg_.lidar.kernel, Errc::shape_mismatch, "LiDAR ring shorter than the kernel");
        lid_conv_.emplace_back(c, out, cfg_.lidar.kernel);
        lid_conv_.back().init(rng);
        if (!cfg_.lidar.global_pool) {
          require(n >= cfg_.lidar.pool, Errc::shape_mismatch, "LiDAR ring too short for pooling stages");
          n = (n - cfg_.lidar.pool) / cfg_.lidar.pool + 1;
        }
        c = out;
      }
      lid_dense_ = nn::Dense(cfg_.lidar.global_pool ? c : c * n, cfg_.lidar.features);
      lid_dense_.init(rng);
      concat += cfg_.lidar.features;
    }
    if (cfg_.modalities.imu_position) {
      require(shape_.imu_steps >= 1, Errc::shape_mismatch, "IMU window is empty");
      imu_rnn_ = nn::RnnCell(kImuStepFeatures, cfg_.imu.hidden);
      imu_rnn_.init(rng);
      concat += cfg_.imu.hidden;
    }
    fuse_ = nn::Dense(concat, cfg_.fused);
    fuse_.init(rng);
    lstm_ = nn::LstmCell(cfg_.fused, cfg_.lstm_hidden);
    lstm_.init(rng);
    head_ = nn::Dense(cfg_.lstm_hidden, cfg_.classes);
    head_.init(rng);
  }

  const FusionConfig& config() const { return cfg_; }
  const InputShape& input_shape() const { return shape_; }

  nn::ParameterList parameters() {
    nn::ParameterList out;
    for (std::size_t i = 0; i < cam_conv_.size(); ++i) cam_conv_[i].collect(out, "camera.conv" + std::to_string(i));
    if (cfg_.modalities.camera) cam_dense_.collect(out, "camera.dense");
    for (std::size_t i = 0; i < lid_conv_.size(); ++i) lid_conv_[i].collect(out, "lidar.conv" + std::to_string(i));
    if (cfg_.modalities.lidar) lid_dense_.collect(out, "lidar.dense");
    if (cfg_.modalities.imu_position) imu_rnn_.collect(out, "imu.rnn");
    fuse_.collect(out, "fuse");
    lstm_.collect(out, "lstm");
    head_.collect(out, "head");
    return out;
  }

  std::size_t feature_size(Modality m) const {
    switch (m) {
      case Modality::camera: return cfg_.camera.features;
      case Modality::lidar: return cfg_.lidar.features;
      case Modality::imu_position: return cfg_.imu.hidden;
    }
    return 0;
  }

  // ------------------------------------------------------------ encoders

  std::vector<double> encode_modality(const AlignedSample& s, Modality m) const {
    AnchorCache scratch;
    return encode(s, m, scratch);
  }

  std::vector<double> fuse(const ModalityFeatures& f) const {
    std::vector<double> concat;
    for (Modality m : kModalityOrder) {
      const auto& slot = f.slot(m);
      if (!cfg_.modalities.has(m)) {
        require(!slot.has_value(), Errc::modality_disabled, to_string(m) + " feature given but modality is disabled");
        continue;
      }
      require(slot.has_value(), Errc::shape_mismatch, "missing " + to_string(m) + " feature");
      require(slot->size() == feature_size(m), Errc::shape_mismatch, to_string(m) + " feature has wrong length");
      concat.insert(concat.end(), slot->begin(), slot->end());
    }
    return nn::relu(std::span<const double>(fuse_.forward(concat)));
  }

  /// Encoders plus fusion for one aligned sample.
  std::vector<double> fused_features(const AlignedSample& s, AnchorCache* cache = nullptr) const {
    AnchorCache local;
    AnchorCache& c = cache ? *cache : local;
    c.concat.clear();
    for (Modality m : kModalityOrder) {
      if (!cfg_.modalities.has(m)) continue;
      const auto f = encode(s, m, c);
      c.concat.insert(c.concat.end(), f.begin(), f.end());
    }
    c.fused_pre = fuse_.forward(c.concat);
    return nn::relu(std::span<const double>(c.fused_pre));
  }

  // ------------------------------------------------------------ temporal head

  std::vector<double> logits_from_fused(const std::vector<std::vector<double>>& fused, WindowCache* cache = nullptr) const {
    require(fused.size() == cfg_.window, Errc::window_length_mismatch,
            "window holds " + std::to_string(fused.size()) + " anchors, model expects " + std::to_string(cfg_.window));
    nn::LstmState init{std::vector<double>(cfg_.lstm_hidden, 0.0), std::vector<double>(cfg_.lstm_hidden, 0.0)};
    const auto state = lstm_.run(fused, init, cache ? &cache->lstm : nullptr);
    if (cache) cache->last_hidden = state.h;
    return head_.forward(state.h);
  }

  std::vector<double> predict_from_fused(const std::vector<std::vector<double>>& fused) const {
    return nn::softmax(logits_from_fused(fused));
  }

  /// Probability vector over beams for a window of consecutive samples, oldest first.
  std::vector<double> predict(std::span<const AlignedSample> window) const {
    require(window.size() == cfg_.window, Errc::window_length_mismatch,
            "window holds " + std::to_string(window.size()) + " samples, model expects " + std::to_string(cfg_.window));
    std::vector<std::vector<double>> fused;
    for (const auto& s : window) fused.push_back(fused_features(s));
    return predict_from_fused(fused);
  }

  // ------------------------------------------------------------ training hooks

  /// Cross-entropy for one window; accumulates head/LSTM gradients and adds the
  /// gradient with respect to each fused input to `dfused`.
  double window_backward(const std::vector<std::vector<double>>& fused, std::size_t label,
                         std::vector<std::vector<double>>& dfused) {
    WindowCache wc;
    const auto logits = logits_from_fused(fused, &wc);
    auto ce = nn::softmax_cross_entropy(logits, label);
    const auto dh = head_.backward(wc.last_hidden, ce.grad);
    std::vector<std::vector<double>> dhs(fused.size());
    dhs.back() = dh;
    const auto g = lstm_.backward(wc.lstm, dhs);
    dfused.resize(fused.size());
    for (std::size_t t = 0; t < fused.size(); ++t) {
      if (dfused[t].empty()) dfused[t].assign(cfg_.fused, 0.0);
      for (std::size_t j = 0; j < cfg_.fused; ++j) dfused[t][j] += g.dxs[t][j];
    }
    return ce.loss;
  }

  /// Backpropagates a gradient on the fused vector through fusion and encoders.
  void anchor_backward(const AnchorCache& c, std::span<const double> dfused) {
    std::vector<double> d(dfused.begin(), dfused.end());
    nn::relu_backward_inplace(c.fused_pre, d);
    const auto dconcat = fuse_.backward(c.concat, d);
    std::size_t off = 0;
    for (Modality m : kModalityOrder) {
      if (!cfg_.modalities.has(m)) continue;
      const std::size_t n = feature_size(m);
      const std::span<const double> part(dconcat.data() + off, n);
      off += n;
      switch (m) {
        case Modality::camera: camera_backward(c.camera, part); break;
        case Modality::lidar: lidar_backward(c.lidar, part); break;
        case Modality::imu_position: imu_backward(c.imu, part); break;
      }
    }
  }

  // ------------------------------------------------------------ persistence

  std::string metadata() const {
    return nlohmann::json{{"model", "hawkrover-fusion"}, {"config", to_json(cfg_)}, {"input", to_json(shape_)}}.dump();
  }

  nn::Checkpoint checkpoint() const {
    return nn::snapshot(const_cast<FusionModel*>(this)->parameters(), metadata());
  }

  void save(const std::string& path) const { nn::save_checkpoint(path, checkpoint()); }

  static FusionModel from_checkpoint(const nn::Checkpoint& c) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(c.metadata);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::corrupt_header, std::string("checkpoint metadata is not JSON: ") + e.what());
    }
    require(meta.value("model", "") == "hawkrover-fusion", Errc::corrupt_header, "checkpoint is not a fusion model");
    FusionModel m(fusion_config_from_json(meta.at("config")), input_shape_from_json(meta.at("input")));
    nn::restore(m.parameters(), c);
    return m;
  }

  static FusionModel load(const std::string& path) { return from_checkpoint(nn::load_checkpoint(path)); }

 private:
  std::vector<double> encode(const AlignedSample& s, Modality m, AnchorCache& c) const {
    require(cfg_.modalities.has(m), Errc::modality_disabled, to_string(m) + " is disabled in this model");
    switch (m) {
      case Modality::camera: return camera_forward(s, c.camera);
      case Modality::lidar: return lidar_forward(s, c.lidar);
      case Modality::imu_position: return imu_forward(s, c.imu);
    }
    return {};
  }

  std::vector<double> camera_forward(const AlignedSample& s, CameraCache& c) const {
    require(s.camera_width == shape_.camera_width && s.camera_height == shape_.camera_height &&
                s.camera.size() == s.camera_width * s.camera_height,
            Errc::shape_mismatch, "camera frame does not match the model input shape");
    nn::Tensor x({1, s.camera_height, s.camera_width}, s.camera);
    for (double& v : x.storage()) v *= cfg_.camera.input_scale;
    const std::size_t stages = cam_conv_.size();
    c.conv.assign(stages, {});
    c.pre_relu.assign(stages, {});
    c.pool.assign(stages, {});
    for (std::size_t i = 0; i < stages; ++i) {
      c.pre_relu[i] = cam_conv_[i].forward(x, &c.conv[i]);
      x = nn::maxpool2d(nn::relu(c.pre_relu[i]), cfg_.camera.pool, cfg_.camera.pool, &c.pool[i]);
    }
    c.final_shape = x.shape();
    c.flat = std::move(x.storage());
    return cam_dense_.forward(c.flat);
  }

  void camera_backward(const CameraCache& c, std::span<const double> dout) {
    nn::Tensor d(c.final_shape, cam_dense_.backward(c.flat, dout));
    for (std::size_t i = cam_conv_.size(); i-- > 0;) {
      d = nn::maxpool_backward(c.pool[i], d);
      nn::relu_backward_inplace(c.pre_relu[i].values(), d.values());
      d = cam_conv_[i].backward(c.conv[i], d);
    }
  }

  std::vector<double> lidar_forward(const AlignedSample& s, LidarCache& c) const {
    require(s.lidar.size() == shape_.lidar_rays, Errc::shape_mismatch, "LiDAR scan does not match the model input");
    nn::Tensor x({1, s.lidar.size()}, s.lidar);
    for (double& v : x.storage()) v *= cfg_.lidar.input_scale;
    const std::size_t stages = lid_conv_.size();
    c.conv.assign(stages, {});
    c.pre_relu.assign(stages, {});
    c.pool.assign(stages, {});
    for (std::size_t i = 0; i < stages; ++i) {
      c.pre_relu[i] = lid_conv_[i].forward(x, &c.conv[i]);
      x = nn::relu(c.pre_relu[i]);
      if (!cfg_.lidar.global_pool) x = nn::maxpool1d(x, cfg_.lidar.pool, cfg_.lidar.pool, &c.pool[i]);
    }
    if (cfg_.lidar.global_pool) x = nn::global_maxpool1d(x, &c.global);
    c.final_shape = x.shape();
    c.flat = std::move(x.storage());
    return lid_dense_.forward(c.flat);
  }

  void lidar_backward(const LidarCache& c, std::span<const double> dout) {
    nn::Tensor d(c.final_shape, lid_dense_.backward(c.flat, dout));
    if (cfg_.lidar.global_pool) d = nn::maxpool_backward(c.global, d);
    for (std::size_t i = lid_conv_.size(); i-- > 0;) {
      if (!cfg_.lidar.global_pool) d = nn::maxpool_backward(c.pool[i], d);
      nn::relu_backward_inplace(c.pre_relu[i].values(), d.values());
      d = lid_conv_[i].backward(c.conv[i], d);
    }
  }

  std::vector<double> imu_forward(const AlignedSample& s, nn::RnnCache& c) const {
    require(s.imu_steps == shape_.imu_steps && s.imu_window.size() == s.imu_steps * kImuStepFeatures,
            Errc::shape_mismatch, "IMU window does not match the model input");
    std::vector<std::vector<double>> xs(s.imu_steps);
    for (std::size_t t = 0; t < s.imu_steps; ++t) {
      const double* row = s.imu_window.data() + t * kImuStepFeatures;
      xs[t].assign(row, row + kImuStepFeatures);
      for (std::size_t k = 0; k < 3; ++k) xs[t][k] *= cfg_.imu.accel_scale;
      xs[t][6] *= cfg_.imu.position_scale;
      xs[t][7] *= cfg_.imu.position_scale;
    }
    const std::vector<double> h0(cfg_.imu.hidden, 0.0);
    return imu_rnn_.run(xs, h0, &c);
  }

  void imu_backward(const nn::RnnCache& c, std::span<const double> dout) {
    std::vector<std::vector<double>> dhs(c.xs.size());
    dhs.back().assign(dout.begin(), dout.end());
    imu_rnn_.backward(c, dhs);
  }

  FusionConfig cfg_;
  InputShape shape_;
  std::vector<nn::Conv2d> cam_conv_;
  nn::Dense cam_dense_;
  std::vector<nn::Conv1dCircular> lid_conv_;
  nn::Dense lid_dense_;
  nn::RnnCell imu_rnn_;
  nn::Dense fuse_;
  nn::LstmCell lstm_;
  nn::Dense head_;
};

// ---------------------------------------------------------------- windows and training

/// Start indices of every window of `length` lying entirely inside [begin, end).
inline std::vector<std::size_t> window_starts(std::size_t begin, std::size_t end, std::size_t length) {
  std::vector<std::size_t> out;
  if (length == 0 || end < begin + length) return out;
  for (std::size_t s = begin; s + length <= end; ++s) out.push_back(s);
  return out;
}

/// Adapter exposing window-level training to the generic trainer. Each batch runs
/// the encoders once per distinct anchor, however many windows share it.
class FusionTrainingTask {
 public:
  FusionTrainingTask(FusionModel& model, std::span<const AlignedSample> samples, std::vector<std::size_t> starts)
      : model_(model), samples_(samples), starts_(std::move(starts)) {}

  std::size_t size() const { return starts_.size(); }
  nn::ParameterList parameters() { return model_.parameters(); }

  double accumulate(std::span<const std::size_t> batch) {
    const std::size_t w = model_.config().window;
    std::vector<std::size_t> anchors;
    for (std::size_t b : batch)
      for (std::size_t k = 0; k < w; ++k) anchors.push_back(starts_.at(b) + k);
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());

    std::vector<FusionModel::AnchorCache> caches(anchors.size());
    std::vector<std::vector<double>> fused(anchors.size());
    std::vector<std::vector<double>> grads(anchors.size(), std::vector<double>(model_.config().fused, 0.0));
    for (std::size_t i = 0; i < anchors.size(); ++i) fused[i] = model_.fused_features(samples_[anchors[i]], &caches[i]);
    auto slot = [&](std::size_t anchor) {
      return static_cast<std::size_t>(std::lower_bound(anchors.begin(), anchors.end(), anchor) - anchors.begin());
    };

    double total = 0.0;
    for (std::size_t b : batch) {
      const std::size_t s = starts_.at(b);
      std::vector<std::vector<double>> seq(w);
      for (std::size_t k = 0; k < w; ++k) seq[k] = fused[slot(s + k)];
      std::vector<std::vector<double>> dseq;
      total += model_.window_backward(seq, samples_[s + w - 1].label, dseq);
      for (std::size_t k = 0; k < w; ++k) {
        auto& g = grads[slot(s + k)];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += dseq[k][j];
      }
    }
    for (std::size_t i = 0; i < anchors.size(); ++i) model_.anchor_backward(caches[i], grads[i]);
    return total;
  }

 private:
  FusionModel& model_;
  std::span<const AlignedSample> samples_;
  std::vector<std::size_t> starts_;
};

/// Predictions for each window start, sharing encoder work across overlapping windows.
inline std::vector<std::vector<double>> predict_windows(const FusionModel& model, std::span<const AlignedSample> samples,
                                                        std::span<const std::size_t> starts) {
  const std::size_t w = model.config().window;
  std::vector<std::vector<double>> fused(samples.size());
  std::vector<std::vector<double>> out;
  out.reserve(starts.size());
  for (std::size_t s : starts) {
    require(s + w <= samples.size(), Errc::window_length_mismatch, "window runs past the end of the dataset");
    std::vector<std::vector<double>> seq(w);
    for (std::size_t k = 0; k < w; ++k) {
      if (fused[s + k].empty()) fused[s + k] = model.fused_features(samples[s + k]);
      seq[k] = fused[s + k];
    }
    out.push_back(model.predict_from_fused(seq));
  }
  return out;
}

inline std::vector<std::size_t> window_labels(std::span<const AlignedSample> samples, std::span<const std::size_t> starts,
                                              std::size_t window) {
  std::vector<std::size_t> out;
  out.reserve(starts.size());
  for (std::size_t s : starts) out.push_back(samples[s + window - 1].label);
  return out;
}

struct ChronologicalSplit {
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::vector<std::size_t> train_starts;
  std::vector<std::size_t> test_starts;
};

/// First floor(fraction * n) samples train, the rest test; no window crosses the boundary.
inline ChronologicalSplit chronological_split(std::size_t n, double fraction, std::size_t window) {
  require(fraction > 0.0 && fraction < 1.0, Errc::config_error, "train fraction must lie in (0, 1)");
  ChronologicalSplit s;
  s.train_samples = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  s.test_samples = n - s.train_samples;
  s.train_starts = window_starts(0, s.train_samples, window);
  s.test_starts = window_starts(s.train_samples, n, window);
  return s;
}

struct FusionTrainResult {
  FusionModel model;
  nn::TrainResult training;
  ChronologicalSplit split;
  std::vector<std::vector<double>> test_predictions;
  std::vector<std::size_t> test_labels;
  std::vector<double> test_topk;  // K = 1..5
};

inline FusionTrainResult train_fusion(std::span<const AlignedSample> samples, const FusionConfig& cfg,
                                      const nn::TrainConfig& tcfg, double train_fraction = 0.8,
                                      const nn::EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!samples.empty(), Errc::insufficient_data, "dataset is empty");
  auto split = chronological_split(samples.size(), train_fraction, cfg.window);
  require(!split.train_starts.empty() && !split.test_starts.empty(), Errc::insufficient_data,
          std::to_string(samples.size()) + " samples cannot fill a window of " + std::to_string(cfg.window) +
              " on both sides of the split");
  FusionModel model(cfg, InputShape::of(samples.front()));
  FusionTrainingTask task(model, samples, split.train_starts);
  auto training = nn::train(task, task.size(), tcfg, on_epoch);
  auto preds = predict_windows(model, samples, split.test_starts);
  auto labels = window_labels(samples, split.test_starts, cfg.window);
  auto topk = topk_curve(preds, labels, 5);
  return {std::move(model), std::move(training), std::move(split), std::move(preds), std::move(labels), std::move(topk)};
}

}  // namespace hawkrover

#endif  // HAWKROVER_FUSION_HPP
