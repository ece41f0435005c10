#ifndef HAWKROVER_NN_TRAINER_HPP
#define HAWKROVER_NN_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hawkrover/error.hpp"
#include "hawkrover/nn/optim.hpp"

namespace hawkrover::nn {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  OptimizerSettings optimizer;
  double lr_decay = 1.0;      // multiplier applied after every epoch
  double clip_norm = 0.0;     // 0 disables clipping
  std::size_t shuffle_block = 1;  // contiguous runs kept together when shuffling

  void validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), Errc::config_error, "learning rate must be >= 0");
    require(batch_size >= 1, Errc::config_error, "batch size must be >= 1");
    require(shuffle_block >= 1, Errc::config_error, "shuffle block must be >= 1");
    require(lr_decay > 0.0, Errc::config_error, "lr decay must be > 0");
    require(clip_norm >= 0.0, Errc::config_error, "clip norm must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"epochs", c.epochs},               {"seed", c.seed},
          {"optimizer", to_string(c.optimizer.kind)},
          {"momentum", c.optimizer.momentum}, {"weight_decay", c.optimizer.weight_decay},
          {"lr_decay", c.lr_decay},           {"clip_norm", c.clip_norm},
          {"shuffle_block", c.shuffle_block}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.optimizer.kind = optimizer_from_string(j.value("optimizer", to_string(c.optimizer.kind)));
  c.optimizer.momentum = j.value("momentum", c.optimizer.momentum);
  c.optimizer.weight_decay = j.value("weight_decay", c.optimizer.weight_decay);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.shuffle_block = j.value("shuffle_block", c.shuffle_block);
  c.validate();
  return c;
}

/// A model the trainer can drive: accumulate() adds summed per-sample gradients for
/// the given sample indices into the parameter grad buffers and returns the summed loss.
template <class M>
concept TrainableModel = requires(M m, std::span<const std::size_t> idx) {
  { m.parameters() } -> std::convertible_to<ParameterList>;
  { m.accumulate(idx) } -> std::convertible_to<double>;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean per-sample loss for each epoch
  std::size_t steps = 0;
};

/// Visiting order for one epoch. Indices are cut into runs of `block` starting at a
/// random phase; the runs are shuffled and concatenated.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::size_t block, std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> runs;
  std::size_t phase = block > 1 ? std::uniform_int_distribution<std::size_t>(0, block - 1)(rng) : 0;
  phase = std::min(phase, n);
  std::size_t start = 0;
  auto cut = [&](std::size_t end) {
    if (end <= start) return;
    std::vector<std::size_t> r(end - start);
    std::iota(r.begin(), r.end(), start);
    runs.push_back(std::move(r));
    start = end;
  };
  cut(phase);
  while (start < n) cut(std::min(n, start + block));
  std::shuffle(runs.begin(), runs.end(), rng);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (const auto& r : runs) order.insert(order.end(), r.begin(), r.end());
  return order;
}

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

template <TrainableModel M>
TrainResult train(M& model, std::size_t sample_count, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(sample_count > 0, Errc::insufficient_data, "training set is empty");
  ParameterList params = model.parameters();
  Optimizer opt(params, cfg.optimizer);
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  double lr = cfg.learning_rate;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(sample_count, cfg.shuffle_block, rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      for (const auto& p : params) p.param->zero_grad();
      const double loss = model.accumulate(std::span<const std::size_t>(order.data() + b, e - b));
      if (!std::isfinite(loss)) {
        fail(Errc::nan_loss, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(result.steps) + " (lr " + std::to_string(lr) + ")");
      }
      total += loss;
      scale_gradients(params, 1.0 / static_cast<double>(e - b));
      if (cfg.clip_norm > 0.0) clip_gradients(params, cfg.clip_norm);
      opt.step(lr);
      ++result.steps;
    }
    const double mean = total / static_cast<double>(sample_count);
    result.loss_curve.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
    lr *= cfg.lr_decay;
  }
  return result;
}

}  // namespace hawkrover::nn

#endif  // HAWKROVER_NN_TRAINER_HPP
