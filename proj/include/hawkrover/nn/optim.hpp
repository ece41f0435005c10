#ifndef HAWKROVER_NN_OPTIM_HPP
#define HAWKROVER_NN_OPTIM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "hawkrover/error.hpp"
#include "hawkrover/nn/tensor.hpp"

namespace hawkrover::nn {

enum class OptimizerKind { sgd, momentum, adam };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum") return OptimizerKind::momentum;
  if (s == "adam") return OptimizerKind::adam;
  fail(Errc::config_error, "unknown optimizer '" + s + "'");
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Euclidean norm over all gradient buffers.
inline double gradient_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.param->grad.storage()) sq += g * g;
  return std::sqrt(sq);
}

inline void scale_gradients(const ParameterList& params, double factor) {
  for (const auto& p : params)
    for (double& g : p.param->grad.storage()) g *= factor;
}

/// Rescales gradients so their global norm is at most max_norm. Returns the norm before clipping.
inline double clip_gradients(const ParameterList& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (max_norm > 0.0 && norm > max_norm) scale_gradients(params, max_norm / norm);
  return norm;
}

class Optimizer {
 public:
  Optimizer(ParameterList params, OptimizerSettings settings) : params_(std::move(params)), s_(settings) {
    if (s_.kind != OptimizerKind::sgd) {
      for (const auto& p : params_) first_.emplace_back(p.param->value.size(), 0.0);
    }
    if (s_.kind == OptimizerKind::adam) {
      for (const auto& p : params_) second_.emplace_back(p.param->value.size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k].param->value.storage();
      const auto& grad = params_[k].param->grad.storage();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i] + s_.weight_decay * value[i];
        switch (s_.kind) {
          case OptimizerKind::sgd:
            value[i] -= lr * g;
            break;
          case OptimizerKind::momentum: {
            double& v = first_[k][i];
            v = s_.momentum * v + g;
            value[i] -= lr * v;
            break;
          }
          case OptimizerKind::adam: {
            double& m = first_[k][i];
            double& v = second_[k][i];
            m = s_.beta1 * m + (1.0 - s_.beta1) * g;
            v = s_.beta2 * v + (1.0 - s_.beta2) * g * g;
            value[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + s_.epsilon);
            break;
          }
        }
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  ParameterList params_;
  OptimizerSettings s_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t t_ = 0;
};

}  // namespace hawkrover::nn

#endif  // HAWKROVER_NN_OPTIM_HPP
