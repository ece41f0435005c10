#ifndef HAWKROVER_NN_MLP_HPP
#define HAWKROVER_NN_MLP_HPP

#include <random>
#include <span>
#include <vector>

#include "hawkrover/error.hpp"
#include "hawkrover/nn/layers.hpp"

namespace hawkrover::nn {

/// Dense/ReLU stack with a softmax head, trained on an in-memory feature table.
class Mlp {
 public:
  /// widths = {input, hidden..., classes}
  Mlp(std::vector<std::size_t> widths, std::uint64_t seed) {
    require(widths.size() >= 2, Errc::invalid_argument, "mlp needs input and output widths");
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers_.emplace_back(widths[i], widths[i + 1]);
      layers_.back().init(rng);
    }
  }

  void set_data(std::vector<std::vector<double>> features, std::vector<std::size_t> labels) {
    require(features.size() == labels.size(), Errc::length_mismatch, "features/labels length");
    features_ = std::move(features);
    labels_ = std::move(labels);
  }

  std::size_t sample_count() const { return features_.size(); }

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      a = layers_[l].forward(a);
      if (l + 1 < layers_.size()) a = relu(std::span<const double>(a));
    }
    return a;
  }

  std::size_t classify(std::span<const double> x) const { return argmax(logits(x)); }

  ParameterList parameters() {
    ParameterList out;
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].collect(out, "dense" + std::to_string(l));
    return out;
  }

  double accumulate(std::span<const std::size_t> batch) {
    double total = 0.0;
    for (std::size_t idx : batch) {
      std::vector<std::vector<double>> inputs;  // input to each layer
      std::vector<std::vector<double>> pre;     // pre-activation of each hidden layer
      std::vector<double> a = features_.at(idx);
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        inputs.push_back(a);
        a = layers_[l].forward(a);
        if (l + 1 < layers_.size()) {
          pre.push_back(a);
          a = relu(std::span<const double>(a));
        }
      }
      auto ce = softmax_cross_entropy(a, labels_.at(idx));
      total += ce.loss;
      std::vector<double> g = std::move(ce.grad);
      for (std::size_t l = layers_.size(); l-- > 0;) {
        if (l + 1 < layers_.size()) relu_backward_inplace(pre[l], g);
        g = layers_[l].backward(inputs[l], g);
      }
    }
    return total;
  }

  static std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = i;
    return best;
  }

 private:
  std::vector<Dense> layers_;
  std::vector<std::vector<double>> features_;
  std::vector<std::size_t> labels_;
};

}  // namespace hawkrover::nn

#endif  // HAWKROVER_NN_MLP_HPP
