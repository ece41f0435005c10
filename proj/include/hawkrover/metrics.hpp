#ifndef HAWKROVER_METRICS_HPP
#define HAWKROVER_METRICS_HPP

#include <span>
#include <vector>

#include "hawkrover/error.hpp"

namespace hawkrover {

/// Position of `label` when indices are sorted by descending probability,
/// equal probabilities ordered by ascending index. 0 means top-1.
inline std::size_t label_rank(std::span<const double> probs, std::size_t label) {
  require(label < probs.size(), Errc::label_out_of_range, "label outside the probability vector");
  const double p = probs[label];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > p || (probs[j] == p && j < label)) ++rank;
  }
  return rank;
}

inline double topk_accuracy(const std::vector<std::vector<double>>& predictions, std::span<const std::size_t> labels,
                            std::size_t k) {
  require(k >= 1, Errc::invalid_argument, "K must be >= 1");
  require(predictions.size() == labels.size(), Errc::length_mismatch,
          "prediction and label counts differ (" + std::to_string(predictions.size()) + " vs " +
              std::to_string(labels.size()) + ")");
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (label_rank(predictions[i], labels[i]) < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Accuracy for K = 1..max_k.
inline std::vector<double> topk_curve(const std::vector<std::vector<double>>& predictions,
                                      std::span<const std::size_t> labels, std::size_t max_k = 5) {
  require(predictions.size() == labels.size(), Errc::length_mismatch, "prediction and label counts differ");
  std::vector<std::size_t> hits(max_k, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t r = label_rank(predictions[i], labels[i]);
    for (std::size_t k = r; k < max_k; ++k) ++hits[k];
  }
  std::vector<double> acc(max_k, 0.0);
  if (predictions.empty()) return acc;
  for (std::size_t k = 0; k < max_k; ++k) acc[k] = static_cast<double>(hits[k]) / static_cast<double>(predictions.size());
  return acc;
}

}  // namespace hawkrover

#endif  // HAWKROVER_METRICS_HPP
