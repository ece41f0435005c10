#ifndef HAWKROVER_EVAL_HPP
#define HAWKROVER_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hawkrover/error.hpp"
#include "hawkrover/geometry.hpp"
#include "hawkrover/metrics.hpp"
#include "hawkrover/preprocess.hpp"
#include "hawkrover/propagation.hpp"

namespace hawkrover {

enum class BaselineKind { exhaustive_oracle, geometric_bearing, knn_fingerprint, majority_class };

inline constexpr std::array<BaselineKind, 4> kAllBaselines = {
    BaselineKind::exhaustive_oracle, BaselineKind::geometric_bearing, BaselineKind::knn_fingerprint,
    BaselineKind::majority_class};

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::exhaustive_oracle: return "exhaustive-oracle";
    case BaselineKind::geometric_bearing: return "geometric-bearing";
    case BaselineKind::knn_fingerprint: return "knn-fingerprint";
    case BaselineKind::majority_class: return "majority-class";
  }
  return "?";
}

inline BaselineKind baseline_from_string(const std::string& s) {
  for (auto k : kAllBaselines)
    if (to_string(k) == s) return k;
  fail(Errc::config_error, "unknown baseline '" + s + "'");
}

/// What the non-learned predictors may look at besides the sample itself.
struct BaselineContext {
  std::size_t beam_count = kBeamCount;
  std::optional<Vec2> bs_position;  // world frame
  std::optional<Vec2> origin;       // world position that rel_position is measured from
  std::span<const AlignedSample> training;
  std::size_t knn_k = 5;
};

inline std::vector<double> one_hot(std::size_t n, std::size_t index) {
  std::vector<double> v(n, 0.0);
  v.at(index) = 1.0;
  return v;
}

/// Heading (world yaw) recovered from the magnetometer of the most recent IMU step.
inline double heading_from_sample(const AlignedSample& s) {
  require(s.imu_steps >= 1 && s.imu_window.size() >= s.imu_steps * kImuStepFeatures, Errc::missing_context,
          "sample carries no IMU window");
  const double* last = s.imu_window.data() + (s.imu_steps - 1) * kImuStepFeatures;
  return std::atan2(last[4], last[3]);
}

/// Index of the beam whose centre is angularly closest to `body_angle`; ties to the lower index.
inline std::size_t nearest_beam(double body_angle, std::size_t beam_count) {
  const double spacing = kTwoPi / static_cast<double>(beam_count);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < beam_count; ++k) {
    const double d = std::abs(angle_diff(body_angle, spacing * static_cast<double>(k)));
    if (d < best_d - 1e-12) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

class BaselinePredictor {
 public:
  BaselinePredictor(BaselineKind kind, BaselineContext ctx) : kind_(kind), ctx_(std::move(ctx)) {
    require(ctx_.beam_count >= 2, Errc::invalid_argument, "beam count must be >= 2");
    switch (kind_) {
      case BaselineKind::geometric_bearing:
        require(ctx_.bs_position.has_value() && ctx_.origin.has_value(), Errc::missing_context,
                "geometric baseline needs the BS position and the session origin");
        break;
      case BaselineKind::knn_fingerprint:
        require(!ctx_.training.empty(), Errc::missing_context, "k-NN baseline needs training samples");
        require(ctx_.knn_k >= 1, Errc::invalid_argument, "k must be >= 1");
        break;
      case BaselineKind::majority_class: {
        require(!ctx_.training.empty(), Errc::missing_context, "majority baseline needs training samples");
        std::vector<std::size_t> hist(ctx_.beam_count, 0);
        for (const auto& s : ctx_.training) ++hist.at(s.label);
        majority_ = static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
        break;
      }
      case BaselineKind::exhaustive_oracle: break;
    }
  }

  BaselineKind kind() const { return kind_; }
  std::size_t majority_label() const { return majority_; }

  std::vector<double> predict(const AlignedSample& s) const {
    const std::size_t n = ctx_.beam_count;
    switch (kind_) {
      case BaselineKind::exhaustive_oracle: return one_hot(n, s.label);
      case BaselineKind::majority_class: return one_hot(n, majority_);
      case BaselineKind::geometric_bearing: {
        const Vec2 ue = *ctx_.origin + s.rel_position;
        const double body = bearing(ue, *ctx_.bs_position) - heading_from_sample(s);
        return one_hot(n, nearest_beam(body, n));
      }
      case BaselineKind::knn_fingerprint: return knn(s);
    }
    return {};
  }

 private:
  std::vector<double> knn(const AlignedSample& s) const {
    const std::size_t k = std::min(ctx_.knn_k, ctx_.training.size());
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(ctx_.training.size());
    for (std::size_t i = 0; i < ctx_.training.size(); ++i) {
      const Vec2 delta = ctx_.training[i].rel_position - s.rel_position;
      d.emplace_back(dot(delta, delta), i);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<double> p(ctx_.beam_count, 0.0);
    for (std::size_t j = 0; j < k; ++j) p.at(ctx_.training[d[j].second].label) += 1.0 / static_cast<double>(k);
    return p;
  }

  BaselineKind kind_;
  BaselineContext ctx_;
  std::size_t majority_ = 0;
};

inline std::vector<std::vector<double>> predict_baseline(const BaselinePredictor& b,
                                                         std::span<const AlignedSample> samples) {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(b.predict(s));
  return out;
}

// ---------------------------------------------------------------- reports

inline constexpr std::size_t kReportMaxK = 5;

struct TopKRow {
  std::string configuration;  // "L+C+I", "knn-fingerprint", ...
  std::string kind;           // "model", "model-mean", "baseline"
  std::string seed;           // seed number, or "mean"/"-"
  std::size_t samples = 0;
  std::vector<double> accuracy;  // K = 1..kReportMaxK
};

struct TopKReport {
  std::vector<TopKRow> rows;
  std::vector<std::size_t> label_histogram;  // test labels

  const TopKRow* find(const std::string& configuration, const std::string& seed) const {
    for (const auto& r : rows)
      if (r.configuration == configuration && r.seed == seed) return &r;
    return nullptr;
  }
};

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline TopKRow make_row(std::string configuration, std::string kind, std::string seed,
                        const std::vector<std::vector<double>>& predictions, std::span<const std::size_t> labels) {
  return {std::move(configuration), std::move(kind), std::move(seed), predictions.size(),
          topk_curve(predictions, labels, kReportMaxK)};
}

/// Row holding the per-K mean of `rows`.
inline TopKRow mean_row(const std::string& configuration, const std::vector<const TopKRow*>& rows) {
  require(!rows.empty(), Errc::insufficient_data, "no rows to average");
  TopKRow m{configuration, "model-mean", "mean", rows.front()->samples, std::vector<double>(kReportMaxK, 0.0)};
  for (const auto* r : rows)
    for (std::size_t k = 0; k < kReportMaxK; ++k) m.accuracy[k] += r->accuracy[k] / static_cast<double>(rows.size());
  return m;
}

inline std::string report_csv(const TopKReport& rep) {
  std::string out = "configuration,kind,seed,samples";
  for (std::size_t k = 1; k <= kReportMaxK; ++k) out += ",top" + std::to_string(k);
  out += "\n";
  for (const auto& r : rep.rows) {
    out += r.configuration + "," + r.kind + "," + r.seed + "," + std::to_string(r.samples);
    for (double a : r.accuracy) out += "," + format_fixed(a);
    out += "\n";
  }
  return out;
}

/// Inverse of report_csv.
inline TopKReport parse_report_csv(const std::string& text) {
  TopKReport rep;
  std::size_t pos = text.find('\n');
  require(pos != std::string::npos && text.rfind("configuration,kind,seed,samples", 0) == 0, Errc::corrupt_header,
          "not a top-K report");
  while (++pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::vector<std::string> cells;
    std::size_t start = pos;
    while (start <= end) {
      const std::size_t comma = std::min(text.find(',', start), end);
      cells.push_back(text.substr(start, comma - start));
      start = comma + 1;
    }
    require(cells.size() == 4 + kReportMaxK, Errc::corrupt_header, "malformed report row");
    TopKRow r{cells[0], cells[1], cells[2], static_cast<std::size_t>(std::stoull(cells[3])), {}};
    for (std::size_t k = 0; k < kReportMaxK; ++k) r.accuracy.push_back(std::stod(cells[4 + k]));
    rep.rows.push_back(std::move(r));
    pos = end;
  }
  return rep;
}

inline std::string label_histogram_csv(const TopKReport& rep) {
  std::string out = "beam,count\n";
  for (std::size_t i = 0; i < rep.label_histogram.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(rep.label_histogram[i]) + "\n";
  return out;
}

/// Plot data: one line per configuration (seed means), columns top-1 .. top-5 in percent.
inline std::string plot_data(const TopKReport& rep) {
  std::string out = "# configuration";
  for (std::size_t k = 1; k <= kReportMaxK; ++k) out += " top" + std::to_string(k);
  out += "\n";
  for (const auto& r : rep.rows) {
    if (r.kind != "model-mean") continue;
    out += "\"" + r.configuration + "\"";
    for (double a : r.accuracy) out += " " + format_fixed(100.0 * a, 3);
    out += "\n";
  }
  return out;
}

inline std::string gnuplot_script(const std::string& data_file, const std::string& image_file) {
  return "set terminal pngcairo size 800,500\n"
         "set output '" + image_file + "'\n"
         "set style data histograms\n"
         "set style histogram clustered gap 1\n"
         "set style fill solid 0.8 border -1\n"
         "set yrange [0:100]\n"
         "set ylabel 'Accuracy (%)'\n"
         "set key top left\n"
         "plot for [k=2:6] '" + data_file + "' using k:xtic(1) title sprintf('Top-%d', k-1)\n";
}

}  // namespace hawkrover

#endif  // HAWKROVER_EVAL_HPP
