#ifndef HAWKROVER_EXPERIMENT_HPP
#define HAWKROVER_EXPERIMENT_HPP

// End-to-end experiment driver: simulate -> record -> preprocess -> train -> evaluate,
// once per modality ablation and training seed. Every stage output is keyed by a hash
// of everything it depends on; a stage whose key file matches is skipped.

#include <bitset>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hawkrover/bus.hpp"
#include "hawkrover/bytes.hpp"
#include "hawkrover/dataset_io.hpp"
#include "hawkrover/eval.hpp"
#include "hawkrover/fusion.hpp"
#include "hawkrover/nn/trainer.hpp"
#include "hawkrover/preprocess.hpp"
#include "hawkrover/scene.hpp"
#include "hawkrover/session.hpp"
#include "hawkrover/session_log.hpp"

namespace hawkrover {

// ---------------------------------------------------------------- stages

enum class Stage { config = 2, simulate = 3, record = 4, preprocess = 5, train = 6, eval = 7, report = 8 };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::simulate: return "simulate";
    case Stage::record: return "record";
    case Stage::preprocess: return "preprocess";
    case Stage::train: return "train";
    case Stage::eval: return "eval";
    case Stage::report: return "report";
  }
  return "?";
}

/// A failure tagged with the pipeline stage it came from; the CLI exit code is the stage number.
class StageError : public Error {
 public:
  StageError(Stage stage, Errc code, const std::string& what)
      : Error(code, std::string(to_string(stage)) + " stage: " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

template <typename F>
auto in_stage(Stage stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    throw StageError(stage, Errc::config_error, e.what());
  } catch (const std::exception& e) {
    throw StageError(stage, Errc::io_error, e.what());
  }
}

// ---------------------------------------------------------------- configuration

inline std::string to_string(PositionSource p) { return p == PositionSource::imu ? "imu" : "location"; }
inline std::string to_string(NormalizationMode m) { return m == NormalizationMode::pooled ? "pooled" : "per_beam"; }

inline nlohmann::json preprocess_to_json(const PreprocessOptions& o) {
  return {{"camera_downsample", o.camera_downsample},
          {"position_source", to_string(o.position_source)},
          {"normalization", to_string(o.normalization)},
          {"train_fraction", o.train_fraction},
          {"imu_window_steps", o.imu_window_steps},
          {"max_clock_error_ns", o.max_clock_error_ns}};
}

inline PreprocessOptions preprocess_from_json(const nlohmann::json& j, const SensorRates& rates) {
  PreprocessOptions o;
  o.nominal_rates = rates;
  o.camera_downsample = j.value("camera_downsample", o.camera_downsample);
  const auto src = j.value("position_source", to_string(o.position_source));
  require(src == "imu" || src == "location", Errc::config_error, "position_source must be imu or location");
  o.position_source = src == "imu" ? PositionSource::imu : PositionSource::location;
  const auto norm = j.value("normalization", to_string(o.normalization));
  require(norm == "pooled" || norm == "per_beam", Errc::config_error, "normalization must be pooled or per_beam");
  o.normalization = norm == "pooled" ? NormalizationMode::pooled : NormalizationMode::per_beam;
  o.train_fraction = j.value("train_fraction", o.train_fraction);
  o.imu_window_steps = j.value("imu_window_steps", o.imu_window_steps);
  o.max_clock_error_ns = j.value("max_clock_error_ns", o.max_clock_error_ns);
  require(o.train_fraction > 0.0 && o.train_fraction < 1.0, Errc::config_error, "train_fraction must lie in (0, 1)");
  require(o.imu_window_steps >= 1, Errc::config_error, "imu_window_steps must be >= 1");
  return o;
}

struct ExperimentConfig {
  std::string name = "experiment";
  Scene scene;
  Trajectory trajectory;
  SessionConfig session;
  CodebookConfig codebook;
  PreprocessOptions preprocess;
  FusionConfig model;
  nn::TrainConfig training;
  std::vector<ModalitySet> ablations = {modality_set_from_label("L"), modality_set_from_label("L+C"),
                                        modality_set_from_label("L+C+I")};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<BaselineKind> baselines = {kAllBaselines.begin(), kAllBaselines.end()};
  std::size_t knn_k = 5;
};

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json abl = nlohmann::json::array();
  for (const auto& a : c.ablations) abl.push_back(a.label());
  nlohmann::json bl = nlohmann::json::array();
  for (auto b : c.baselines) bl.push_back(to_string(b));
  return {{"name", c.name},
          {"scene", scene_to_json(c.scene)},
          {"trajectory", trajectory_to_json(c.trajectory)},
          {"session", session_to_json(c.session)},
          {"codebook", codebook_to_json(c.codebook)},
          {"preprocess", preprocess_to_json(c.preprocess)},
          {"model", to_json(c.model)},
          {"training", nn::to_json(c.training)},
          {"ablations", abl},
          {"seeds", c.seeds},
          {"baselines", bl},
          {"knn_k", c.knn_k}};
}

/// `base_dir` resolves a relative "scene_file" entry.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("scene")) {
      c.scene = scene_from_json(j.at("scene"));
    } else {
      require(j.contains("scene_file"), Errc::config_error, "experiment needs 'scene' or 'scene_file'");
      std::filesystem::path p = j.at("scene_file").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      c.scene = load_scene(p.string());
    }
    c.trajectory = trajectory_from_json(j.at("trajectory"));
    c.session = session_from_json(j.value("session", nlohmann::json::object()));
    c.codebook = codebook_from_json(j.value("codebook", nlohmann::json::object()));
    c.preprocess = preprocess_from_json(j.value("preprocess", nlohmann::json::object()), c.session.rates);
    c.model = fusion_config_from_json(j.value("model", nlohmann::json::object()));
    c.training = nn::train_config_from_json(j.value("training", nlohmann::json::object()));
    if (j.contains("ablations")) {
      c.ablations.clear();
      for (const auto& a : j.at("ablations")) c.ablations.push_back(modality_set_from_label(a.get<std::string>()));
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("baselines")) {
      c.baselines.clear();
      for (const auto& b : j.at("baselines")) c.baselines.push_back(baseline_from_string(b.get<std::string>()));
    }
    c.knn_k = j.value("knn_k", c.knn_k);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_error, std::string("experiment config: ") + e.what());
  }
  require(!c.ablations.empty(), Errc::config_error, "no ablations configured");
  require(!c.seeds.empty(), Errc::config_error, "no seeds configured");
  require(c.codebook.count == c.model.classes, Errc::config_error, "model classes must equal the codebook size");
  return c;
}

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, Errc::config_error, "override must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!part.empty(), Errc::config_error, "empty path component in '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides = {}) {
  auto doc = read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return experiment_from_json(doc, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------- stage keys

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string session_key(const ExperimentConfig& c) {
  const std::string doc = nlohmann::json{{"scene", scene_to_json(c.scene)},
                                         {"trajectory", trajectory_to_json(c.trajectory)},
                                         {"session", session_to_json(c.session)},
                                         {"codebook", codebook_to_json(c.codebook)}}
                              .dump();
  return hex64(fnv1a64(doc));
}

inline std::string dataset_key(const ExperimentConfig& c) {
  return hex64(fnv1a64(session_key(c) + preprocess_to_json(c.preprocess).dump()));
}

inline std::string model_key(const ExperimentConfig& c, const FusionConfig& m, const nn::TrainConfig& t) {
  return hex64(fnv1a64(dataset_key(c) + to_json(m).dump() + nn::to_json(t).dump()));
}

inline SessionHeader session_header(const ExperimentConfig& c) {
  SessionHeader h;
  h.scene_hash = fnv1a64(scene_to_json(c.scene).dump());
  h.config_hash = fnv1a64(nlohmann::json{{"trajectory", trajectory_to_json(c.trajectory)},
                                         {"session", session_to_json(c.session)},
                                         {"codebook", codebook_to_json(c.codebook)}}
                              .dump());
  return h;
}

namespace detail {

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline bool cached(const std::filesystem::path& artifact, const std::string& key) {
  auto kp = artifact;
  kp += ".key";
  return std::filesystem::exists(artifact) && read_text(kp) == key + "\n";
}

inline void mark(const std::filesystem::path& artifact, const std::string& key) {
  auto kp = artifact;
  kp += ".key";
  write_text(kp.string(), key + "\n");
}

}  // namespace detail

// ---------------------------------------------------------------- stage runners

using Logger = std::function<void(const std::string&)>;

/// Simulator publishes on a bus; a recorder subscribed to every stream writes the log.
inline std::size_t simulate_and_record(const ExperimentConfig& c, const std::string& log_path) {
  const auto codebook = in_stage(Stage::simulate, [&] { return c.codebook.build(); });
  Bus bus(4096);
  std::bitset<kStreamCount> all;
  all.set();
  auto sub = bus.subscribe(all);
  std::exception_ptr sim_error;
  std::thread producer([&] {
    try {
      run_session(c.scene, c.trajectory, codebook, c.session, [&](TimestampedRecord&& r) { bus.publish(std::move(r)); });
    } catch (...) {
      sim_error = std::current_exception();
    }
    bus.close();
  });
  std::size_t frames = 0;
  std::exception_ptr rec_error;
  try {
    LogWriter writer(log_path, session_header(c));
    while (auto r = sub->next()) writer.append(*r);
    writer.close();
    frames = writer.frames();
  } catch (...) {
    rec_error = std::current_exception();
    sub->cancel();
  }
  producer.join();
  if (sim_error) in_stage(Stage::simulate, [&] { std::rethrow_exception(sim_error); });
  if (rec_error) in_stage(Stage::record, [&] { std::rethrow_exception(rec_error); });
  return frames;
}

struct ModelRun {
  std::string configuration;
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;
  TopKRow row;
};

struct ExperimentResult {
  TopKReport report;
  std::size_t anchors = 0;
  std::size_t samples = 0;
  std::map<std::string, std::size_t> dropped;
  std::vector<ModelRun> runs;
  std::vector<std::string> skipped_stages;
};

inline std::string file_tag(const ModalitySet& m) {
  std::string s = m.label();
  std::replace(s.begin(), s.end(), '+', '_');
  return s;
}

inline std::string loss_csv(const std::vector<double>& curve) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) out += std::to_string(e + 1) + "," + format_fixed(curve[e], 9) + "\n";
  return out;
}

inline std::vector<double> parse_loss_csv(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma != std::string::npos) out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                       const Logger& log = {}) {
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  ExperimentResult result;
  in_stage(Stage::config, [&] {
    std::filesystem::create_directories(out_dir / "models");
    write_text((out_dir / "config.json").string(), experiment_to_json(c).dump(2) + "\n");
  });

  // simulate + record
  const auto log_path = out_dir / "session.hwks";
  const auto skey = session_key(c);
  if (detail::cached(log_path, skey)) {
    say("session log up to date, skipping simulate/record");
    result.skipped_stages.push_back("simulate");
  } else {
    say("simulating " + format_fixed(c.session.duration, 1) + " s session");
    const auto frames = simulate_and_record(c, log_path.string());
    in_stage(Stage::record, [&] { detail::mark(log_path, skey); });
    say("recorded " + std::to_string(frames) + " frames");
  }

  // preprocess
  const auto ds_path = out_dir / "dataset.hwkd";
  const auto dkey = dataset_key(c);
  Dataset ds;
  if (detail::cached(ds_path, dkey)) {
    say("dataset up to date, skipping preprocess");
    result.skipped_stages.push_back("preprocess");
    ds = in_stage(Stage::preprocess, [&] { return load_dataset(ds_path.string()); });
  } else {
    ds = in_stage(Stage::preprocess, [&] {
      auto session_log = read_log(log_path.string());
      auto d = build_dataset(session_log, c.preprocess);
      save_dataset(ds_path.string(), d);
      write_text((out_dir / "dataset.csv").string(), dataset_csv(d));
      detail::mark(ds_path, dkey);
      return d;
    });
    say("dataset: " + std::to_string(ds.samples.size()) + " samples from " + std::to_string(ds.anchors) + " anchors");
  }
  result.anchors = ds.anchors;
  result.samples = ds.samples.size();
  result.dropped = ds.dropped;

  const auto split = in_stage(Stage::train, [&] {
    auto s = chronological_split(ds.samples.size(), c.preprocess.train_fraction, c.model.window);
    require(!s.train_starts.empty() && !s.test_starts.empty(), Errc::insufficient_data,
            std::to_string(ds.samples.size()) + " samples cannot fill a window of " + std::to_string(c.model.window) +
                " on both sides of the split");
    return s;
  });
  const auto test_labels = window_labels(ds.samples, split.test_starts, c.model.window);
  result.report.label_histogram.assign(c.codebook.count, 0);
  for (auto l : test_labels) ++result.report.label_histogram.at(l);

  // train + evaluate each ablation / seed
  for (const auto& ablation : c.ablations) {
    std::vector<const TopKRow*> seed_rows;
    const std::size_t first_run = result.runs.size();
    for (auto seed : c.seeds) {
      FusionConfig mc = c.model;
      mc.modalities = ablation;
      mc.init_seed = seed;
      nn::TrainConfig tc = c.training;
      tc.seed = seed;
      const std::string tag = file_tag(ablation) + "_seed" + std::to_string(seed);
      const auto ck_path = out_dir / "models" / (tag + ".hwkc");
      const auto loss_path = out_dir / "models" / (tag + ".loss.csv");
      const auto mkey = model_key(c, mc, tc);
      ModelRun run{ablation.label(), seed, {}, {}};
      std::vector<std::vector<double>> preds;
      if (detail::cached(ck_path, mkey)) {
        say(ablation.label() + " seed " + std::to_string(seed) + ": checkpoint up to date, skipping training");
        result.skipped_stages.push_back("train:" + tag);
        auto model = in_stage(Stage::train, [&] { return FusionModel::load(ck_path.string()); });
        run.loss_curve = parse_loss_csv(detail::read_text(loss_path));
        preds = in_stage(Stage::eval, [&] { return predict_windows(model, ds.samples, split.test_starts); });
      } else {
        say("training " + ablation.label() + " seed " + std::to_string(seed) + " on " +
            std::to_string(split.train_starts.size()) + " windows");
        auto trained = in_stage(Stage::train, [&] {
          return train_fusion(ds.samples, mc, tc, c.preprocess.train_fraction, [&](std::size_t e, double loss) {
            say("  epoch " + std::to_string(e + 1) + " loss " + format_fixed(loss, 4));
          });
        });
        in_stage(Stage::train, [&] {
          trained.model.save(ck_path.string());
          write_text(loss_path.string(), loss_csv(trained.training.loss_curve));
          detail::mark(ck_path, mkey);
        });
        run.loss_curve = trained.training.loss_curve;
        preds = std::move(trained.test_predictions);
      }
      run.row = in_stage(Stage::eval,
                         [&] { return make_row(ablation.label(), "model", std::to_string(seed), preds, test_labels); });
      say("  " + ablation.label() + " seed " + std::to_string(seed) + " top-1 " + format_fixed(run.row.accuracy[0], 4) +
          " top-5 " + format_fixed(run.row.accuracy[4], 4));
      result.runs.push_back(std::move(run));
    }
    for (std::size_t i = first_run; i < result.runs.size(); ++i) {
      result.report.rows.push_back(result.runs[i].row);
    }
    for (std::size_t i = first_run; i < result.runs.size(); ++i) seed_rows.push_back(&result.runs[i].row);
    result.report.rows.push_back(mean_row(ablation.label(), seed_rows));
  }

  // baselines on the same test anchors (the last sample of each test window)
  in_stage(Stage::eval, [&] {
    std::vector<AlignedSample> targets;
    for (auto s : split.test_starts) targets.push_back(ds.samples[s + c.model.window - 1]);
    BaselineContext ctx;
    ctx.beam_count = c.codebook.count;
    ctx.bs_position = c.scene.bs_pose.position;
    ctx.origin = c.trajectory.waypoints.front();
    ctx.training = std::span<const AlignedSample>(ds.samples).first(split.train_samples);
    ctx.knn_k = c.knn_k;
    for (auto kind : c.baselines) {
      BaselinePredictor b(kind, ctx);
      result.report.rows.push_back(make_row(to_string(kind), "baseline", "-", predict_baseline(b, targets), test_labels));
    }
  });

  in_stage(Stage::report, [&] {
    write_text((out_dir / "report.csv").string(), report_csv(result.report));
    write_text((out_dir / "labels.csv").string(), label_histogram_csv(result.report));
    write_text((out_dir / "plot.dat").string(), plot_data(result.report));
    write_text((out_dir / "plot.gp").string(), gnuplot_script("plot.dat", "topk.png"));
    nlohmann::json summary{{"name", c.name},
                           {"anchors", result.anchors},
                           {"samples", result.samples},
                           {"train_samples", split.train_samples},
                           {"test_samples", split.test_samples},
                           {"test_windows", split.test_starts.size()},
                           {"dropped", result.dropped}};
    write_text((out_dir / "summary.json").string(), summary.dump(2) + "\n");
  });
  return result;
}

}  // namespace hawkrover

#endif  // HAWKROVER_EXPERIMENT_HPP
