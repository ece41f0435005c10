// Command-line front end for the HawkRover twin.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"

#include "hawkrover/dataset_io.hpp"
#include "hawkrover/eval.hpp"
#include "hawkrover/experiment.hpp"
#include "hawkrover/framestream.hpp"
#include "hawkrover/fusion.hpp"
#include "hawkrover/nn/checkpoint.hpp"
#include "hawkrover/session_log.hpp"

namespace fs = std::filesystem;
using namespace hawkrover;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

ExperimentConfig load_config(const Common& c) {
  return in_stage(Stage::config, [&] { return load_experiment(c.config, c.overrides); });
}

void add_config_options(CLI::App* app, Common& c, bool required = true) {
  auto* opt = app->add_option("-c,--config", c.config, "experiment config (JSON)");
  if (required) opt->required();
  app->add_option("--set", c.overrides, "override a config entry, key.path=value (repeatable)");
}

std::ostream& open_out(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path == "-") return std::cout;
  holder = std::make_unique<std::ofstream>(path, std::ios::binary);
  require(static_cast<bool>(*holder), Errc::io_error, "cannot open " + path + " for writing");
  return *holder;
}

std::istream& open_in(const std::string& path, std::unique_ptr<std::ifstream>& holder) {
  if (path == "-") return std::cin;
  holder = std::make_unique<std::ifstream>(path, std::ios::binary);
  require(static_cast<bool>(*holder), Errc::io_error, "cannot open " + path);
  return *holder;
}

void print_rows(const TopKReport& rep) {
  std::printf("%-20s %-11s %-5s %7s", "configuration", "kind", "seed", "samples");
  for (std::size_t k = 1; k <= kReportMaxK; ++k) std::printf("   top-%zu", k);
  std::printf("\n");
  for (const auto& r : rep.rows) {
    std::printf("%-20s %-11s %-5s %7zu", r.configuration.c_str(), r.kind.c_str(), r.seed.c_str(), r.samples);
    for (double a : r.accuracy) std::printf("  %6.2f%%", 100.0 * a);
    std::printf("\n");
  }
}

std::bitset<kStreamCount> parse_streams(const std::vector<std::string>& names) {
  std::bitset<kStreamCount> mask;
  if (names.empty()) return mask.set();
  for (const auto& n : names) {
    bool found = false;
    for (std::uint8_t i = 0; i < kStreamCount; ++i) {
      if (n == stream_name(static_cast<StreamId>(i))) {
        mask.set(i);
        found = true;
      }
    }
    require(found, Errc::invalid_argument, "unknown stream '" + n + "'");
  }
  return mask;
}

Logger stderr_logger(bool quiet) {
  if (quiet) return {};
  return [](const std::string& m) { std::cerr << m << std::endl; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HawkRover mmWave testbed twin: simulate, record, preprocess, train and evaluate beam predictors"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  // simulate
  Common sim;
  std::string sim_out = "-";
  std::string sim_log;
  auto* simulate = app.add_subcommand("simulate", "run the simulator and emit a raw frame stream");
  add_config_options(simulate, sim);
  simulate->add_option("-o,--out", sim_out, "frame stream destination ('-' = stdout)");
  simulate->add_option("--log", sim_log, "write a session log instead of a frame stream");

  // record
  Common rec;
  std::string rec_in = "-";
  std::string rec_out;
  auto* record = app.add_subcommand("record", "turn a raw frame stream into a session log");
  add_config_options(record, rec, false);
  record->add_option("-i,--in", rec_in, "frame stream source ('-' = stdin)");
  record->add_option("-o,--out", rec_out, "session log path")->required();

  // replay
  std::string rep_in;
  std::string rep_out = "-";
  std::vector<std::string> rep_streams;
  auto* replay = app.add_subcommand("replay", "emit a session log as a raw frame stream");
  replay->add_option("-i,--in", rep_in, "session log")->required();
  replay->add_option("-o,--out", rep_out, "destination ('-' = stdout)");
  replay->add_option("--stream", rep_streams, "only these streams (camera, lidar, imu, mmwave, position, ...)");

  // inspect
  std::string insp_path;
  auto* inspect = app.add_subcommand("inspect", "summarize a session log, dataset or checkpoint");
  inspect->add_option("path", insp_path, "file to inspect")->required();

  // preprocess
  Common pre;
  std::string pre_in;
  std::string pre_out;
  std::string pre_csv;
  auto* preprocess = app.add_subcommand("preprocess", "align a session log into a dataset");
  add_config_options(preprocess, pre);
  preprocess->add_option("-i,--in", pre_in, "session log")->required();
  preprocess->add_option("-o,--out", pre_out, "dataset path")->required();
  preprocess->add_option("--csv", pre_csv, "also write a CSV view");

  // train
  Common tr;
  std::string tr_data;
  std::string tr_out;
  std::string tr_ablation = "L+C+I";
  std::uint64_t tr_seed = 1;
  std::string tr_loss;
  auto* train = app.add_subcommand("train", "train one fusion model on a dataset");
  add_config_options(train, tr);
  train->add_option("-d,--dataset", tr_data, "dataset path")->required();
  train->add_option("-o,--out", tr_out, "checkpoint path")->required();
  train->add_option("--ablation", tr_ablation, "enabled modalities, e.g. L, L+C, L+C+I");
  train->add_option("--seed", tr_seed, "initialization and shuffling seed");
  train->add_option("--loss-csv", tr_loss, "write the per-epoch loss curve");

  // eval
  Common ev;
  std::string ev_data;
  std::vector<std::string> ev_models;
  std::string ev_out;
  auto* eval = app.add_subcommand("eval", "top-K accuracy of checkpoints and baselines on the test split");
  add_config_options(eval, ev);
  eval->add_option("-d,--dataset", ev_data, "dataset path")->required();
  eval->add_option("-m,--model", ev_models, "checkpoint(s) to evaluate");
  eval->add_option("-o,--out", ev_out, "write the report CSV here");

  // report
  std::string rp_dir;
  auto* report = app.add_subcommand("report", "print a run's report and regenerate its plot files");
  report->add_option("dir", rp_dir, "experiment output directory")->required();

  // predict
  std::string pr_data;
  std::string pr_model;
  std::size_t pr_index = 0;
  auto* predict = app.add_subcommand("predict", "predict the beam for the window ending at one dataset sample");
  predict->add_option("-d,--dataset", pr_data, "dataset path")->required();
  predict->add_option("-m,--model", pr_model, "checkpoint")->required();
  predict->add_option("--index", pr_index, "index of the last sample in the window")->required();

  // all
  Common all;
  std::string all_out;
  auto* run_all = app.add_subcommand("all", "run the full experiment described by a config");
  add_config_options(run_all, all);
  run_all->add_option("-o,--out", all_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  const Logger log = stderr_logger(quiet);

  try {
    if (*simulate) {
      const auto cfg = load_config(sim);
      if (!sim_log.empty()) {
        const auto frames = simulate_and_record(cfg, sim_log);
        if (log) log("wrote " + std::to_string(frames) + " frames to " + sim_log);
      } else {
        in_stage(Stage::simulate, [&] {
          std::unique_ptr<std::ofstream> holder;
          auto& out = open_out(sim_out, holder);
          run_session(cfg.scene, cfg.trajectory, cfg.codebook.build(), cfg.session,
                      [&](TimestampedRecord&& r) { write_frame(out, r); });
          out.flush();
        });
      }
    } else if (*record) {
      SessionHeader header;
      if (!rec.config.empty()) header = session_header(load_config(rec));
      in_stage(Stage::record, [&] {
        std::unique_ptr<std::ifstream> holder;
        auto& in = open_in(rec_in, holder);
        LogWriter writer(rec_out, header);
        const auto st = read_frame_stream(in, [&](TimestampedRecord&& r) { writer.append(r); });
        writer.close();
        if (log) log("recorded " + std::to_string(st.frames) + " frames (" + to_string(st.stop) + ")");
        require(st.stop == DecodeStatus::ok || st.stop == DecodeStatus::truncated_frame, Errc::io_error,
                std::string("input stream damaged: ") + to_string(st.stop));
      });
    } else if (*replay) {
      in_stage(Stage::record, [&] {
        const auto mask = parse_streams(rep_streams);
        const auto session = read_log(rep_in);
        std::unique_ptr<std::ofstream> holder;
        auto& out = open_out(rep_out, holder);
        for (const auto& r : session.records)
          if (mask.test(static_cast<std::size_t>(r.stream))) write_frame(out, r);
        out.flush();
      });
    } else if (*inspect) {
      in_stage(Stage::report, [&] {
        const Bytes data = read_file(insp_path);
        nlohmann::json j;
        const std::string magic(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, data.size())));
        if (magic == "HWKS") {
          const auto s = parse_log(data);
          j["type"] = "session-log";
          j["scene_hash"] = hex64(s.header.scene_hash);
          j["config_hash"] = hex64(s.header.config_hash);
          j["records"] = s.records.size();
          for (std::uint8_t i = 0; i < kStreamCount; ++i) {
            const auto id = static_cast<StreamId>(i);
            if (const auto n = s.count(id)) j["streams"][stream_name(id)] = n;
          }
          j["tail"] = to_string(s.tail_status);
          j["truncated"] = s.truncated;
          j["valid_bytes"] = s.valid_bytes;
        } else if (magic == "HWKD") {
          const auto d = decode_dataset(data);
          j["type"] = "dataset";
          j["anchors"] = d.anchors;
          j["samples"] = d.samples.size();
          j["dropped"] = d.dropped;
          if (!d.samples.empty()) j["input"] = to_json(InputShape::of(d.samples.front()));
        } else if (magic == "HWKC") {
          const auto c = nn::decode_checkpoint(data);
          j["type"] = "checkpoint";
          j["metadata"] = nlohmann::json::parse(c.metadata, nullptr, false);
          std::size_t count = 0;
          for (const auto& [name, t] : c.tensors) {
            j["tensors"][name] = t.shape_string();
            count += t.size();
          }
          j["parameters"] = count;
        } else {
          fail(Errc::corrupt_header, insp_path + ": unrecognized file type");
        }
        std::cout << j.dump(2) << "\n";
      });
    } else if (*preprocess) {
      const auto cfg = load_config(pre);
      in_stage(Stage::preprocess, [&] {
        const auto session = read_log(pre_in);
        if (session.truncated || session.tail_status != DecodeStatus::ok) {
          if (log) log(std::string("warning: log tail damaged (") + to_string(session.tail_status) + "), using " +
                       std::to_string(session.records.size()) + " intact records");
        }
        const auto ds = build_dataset(session, cfg.preprocess);
        save_dataset(pre_out, ds);
        if (!pre_csv.empty()) write_text(pre_csv, dataset_csv(ds));
        if (log) {
          std::string drops;
          for (const auto& [reason, n] : ds.dropped) drops += " " + reason + "=" + std::to_string(n);
          log(std::to_string(ds.samples.size()) + " samples from " + std::to_string(ds.anchors) + " anchors" +
              (drops.empty() ? "" : "; dropped" + drops));
        }
      });
    } else if (*train) {
      const auto cfg = load_config(tr);
      const auto ds = in_stage(Stage::preprocess, [&] { return load_dataset(tr_data); });
      in_stage(Stage::train, [&] {
        FusionConfig mc = cfg.model;
        mc.modalities = modality_set_from_label(tr_ablation);
        mc.init_seed = tr_seed;
        nn::TrainConfig tc = cfg.training;
        tc.seed = tr_seed;
        auto res = train_fusion(ds.samples, mc, tc, cfg.preprocess.train_fraction, [&](std::size_t e, double loss) {
          if (log) log("epoch " + std::to_string(e + 1) + " loss " + format_fixed(loss, 4));
        });
        res.model.save(tr_out);
        if (!tr_loss.empty()) write_text(tr_loss, loss_csv(res.training.loss_curve));
        std::printf("%s seed %llu: test windows %zu", tr_ablation.c_str(), static_cast<unsigned long long>(tr_seed),
                    res.split.test_starts.size());
        for (std::size_t k = 0; k < res.test_topk.size(); ++k) std::printf("  top-%zu %.2f%%", k + 1, 100.0 * res.test_topk[k]);
        std::printf("\n");
      });
    } else if (*eval) {
      const auto cfg = load_config(ev);
      const auto ds = in_stage(Stage::preprocess, [&] { return load_dataset(ev_data); });
      const auto rep = in_stage(Stage::eval, [&] {
        TopKReport rep;
        const auto split = chronological_split(ds.samples.size(), cfg.preprocess.train_fraction, cfg.model.window);
        require(!split.test_starts.empty(), Errc::insufficient_data, "no complete test window");
        const auto labels = window_labels(ds.samples, split.test_starts, cfg.model.window);
        for (const auto& path : ev_models) {
          const auto model = FusionModel::load(path);
          require(model.config().window == cfg.model.window, Errc::window_length_mismatch,
                  path + " was trained with a different window length");
          rep.rows.push_back(make_row(model.config().modalities.label(), "model", std::to_string(model.config().init_seed),
                                      predict_windows(model, ds.samples, split.test_starts), labels));
        }
        std::vector<AlignedSample> targets;
        for (auto s : split.test_starts) targets.push_back(ds.samples[s + cfg.model.window - 1]);
        BaselineContext ctx;
        ctx.beam_count = cfg.codebook.count;
        ctx.bs_position = cfg.scene.bs_pose.position;
        ctx.origin = cfg.trajectory.waypoints.front();
        ctx.training = std::span<const AlignedSample>(ds.samples).first(split.train_samples);
        ctx.knn_k = cfg.knn_k;
        for (auto kind : cfg.baselines)
          rep.rows.push_back(make_row(to_string(kind), "baseline", "-",
                                      predict_baseline(BaselinePredictor(kind, ctx), targets), labels));
        return rep;
      });
      in_stage(Stage::report, [&] {
        print_rows(rep);
        if (!ev_out.empty()) write_text(ev_out, report_csv(rep));
      });
    } else if (*report) {
      in_stage(Stage::report, [&] {
        const fs::path dir(rp_dir);
        const auto bytes = read_file((dir / "report.csv").string());
        const auto rep = parse_report_csv(std::string(bytes.begin(), bytes.end()));
        print_rows(rep);
        write_text((dir / "plot.dat").string(), plot_data(rep));
        write_text((dir / "plot.gp").string(), gnuplot_script("plot.dat", "topk.png"));
        if (log) log("plot data in " + (dir / "plot.dat").string() + "; render with: cd " + dir.string() + " && gnuplot plot.gp");
      });
    } else if (*predict) {
      const auto ds = in_stage(Stage::preprocess, [&] { return load_dataset(pr_data); });
      in_stage(Stage::eval, [&] {
        const auto model = FusionModel::load(pr_model);
        const std::size_t w = model.config().window;
        require(pr_index < ds.samples.size() && pr_index + 1 >= w, Errc::out_of_range,
                "index must lie in [" + std::to_string(w - 1) + ", " + std::to_string(ds.samples.size()) + ")");
        const auto probs = model.predict(std::span<const AlignedSample>(ds.samples).subspan(pr_index + 1 - w, w));
        std::vector<std::size_t> order(probs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return probs[a] > probs[b]; });
        nlohmann::json j{{"index", pr_index},
                         {"timestamp_ns", ds.samples[pr_index].timestamp},
                         {"label", ds.samples[pr_index].label},
                         {"top5", std::vector<std::size_t>(order.begin(), order.begin() + std::min<std::size_t>(5, order.size()))},
                         {"probabilities", probs}};
        std::cout << j.dump() << "\n";
      });
    } else if (*run_all) {
      const auto cfg = load_config(all);
      const auto res = run_experiment(cfg, all_out, log);
      print_rows(res.report);
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << " [" << to_string(e.code()) << "]\n";
    return static_cast<int>(e.stage());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << " [" << to_string(e.code()) << "]\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
