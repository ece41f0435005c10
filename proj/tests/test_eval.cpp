#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hawkrover/eval.hpp"
#include "support/oracles.hpp"

using namespace hawkrover;

namespace {

template <typename F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected hawkrover::Error";
  return Errc::config_error;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = rng() % classes;
  return out;
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

AlignedSample sample_at(Vec2 rel, std::size_t label) {
  AlignedSample s;
  s.rel_position = rel;
  s.label = label;
  return s;
}

}  // namespace

TEST(LabelRank, OrderAndTies) {
  const std::vector<double> p = {0.1, 0.4, 0.2, 0.4, 0.0};
  EXPECT_EQ(label_rank(p, 1), 0u);
  EXPECT_EQ(label_rank(p, 3), 1u);
  EXPECT_EQ(label_rank(p, 2), 2u);
  EXPECT_EQ(label_rank(p, 0), 3u);
  EXPECT_EQ(label_rank(p, 4), 4u);
  const std::vector<double> flat(6, 1.0 / 6.0);
  for (std::size_t l = 0; l < flat.size(); ++l) EXPECT_EQ(label_rank(flat, l), l);
  EXPECT_EQ(error_code([&] { label_rank(p, 5); }), Errc::label_out_of_range);
}

TEST(TopK, SmallExample) {
  const std::vector<std::vector<double>> preds = {{0.7, 0.2, 0.1}, {0.2, 0.3, 0.5}, {0.1, 0.1, 0.8}};
  const std::vector<std::size_t> labels = {0, 1, 1};
  EXPECT_DOUBLE_EQ(topk_accuracy(preds, labels, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(preds, labels, 2), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(preds, labels, 3), 1.0);
  const auto curve = topk_curve(preds, labels, 3);
  EXPECT_EQ(curve, (std::vector<double>{1.0 / 3.0, 2.0 / 3.0, 1.0}));
}

TEST(TopK, Errors) {
  const std::vector<std::vector<double>> preds = {{0.5, 0.5}};
  const std::vector<std::size_t> two = {0, 1};
  EXPECT_EQ(error_code([&] { topk_accuracy(preds, two, 1); }), Errc::length_mismatch);
  EXPECT_EQ(error_code([&] { topk_curve(preds, two, 3); }), Errc::length_mismatch);
  const std::vector<std::size_t> one = {0};
  EXPECT_EQ(error_code([&] { topk_accuracy(preds, one, 0); }), Errc::invalid_argument);
  const std::vector<std::size_t> bad = {2};
  EXPECT_EQ(error_code([&] { topk_accuracy(preds, bad, 1); }), Errc::label_out_of_range);
  EXPECT_EQ(topk_accuracy({}, {}, 1), 0.0);
}

TEST(TopK, MonotoneAndFullAtAllClasses) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    const auto preds = oracle::uniform_scores(n, kBeamCount, rng);
    const auto labels = random_labels(n, kBeamCount, rng);
    double prev = 0.0;
    for (std::size_t k = 1; k <= kBeamCount; ++k) {
      const double a = topk_accuracy(preds, labels, k);
      EXPECT_GE(a, prev);
      prev = a;
    }
    EXPECT_EQ(topk_accuracy(preds, labels, kBeamCount), 1.0);
    EXPECT_EQ(topk_accuracy(preds, labels, kBeamCount + 4), 1.0);
    const auto curve = topk_curve(preds, labels, kBeamCount);
    for (std::size_t k = 1; k <= kBeamCount; ++k) EXPECT_EQ(curve[k - 1], topk_accuracy(preds, labels, k));
  }
}

TEST(TopK, UniformPredictorScoresChance) {
  std::mt19937_64 rng(2024);
  const std::size_t n = 10000;
  const auto preds = oracle::uniform_scores(n, kBeamCount, rng);
  const auto labels = random_labels(n, kBeamCount, rng);
  EXPECT_NEAR(topk_accuracy(preds, labels, 1), 1.0 / 36.0, 0.01);
  EXPECT_NEAR(topk_accuracy(preds, labels, 5), 5.0 / 36.0, 0.02);
}

TEST(TopK, IdenticalScoresFavourLowIndices) {
  const std::vector<std::vector<double>> preds(4, std::vector<double>(kBeamCount, 0.0));
  const std::vector<std::size_t> labels = {0, 4, 5, 35};
  EXPECT_DOUBLE_EQ(topk_accuracy(preds, labels, 5), 0.5);
}

TEST(Baselines, Names) {
  for (auto k : kAllBaselines) EXPECT_EQ(baseline_from_string(to_string(k)), k);
  EXPECT_EQ(error_code([] { baseline_from_string("psychic"); }), Errc::config_error);
}

TEST(Baselines, NearestBeam) {
  EXPECT_EQ(nearest_beam(0.0, 36), 0u);
  EXPECT_EQ(nearest_beam(deg2rad(14.0), 36), 1u);
  EXPECT_EQ(nearest_beam(deg2rad(-4.0), 36), 0u);
  EXPECT_EQ(nearest_beam(deg2rad(-6.0), 36), 35u);
  EXPECT_EQ(nearest_beam(deg2rad(5.0), 36), 0u);
  EXPECT_EQ(nearest_beam(deg2rad(725.0), 36), 0u);
}

TEST(Baselines, OracleIsPerfect) {
  std::vector<AlignedSample> samples;
  for (std::size_t i = 0; i < 50; ++i) samples.push_back(sample_at({0, 0}, (i * 7) % kBeamCount));
  const BaselinePredictor b(BaselineKind::exhaustive_oracle, {});
  const auto preds = predict_baseline(b, samples);
  std::vector<std::size_t> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  EXPECT_EQ(topk_accuracy(preds, labels, 1), 1.0);
}

TEST(Baselines, MajorityMatchesFrequency) {
  std::vector<AlignedSample> train;
  for (std::size_t i = 0; i < 30; ++i) train.push_back(sample_at({0, 0}, i < 12 ? 7 : (i < 22 ? 3 : 9)));
  BaselineContext ctx;
  ctx.training = train;
  const BaselinePredictor b(BaselineKind::majority_class, ctx);
  EXPECT_EQ(b.majority_label(), 7u);

  std::vector<AlignedSample> test;
  std::mt19937_64 rng(3);
  std::size_t sevens = 0;
  for (std::size_t i = 0; i < 400; ++i) {
    test.push_back(sample_at({0, 0}, rng() % 4 == 0 ? 7 : rng() % kBeamCount));
    if (test.back().label == 7) ++sevens;
  }
  std::vector<std::size_t> labels;
  for (const auto& s : test) labels.push_back(s.label);
  EXPECT_DOUBLE_EQ(topk_accuracy(predict_baseline(b, test), labels, 1), static_cast<double>(sevens) / 400.0);

  std::vector<AlignedSample> tie = {sample_at({0, 0}, 5), sample_at({0, 0}, 2)};
  ctx.training = tie;
  EXPECT_EQ(BaselinePredictor(BaselineKind::majority_class, ctx).majority_label(), 2u);
}

TEST(Baselines, KnnVotesAmongNearest) {
  std::vector<AlignedSample> train = {sample_at({0, 0}, 1), sample_at({0.1, 0}, 1), sample_at({0, 0.2}, 2),
                                      sample_at({5, 5}, 9), sample_at({5.1, 5}, 9)};
  BaselineContext ctx;
  ctx.training = train;
  ctx.knn_k = 3;
  const BaselinePredictor b(BaselineKind::knn_fingerprint, ctx);
  const auto p = b.predict(sample_at({0.05, 0.05}, 0));
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p[2], 1.0 / 3.0, 1e-12);
  const auto q = b.predict(sample_at({5, 5}, 0));
  EXPECT_EQ(label_rank(q, 9), 0u);

  ctx.knn_k = 50;
  const BaselinePredictor all(BaselineKind::knn_fingerprint, ctx);
  const auto r = all.predict(sample_at({0, 0}, 0));
  EXPECT_NEAR(r[9], 0.4, 1e-12);
}

TEST(Baselines, MissingContext) {
  EXPECT_EQ(error_code([] { BaselinePredictor(BaselineKind::knn_fingerprint, {}); }), Errc::missing_context);
  EXPECT_EQ(error_code([] { BaselinePredictor(BaselineKind::majority_class, {}); }), Errc::missing_context);
  EXPECT_EQ(error_code([] { BaselinePredictor(BaselineKind::geometric_bearing, {}); }), Errc::missing_context);
  BaselineContext ctx;
  ctx.bs_position = Vec2{0, 0};
  EXPECT_EQ(error_code([&] { BaselinePredictor(BaselineKind::geometric_bearing, ctx); }), Errc::missing_context);
  ctx.origin = Vec2{0, 0};
  const BaselinePredictor g(BaselineKind::geometric_bearing, ctx);
  EXPECT_EQ(error_code([&] { g.predict(sample_at({1, 1}, 0)); }), Errc::missing_context);
}

TEST(Baselines, GeometricBearingInFreeSpace) {
  const Scene scene = oracle::free_space_scene();
  Trajectory traj;
  traj.waypoints = {{-6, -5}, {7, -5}, {7, 6}, {-6, 6}};
  traj.speed = 0.8;
  traj.loop = true;
  auto cfg = oracle::ideal_session(40.0);
  cfg.camera.width = 20;
  cfg.camera.height = 10;
  cfg.lidar.rays = 90;
  auto opt = oracle::options_for(cfg);
  opt.position_source = PositionSource::location;
  opt.camera_downsample = 1;
  const auto ds = build_dataset(oracle::simulate(scene, traj, cfg), opt);
  ASSERT_GT(ds.samples.size(), 350u);

  BaselineContext ctx;
  ctx.bs_position = scene.bs_pose.position;
  ctx.origin = traj.waypoints.front();
  const BaselinePredictor g(BaselineKind::geometric_bearing, ctx);
  std::vector<std::size_t> labels;
  for (const auto& s : ds.samples) labels.push_back(s.label);
  EXPECT_GE(topk_accuracy(predict_baseline(g, ds.samples), labels, 1), 0.99);
}

TEST(Report, CsvRoundTrip) {
  TopKReport rep;
  rep.rows.push_back({"L+C+I", "model", "1", 1180, {0.5, 0.75, 0.8, 0.9, 0.95}});
  rep.rows.push_back({"knn-fingerprint", "baseline", "-", 1180, {0.123456, 0.2, 0.3, 0.4, 1.0}});
  const auto text = report_csv(rep);
  EXPECT_EQ(text.substr(0, text.find('\n')), "configuration,kind,seed,samples,top1,top2,top3,top4,top5");
  const auto back = parse_report_csv(text);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].configuration, "L+C+I");
  EXPECT_EQ(back.rows[1].seed, "-");
  EXPECT_EQ(back.rows[1].samples, 1180u);
  EXPECT_EQ(back.rows[1].accuracy[0], 0.123456);
  EXPECT_EQ(report_csv(back), text);
  ASSERT_NE(back.find("L+C+I", "1"), nullptr);
  EXPECT_EQ(back.find("L+C+I", "2"), nullptr);
  EXPECT_EQ(error_code([] { parse_report_csv("hello\n"); }), Errc::corrupt_header);
  EXPECT_EQ(error_code([] { parse_report_csv("configuration,kind,seed,samples,top1\nL,model,1\n"); }),
            Errc::corrupt_header);
}

TEST(Report, MeanRow) {
  const TopKRow a{"L", "model", "1", 10, {0.2, 0.4, 0.6, 0.8, 1.0}};
  const TopKRow b{"L", "model", "2", 10, {0.4, 0.4, 0.4, 0.4, 0.4}};
  const auto m = mean_row("L", {&a, &b});
  EXPECT_EQ(m.seed, "mean");
  EXPECT_EQ(m.kind, "model-mean");
  EXPECT_NEAR(m.accuracy[0], 0.3, 1e-15);
  EXPECT_NEAR(m.accuracy[4], 0.7, 1e-15);
  EXPECT_EQ(error_code([] { mean_row("L", {}); }), Errc::insufficient_data);
}

TEST(Report, PlotDataUsesSeedMeans) {
  TopKReport rep;
  rep.rows.push_back({"L", "model", "1", 5, {0.1, 0.2, 0.3, 0.4, 0.5}});
  rep.rows.push_back({"L", "model-mean", "mean", 5, {0.1, 0.2, 0.3, 0.4, 0.5}});
  rep.label_histogram = {3, 0, 2};
  const auto plot = plot_data(rep);
  EXPECT_NE(plot.find("\"L\" 10.000 20.000 30.000 40.000 50.000"), std::string::npos);
  EXPECT_EQ(plot.find("\"L\"", plot.find("\"L\"") + 1), std::string::npos);
  EXPECT_EQ(label_histogram_csv(rep), "beam,count\n0,3\n1,0\n2,2\n");
}
