#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nest/config.hpp"
#include "nest/model.hpp"
#include "nest/ops.hpp"
#include "nest/training.hpp"

namespace nest {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig quick_run(int epochs = 3) {
  auto cfg = preset("nest-micro");
  cfg.train.epochs = epochs;
  cfg.data.synth_train = 16;
  cfg.data.synth_test = 8;
  return cfg;
}

// Textbook AdamW in double precision.
struct ReferenceAdamW {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0;
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& w, const std::vector<double>& g, double lr, bool decay) {
    if (m.empty()) m.assign(w.size(), 0), v.assign(w.size(), 0);
    ++t;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      const double mhat = m[k] / (1 - std::pow(b1, t)), vhat = v[k] / (1 - std::pow(b2, t));
      if (decay) w[k] -= lr * wd * w[k];
      w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

TEST(AdamW, MatchesReferenceOverSeveralSteps) {
  ParamSet p;
  p.add("w", Tensor::from_vector({3}, {1.0f, -2.0f, 0.5f}), true);
  AdamW opt(p, AdamWOptions{.weight_decay = 0.1});
  ReferenceAdamW ref;
  ref.wd = 0.1;
  std::vector<double> w{1.0, -2.0, 0.5};
  const std::vector<std::vector<double>> grads{{0.5, -0.1, 0.0}, {0.2, 0.3, -1.0}, {-0.4, 0.0, 2.0}};
  for (const auto& g : grads) {
    p.zero_grad();
    auto buf = p.at("w").mutable_grad();
    for (int k = 0; k < 3; ++k) buf[k] = static_cast<float>(g[k]);
    opt.step(p, 0.01);
    ref.step(w, g, 0.01, true);
  }
  EXPECT_EQ(opt.steps(), 3);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p["w"].values()[k], w[k], 1e-6);
  EXPECT_EQ(opt.first_moments()[0].size(), 3u);
}

TEST(AdamW, FirstStepMovesEachWeightByTheLearningRate) {
  ParamSet p;
  p.add("w", Tensor::from_vector({2}, {0.0f, 0.0f}), false);
  AdamW opt(p, {});
  auto g = p.at("w").mutable_grad();
  g[0] = 3.0f;
  g[1] = -0.001f;
  opt.step(p, 0.1);
  EXPECT_NEAR(p["w"].values()[0], -0.1f, 1e-6f);
  EXPECT_NEAR(p["w"].values()[1], 0.1f, 1e-4f);
}

TEST(AdamW, DecayOnlyTouchesFlaggedParameters) {
  ParamSet p;
  p.add("kernel", Tensor::full({2}, 1.0f), true);
  p.add("bias", Tensor::full({2}, 1.0f), false);
  AdamW opt(p, AdamWOptions{.weight_decay = 0.5});
  opt.step(p, 0.1);  // no gradients: only decay acts
  for (float v : p["kernel"].values()) EXPECT_FLOAT_EQ(v, 0.95f);
  for (float v : p["bias"].values()) EXPECT_FLOAT_EQ(v, 1.0f);
}

TEST(AdamW, NonFiniteGradientNamesParameterAndStepAndLeavesWeights) {
  ParamSet p;
  p.add("a", Tensor::full({2}, 1.0f));
  p.add("b", Tensor::full({2}, 1.0f));
  AdamW opt(p, {});
  p.at("a").mutable_grad()[0] = 1.0f;
  opt.step(p, 0.1);
  const float a_before = p["a"].values()[0];
  p.at("b").mutable_grad()[1] = std::nanf("");
  try {
    opt.step(p, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("b"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 2"), std::string::npos) << msg;
  }
  EXPECT_EQ(p["a"].values()[0], a_before);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(LrSchedule, WarmupThenCosineToZero) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 10, 110, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 10, 110, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 10, 110, 1.0), 1.0);
  EXPECT_NEAR(lr_schedule(35, 10, 110, 1.0), 0.5 * (1 + std::cos(std::numbers::pi / 4)), 1e-12);
  EXPECT_NEAR(lr_schedule(60, 10, 110, 2.0), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(lr_schedule(110, 10, 110, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(500, 10, 110, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(0, 0, 10, 1.0), 1.0);
  EXPECT_THROW(lr_schedule(-1, 0, 10, 1.0), ContractError);
  for (std::int64_t s = 10; s < 110; ++s) EXPECT_LE(lr_schedule(s + 1, 10, 110, 1.0), lr_schedule(s, 10, 110, 1.0));
}

TEST(LrSchedule, FinalStepIsNearlyZero) {
  // nest-micro: 4 steps per epoch, 5 warmup epochs, 200 epochs.
  EXPECT_LT(lr_schedule(799, 20, 800, 5e-3), 1e-3 * 5e-3);
  EXPECT_GT(lr_schedule(799, 20, 800, 5e-3), 0.0);
}

TEST(Training, InitialLossIsNearLogOfClassCount) {
  const auto cfg = quick_run();
  const auto splits = load_splits(cfg.data, cfg.model, 0);
  Rng rng(0);
  const auto p = init_nest(cfg.model, rng);
  const auto stats = channel_stats(splits.train);
  NoGradGuard no_grad;
  const auto logits = forward(cfg.model, p, normalize(splits.train.images, stats.mean, stats.std)).logits;
  const double loss = cross_entropy(logits, std::span<const int>(splits.train.labels), 0.1f).item();
  EXPECT_NEAR(loss, std::log(4.0), 0.1 * std::log(4.0));
}

// Labels drawn independently of the images: any model scores 1/4 on
// average; 400 samples put four standard errors at about 0.087.
TEST(Training, RandomLabelsGiveChanceAccuracy) {
  const auto cfg = quick_run();
  auto data = synth_quadrants(400, 16, 4, 3, "test");
  Rng rng(8);
  for (auto& l : data.labels) l = static_cast<int>(rng.uniform_int(4));
  const auto p = init_nest(cfg.model, rng);
  EXPECT_NEAR(evaluate(cfg.model, p, data, {}, {}), 0.25, 0.087);
}

// Full-batch steps on a fixed batch: probe the largest learning rate on a
// coarse grid that still lowers the loss over ten steps, then a tenth of it
// must lower the three-step moving average at every step.
TEST(Training, SmallStepsDecreaseLossOnAFixedBatch) {
  const auto cfg = quick_run();
  const auto data = synth_quadrants(16, 16, 4, 4, "train");
  const auto images = normalize(data.images, {0.3, 0.3, 0.3}, {0.4, 0.4, 0.4});
  const std::span<const int> labels(data.labels);
  auto run = [&](double lr) {
    Rng rng(0);
    auto p = init_nest(cfg.model, rng);
    AdamW opt(p, {});
    std::vector<double> losses;
    for (int s = 0; s <= 10; ++s) {
      p.zero_grad();
      auto loss = cross_entropy(forward(cfg.model, p, images).logits, labels, 0.0f);
      losses.push_back(loss.item());
      if (s == 10) break;
      loss.backward();
      opt.step(p, lr);
    }
    return losses;
  };
  double threshold = 0;
  for (double lr : {1.0, 0.3, 0.1, 0.03, 0.01, 0.003}) {
    const auto l = run(lr);
    if (std::isfinite(l.back()) && l.back() < l.front()) {
      threshold = lr;
      break;
    }
  }
  ASSERT_GT(threshold, 0.0);
  const auto l = run(threshold / 10);
  for (std::size_t s = 3; s < l.size(); ++s)
    EXPECT_LT(l[s] + l[s - 1] + l[s - 2], l[s - 1] + l[s - 2] + l[s - 3]) << "step " << s;
}

TEST(Training, SameSeedReproducesRunExactly) {
  const auto cfg = quick_run();
  const auto splits = load_splits(cfg.data, cfg.model, cfg.train.seed);
  const auto a = run_training(cfg, splits.train, &splits.test);
  const auto b = run_training(cfg, splits.train, &splits.test);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const auto va = a.params.entries()[i].tensor.values(), vb = b.params.entries()[i].tensor.values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin())) << a.params.entries()[i].name;
  }
  auto other = cfg;
  other.train.seed = 1;
  EXPECT_NE(run_training(other, splits.train, &splits.test).history.back().train_loss, a.history.back().train_loss);
}

TEST(Training, ResolvesNormalizationStatisticsAndTracksSteps) {
  const auto cfg = quick_run(2);
  const auto splits = load_splits(cfg.data, cfg.model, 0);
  const auto report = run_training(cfg, splits.train, nullptr);
  const auto stats = channel_stats(splits.train);
  EXPECT_EQ(report.config.data.mean, stats.mean);
  EXPECT_EQ(report.config.data.std, stats.std);
  EXPECT_EQ(report.eval_acc, -1.0);
  for (const auto& m : report.history) EXPECT_LT(m.eval_acc, 0);

  Trainer trainer(report.config, report.params, splits.train.size());
  trainer.train_epoch(splits.train);
  EXPECT_EQ(trainer.step(), 1);  // 16 samples, batch 16
  EXPECT_EQ(trainer.epoch(), 1);
}

TEST(Training, MetricsCsvHasOneRowPerEpoch) {
  const auto cfg = quick_run(2);
  const auto splits = load_splits(cfg.data, cfg.model, 0);
  const auto path = std::filesystem::temp_directory_path() / "nest_metrics_test.csv";
  int seen = 0;
  run_training(cfg, splits.train, &splits.test, path, [&](const EpochMetrics& m) { EXPECT_EQ(m.epoch, ++seen); });
  std::istringstream lines(read_file(path));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "epoch,lr,train_loss,train_acc,eval_acc");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
    EXPECT_EQ(line.substr(0, 2), std::to_string(rows) + ",");
  }
  EXPECT_EQ(rows, 2);
}

TEST(Training, NonFiniteInputFailsNamingTheStep) {
  const auto cfg = quick_run(1);
  auto splits = load_splits(cfg.data, cfg.model, 0);
  auto bad = splits.train;
  std::vector<float> pixels(bad.images.values().begin(), bad.images.values().end());
  pixels[5] = std::numeric_limits<float>::infinity();
  bad.images = Tensor::from_vector(bad.images.shape(), pixels);
  auto resolved = cfg;
  const auto stats = channel_stats(splits.train);
  resolved.data.mean = stats.mean;
  resolved.data.std = stats.std;
  try {
    run_training(resolved, bad, nullptr);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("training step 1"), std::string::npos) << e.what();
  }
}

TEST(Training, EvaluateRejectsEmptyData) {
  const auto cfg = quick_run();
  Rng rng(0);
  const auto p = init_nest(cfg.model, rng);
  Dataset empty;
  EXPECT_THROW(evaluate(cfg.model, p, empty, {}, {}), ContractError);
  EXPECT_THROW(Trainer(cfg, p, 0), ContractError);
}

TEST(Ablation, ReportsEachVariantAndWritesCsv) {
  const auto cfg = quick_run(1);
  const auto splits = load_splits(cfg.data, cfg.model, 0);
  const std::vector<AggregationSpec> variants{{AggregationKind::kPatchMerge, Plane::kImage},
                                              {AggregationKind::kSubsample2x2, Plane::kBlock},
                                              {AggregationKind::kConv4x1, Plane::kImage}};
  const auto rows = run_ablation(cfg, variants, splits.train, &splits.test);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].status, "ok");
  EXPECT_EQ(rows[1].status, "ok");
  EXPECT_EQ(rows[2].status, "not_implemented");
  EXPECT_GT(rows[0].params, 0);
  EXPECT_GE(rows[0].eval_acc, 0.0);

  const auto path = std::filesystem::temp_directory_path() / "nest_ablation_test.csv";
  write_ablation_csv(path, rows);
  std::istringstream lines(read_file(path));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "aggregation,plane,status,params,final_loss,train_acc,eval_acc");
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("patch_merge,image,ok,", 0), 0u) << line;
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("subsample_2x2,block,ok,", 0), 0u) << line;
  std::getline(lines, line);
  EXPECT_EQ(line, "conv4x1,image,not_implemented,0,,,");
}

}  // namespace
}  // namespace nest
