#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "topicmatch/errors.h"
#include "topicmatch/trainer.h"

using namespace topicmatch;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(Variant v = Variant::kFast) {
  ModelConfig cfg;
  cfg.widths = BackboneWidths{8, 12, 16};
  cfg.matcher.num_topics = 4;
  cfg.matcher.k_covis = 2;
  cfg.matcher.variant = v;
  cfg.seed = 11;
  return cfg;
}

SceneParams small_scene() {
  SceneParams p;
  p.width = 64;
  p.height = 64;
  return p;
}

std::vector<ag::Matrix> snapshot(Model& m) {
  std::vector<ag::Matrix> out;
  for (auto& [name, p] : m.parameters()) out.push_back(p->value());
  return out;
}

}  // namespace

TEST(Adam, MatchesClosedFormMoments) {
  ag::Parameter p(ag::Matrix::Constant(1, 1, 0.5));
  const NamedParameters params{{"p", &p}};
  Adam adam;
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double value = 0.5, m = 0.0, v = 0.0;
  const double grads[] = {0.3, -1.2, 0.05};
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    p.zero_grad();
    p.grad() = ag::Matrix::Constant(1, 1, g);
    adam.step(params, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    value -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p.value()(0, 0), value, 1e-10) << t;
  }
  EXPECT_EQ(adam.state().step, 3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ag::Parameter p(ag::Matrix::Constant(1, 1, 0.0));
  p.grad() = ag::Matrix::Constant(1, 1, 4.0);
  Adam adam;
  adam.step({{"p", &p}}, 1e-3);
  EXPECT_NEAR(p.value()(0, 0), -1e-3, 1e-10);
}

TEST(Optim, ClipAndCosine) {
  ag::Parameter a(ag::Matrix::Zero(1, 2)), b(ag::Matrix::Zero(1, 1));
  a.grad() = (ag::Matrix(1, 2) << 3.0, 0.0).finished();
  b.grad() = ag::Matrix::Constant(1, 1, 4.0);
  const NamedParameters params{{"a", &a}, {"b", &b}};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(b.grad()(0, 0), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 4), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 2, 4), 5e-4, 1e-18);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.model = tiny_model();
  EXPECT_NO_THROW(cfg.validate());
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.lr = 1e-3;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Trainer, ZeroLearningRateLeavesParametersBitwise) {
  Model model = init_model(tiny_model(Variant::kPlus));
  const auto before = snapshot(model);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.model = model.config;
  Trainer trainer(model, cfg);
  const ScenePair pair = generate_scene_pair(3, small_scene());
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(trainer.step(pair).updated);
  EXPECT_EQ(snapshot(model), before);
}

TEST(Trainer, SameSeedGivesIdenticalLossTrace) {
  const ScenePair p1 = generate_scene_pair(4, small_scene()), p2 = generate_scene_pair(5, small_scene());
  auto run = [&] {
    Model model = init_model(tiny_model(Variant::kPlus));
    TrainConfig cfg;
    cfg.model = model.config;
    cfg.seed = 8;
    Trainer trainer(model, cfg);
    std::vector<double> trace;
    for (int s = 0; s < 5; ++s) trace.push_back(trainer.step(s % 2 ? p2 : p1).total);
    return std::pair{trace, parameter_digest(model)};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, BatchAccumulationUpdatesEveryNthStep) {
  Model model = init_model(tiny_model());
  TrainConfig cfg;
  cfg.model = model.config;
  cfg.batch_size = 2;
  Trainer trainer(model, cfg);
  const ScenePair pair = generate_scene_pair(6, small_scene());
  EXPECT_FALSE(trainer.step(pair).updated);
  EXPECT_TRUE(trainer.step(pair).updated);
  EXPECT_EQ(trainer.optimizer().state().step, 1);
}

TEST(Trainer, OverfitsSinglePair) {
  Model model = init_model(tiny_model());
  TrainConfig cfg;
  cfg.model = model.config;
  cfg.lr = 3e-3;
  Trainer trainer(model, cfg);
  const ScenePair pair = generate_scene_pair(7, small_scene());
  const double first = trainer.step(pair).total;
  double last = first;
  for (int s = 1; s < 200; ++s) {
    last = trainer.step(pair).total;
    ASSERT_TRUE(std::isfinite(last));
  }
  EXPECT_LT(last, 0.1 * first);
}

TEST(Trainer, NoGroundTruthIsRejected) {
  Model model = init_model(tiny_model());
  TrainConfig cfg;
  cfg.model = model.config;
  Trainer trainer(model, cfg);
  ScenePair pair = generate_scene_pair(8, small_scene());
  pair.gt_coarse.clear();
  EXPECT_THROW(trainer.step(pair), Error);
}

TEST(Train, WritesReportAndCheckpointsWithoutMutatingOnValidation) {
  const fs::path dir = fs::temp_directory_path() / "topicmatch_test_train";
  fs::remove_all(dir);
  SceneParams p;
  p.width = p.height = 32;
  build_dataset(10, dir / "data", p, 2);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.epochs = 2;
  const TrainReport r = train(load_manifest(dir / "data" / "manifest.json"), cfg, dir / "run");
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_EQ(r.epochs[0].steps, 9);
  EXPECT_DOUBLE_EQ(r.epochs[1].lr, cosine_lr(cfg.lr, 1, 2));
  EXPECT_TRUE(fs::exists(dir / "run" / "model.tmck"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint_epoch_001.tmck"));
  std::ifstream report(dir / "run" / "train_report.jsonl");
  int lines = 0;
  for (std::string line; std::getline(report, line);) ++lines;
  EXPECT_EQ(lines, 2);

  Model model = load_model(dir / "run" / "model.tmck");
  const std::string before = parameter_digest(model);
  const DatasetManifest m = load_manifest(dir / "data" / "manifest.json");
  evaluate(&model, m, "val", EvalConfig{});
  EXPECT_EQ(parameter_digest(model), before);
}
