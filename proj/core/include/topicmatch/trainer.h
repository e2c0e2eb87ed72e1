#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "topicmatch/checkpoint.h"
#include "topicmatch/evaluator.h"
#include "topicmatch/losses.h"
#include "topicmatch/model.h"
#include "topicmatch/synth_data.h"

namespace topicmatch {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected first/second moment update. Parameters without a gradient
// are left alone; the step counter advances once per call.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const NamedParameters& params, double lr);
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

// Scales every gradient by min(1, max_norm / norm) and returns the norm before clipping.
double clip_grad_norm(const NamedParameters& params, double max_norm);

// lr * 0.5 * (1 + cos(pi * epoch / epochs)).
double cosine_lr(double base_lr, int epoch, int epochs);

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 1;
  int batch_size = 1;  // pairs whose gradients are accumulated per update
  std::uint64_t seed = 0;
  LossWeights weights;
  ModelConfig model;
  int checkpoint_every = 1;  // epochs
  double grad_clip = 1.0;
  AdamConfig adam;
  int n_negatives = 5;
  // Fine refinement is supervised on gt coarse pairs, at most this many per step (0 = all).
  int max_fine_matches = 128;
  bool validate_each_epoch = true;
  EvalConfig eval;

  void validate() const;
};

struct StepLosses {
  double total = 0.0;
  double coarse = 0.0;
  double topic = 0.0;
  double fine = 0.0;
  int fine_matches = 0;
  bool updated = false;  // an optimizer update was applied after this pair
  double grad_norm = 0.0;
};

// In-memory optimization over scene pairs. Useful on its own for tests and
// experiments; train() drives it from a manifest.
class Trainer {
 public:
  // lr may be 0 here; TrainConfig::validate is applied by train().
  Trainer(Model& model, const TrainConfig& cfg);

  // Forward, backward and (every batch_size calls) an update at the current lr.
  // Throws NonFinite when the loss or an updated parameter is not finite.
  StepLosses step(const ScenePair& pair);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::int64_t steps() const { return steps_; }
  Adam& optimizer() { return adam_; }

 private:
  void apply_update(StepLosses& losses);

  Model& model_;
  TrainConfig cfg_;
  Adam adam_;
  double lr_;
  std::int64_t steps_ = 0;
  int pending_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double coarse = 0.0;
  double topic = 0.0;
  double fine = 0.0;
  double total_variance = 0.0;
  std::vector<double> val_auc;  // empty when there is no val split
  std::int64_t steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::filesystem::path checkpoint;  // final checkpoint
  std::filesystem::path report;      // JSONL, one record per epoch
};

// Trains on the manifest's train split, validating on its val split after
// every epoch. On a non-finite loss a diagnostic JSON naming the pair is
// written to out_dir/nonfinite_<pair id>.json and NonFinite is rethrown
// with that path in the message.
TrainReport train(const DatasetManifest& manifest, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

}  // namespace topicmatch
