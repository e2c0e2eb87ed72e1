#include "topicmatch/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "topicmatch/errors.h"
#include "topicmatch/rng.h"

namespace topicmatch {
namespace {

using json = nlohmann::json;

bool all_finite(const ag::Matrix& m) { return m.allFinite(); }

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void Adam::step(const NamedParameters& params, double lr) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (const auto& [name, p] : params) {
    if (!p->has_grad()) continue;
    const ag::Matrix& g = p->grad();
    auto [mit, m_new] = state_.m.try_emplace(name, ag::Matrix::Zero(g.rows(), g.cols()));
    auto [vit, v_new] = state_.v.try_emplace(name, ag::Matrix::Zero(g.rows(), g.cols()));
    ag::Matrix& m = mit->second;
    ag::Matrix& v = vit->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    p->value().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  }
}

double clip_grad_norm(const NamedParameters& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (p->has_grad()) sq += p->grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& [name, p] : params) {
      if (p->has_grad()) p->grad() *= f;
    }
  }
  return norm;
}

double cosine_lr(double base_lr, int epoch, int epochs) {
  if (epochs <= 1) return base_lr;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / epochs));
}

void TrainConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::kConfigError, "lr must be positive");
  require(epochs >= 1, ErrorCode::kConfigError, "epochs must be at least 1");
  require(batch_size >= 1, ErrorCode::kConfigError, "batch size must be at least 1");
  require(checkpoint_every >= 1, ErrorCode::kConfigError, "checkpoint cadence must be at least 1");
  require(grad_clip > 0.0, ErrorCode::kConfigError, "grad clip norm must be positive");
  require(n_negatives >= 0, ErrorCode::kConfigError, "negative count must be nonnegative");
  require(max_fine_matches >= 0, ErrorCode::kConfigError, "max fine matches must be nonnegative");
  require(weights.lambda_c >= 0.0 && weights.lambda_f >= 0.0, ErrorCode::kConfigError,
          "loss weights must be nonnegative");
  model.validate();
}

Trainer::Trainer(Model& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), adam_(cfg.adam), lr_(cfg.lr) {
  require(cfg.lr >= 0.0, ErrorCode::kConfigError, "lr must be nonnegative");
  require(cfg.batch_size >= 1, ErrorCode::kConfigError, "batch size must be at least 1");
}

StepLosses Trainer::step(const ScenePair& pair) {
  require(pair.has_ground_truth && !pair.gt_coarse.empty(), ErrorCode::kNoGroundTruth,
          "training pair has no gt correspondences");
  Rng rng = Rng(cfg_.seed).fork(static_cast<std::uint64_t>(steps_) + 1);

  CoarseMatchSet fine_pairs;
  std::vector<std::size_t> pick(pair.gt_coarse.size());
  for (std::size_t k = 0; k < pick.size(); ++k) pick[k] = k;
  if (cfg_.max_fine_matches > 0 && pick.size() > static_cast<std::size_t>(cfg_.max_fine_matches)) {
    pick = rng.sample_without_replacement(pick.size(), static_cast<std::size_t>(cfg_.max_fine_matches));
    std::sort(pick.begin(), pick.end());
  }
  for (std::size_t k : pick) fine_pairs.push_back({pair.gt_coarse[k].first, pair.gt_coarse[k].second, 1.0});

  const MatchOutput out = run_matching_train(model_, pair.image_a, pair.image_b, rng, &fine_pairs);

  SupervisionBundle sup;
  sup.gt_coarse = pair.gt_coarse;
  sup.fundamental = pair.fundamental;
  sup.n_negatives = cfg_.n_negatives;

  const ag::Var l_coarse = coarse_feature_loss(out.coarse.p_c, sup.gt_coarse, sup.epsilon);
  const ag::Var l_topic = topic_matching_loss(out.coarse.dist_a.theta, out.coarse.dist_b.theta, sup, rng);
  ag::Var l_fine;
  if (out.fine.points_a.defined() && out.fine.points_a.rows() > 0) {
    l_fine = fine_epipolar_loss(out.fine.points_a, out.fine.points_b, pair.fundamental);
  }
  const ag::Var total = total_loss(l_coarse, l_topic, l_fine, cfg_.weights);

  StepLosses losses;
  losses.total = total.scalar();
  losses.coarse = l_coarse.scalar();
  losses.topic = l_topic.scalar();
  losses.fine = l_fine.defined() ? l_fine.scalar() : 0.0;
  losses.fine_matches = static_cast<int>(out.fine.matches.size());
  require(std::isfinite(losses.total), ErrorCode::kNonFinite, "non-finite training loss");

  ag::backward(cfg_.batch_size > 1 ? ag::scale(total, 1.0 / cfg_.batch_size) : total);
  ++steps_;
  if (++pending_ == cfg_.batch_size) apply_update(losses);
  return losses;
}

void Trainer::apply_update(StepLosses& losses) {
  const NamedParameters params = model_.parameters();
  losses.grad_norm = clip_grad_norm(params, cfg_.grad_clip);
  require(std::isfinite(losses.grad_norm), ErrorCode::kNonFinite, "non-finite gradient norm");
  adam_.step(params, lr_);
  for (const auto& [name, p] : params) {
    p->zero_grad();
    require(all_finite(p->value()), ErrorCode::kNonFinite, "parameter " + name + " became non-finite");
  }
  pending_ = 0;
  losses.updated = true;
}

TrainReport train(const DatasetManifest& manifest, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  require(manifest.has_ground_truth, ErrorCode::kNoGroundTruth,
          "training needs a manifest with ground truth");
  const auto train_records = manifest.split("train");
  require(!train_records.empty(), ErrorCode::kEmptyDataset, "train split has no pairs");
  const auto val_records = manifest.split("val");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorCode::kIOError, "cannot create " + out_dir.string());

  std::vector<ScenePair> train_pairs, val_pairs;
  std::vector<std::string> train_ids, val_ids;
  for (const PairRecord* r : train_records) {
    train_pairs.push_back(load_pair(manifest, r->id));
    train_ids.push_back(r->id);
  }
  for (const PairRecord* r : val_records) {
    val_pairs.push_back(load_pair(manifest, r->id));
    val_ids.push_back(r->id);
  }

  Model model = init_model(cfg.model);
  Trainer trainer(model, cfg);
  TrainReport report;
  report.report = out_dir / "train_report.jsonl";
  std::ofstream log(report.report);
  require(log.good(), ErrorCode::kIOError, "cannot write " + report.report.string());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    trainer.set_lr(cosine_lr(cfg.lr, epoch, cfg.epochs));
    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    Rng shuffle = Rng(cfg.seed).fork(0x5eed0000ULL + static_cast<std::uint64_t>(epoch));
    order = shuffle.sample_without_replacement(order.size(), order.size());

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = trainer.lr();
    std::vector<double> totals;
    for (std::size_t idx : order) {
      StepLosses s;
      try {
        s = trainer.step(train_pairs[idx]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFinite) throw;
        const std::filesystem::path dump = out_dir / ("nonfinite_" + train_ids[idx] + ".json");
        const json doc = {{"pair_id", train_ids[idx]},
                          {"epoch", epoch + 1},
                          {"step", trainer.steps()},
                          {"lr", trainer.lr()},
                          {"seed", train_pairs[idx].seed},
                          {"message", e.what()}};
        std::ofstream(dump) << doc.dump(2) << "\n";
        fail(ErrorCode::kNonFinite, "pair " + train_ids[idx] + ", diagnostics in " + dump.string());
      }
      totals.push_back(s.total);
      rec.coarse += s.coarse;
      rec.topic += s.topic;
      rec.fine += s.fine;
    }
    const double n = static_cast<double>(totals.size());
    for (double t : totals) rec.total += t;
    rec.total /= n;
    rec.coarse /= n;
    rec.topic /= n;
    rec.fine /= n;
    for (double t : totals) rec.total_variance += (t - rec.total) * (t - rec.total) / n;
    rec.steps = trainer.steps();

    if (cfg.validate_each_epoch && !val_pairs.empty()) {
      rec.val_auc = evaluate_pairs(&model, val_pairs, val_ids, cfg.eval).auc;
    }

    json auc = json::object();
    for (std::size_t t = 0; t < rec.val_auc.size(); ++t) {
      auc[threshold_label(cfg.eval.auc_thresholds[t])] = rec.val_auc[t];
    }
    const json line = {{"epoch", rec.epoch},
                       {"steps", rec.steps},
                       {"lr", rec.lr},
                       {"variant", variant_name(cfg.model.matcher.variant)},
                       {"loss_total", nullable(rec.total)},
                       {"loss_coarse", nullable(rec.coarse)},
                       {"loss_topic", nullable(rec.topic)},
                       {"loss_fine", nullable(rec.fine)},
                       {"loss_total_variance", nullable(rec.total_variance)},
                       {"val_auc", auc}};
    log << line.dump() << "\n";
    log.flush();
    report.epochs.push_back(rec);

    if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.tmck", epoch + 1);
      save_checkpoint(out_dir / name, model, &trainer.optimizer().state(), trainer.steps());
    }
  }
  report.checkpoint = out_dir / "model.tmck";
  save_checkpoint(report.checkpoint, model, &trainer.optimizer().state(), trainer.steps());
  return report;
}

}  // namespace topicmatch
