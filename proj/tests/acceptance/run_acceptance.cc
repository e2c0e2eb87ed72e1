// Acceptance suite: prints one PASS/FAIL line per criterion and writes a
// Markdown report. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../common/golden.h"
#include "../common/oracles.h"
#include "CLI11.hpp"
#include "test_util.h"
#include "topicmatch/checkpoint.h"
#include "topicmatch/cost_model.h"
#include "topicmatch/errors.h"
#include "topicmatch/evaluator.h"
#include "topicmatch/fine_refiner.h"
#include "topicmatch/losses.h"
#include "topicmatch/mac_counter.h"
#include "topicmatch/trainer.h"

using namespace topicmatch;
using topicmatch::testing::grad_check;
using topicmatch::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double max_abs(const ag::Matrix& a, const ag::Matrix& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

bool simplex_rows(const ag::Matrix& m) {
  for (ag::Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).sum() - 1.0) > 1e-6 || m.row(r).minCoeff() < 0.0) return false;
  }
  return true;
}

ag::Matrix random_mask(Rng& rng, int rows, int cols) {
  ag::Matrix mask(rows, cols);
  for (ag::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
  for (int r = 0; r < rows; ++r) mask(r, static_cast<ag::Index>(rng.uniform_int(static_cast<std::uint64_t>(cols)))) = 1.0;
  return mask;
}

FineParams channel0_detector(int dim, const FineConfig& cfg) {
  FineParams p = init_fine(1, dim, cfg);
  for (MixerBlock* b : {&p.shared1, &p.shared2, &p.detect1, &p.detect2}) b->set_zero();
  p.head.set_zero();
  p.head.weight.value()(0, 0) = 1.0;
  return p;
}

// ---------------------------------------------------------------------------

Outcome simplex_suite() {
  Outcome o;
  Rng rng(101);
  int theta_bad = 0, level_bad = 0, heat_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const int k = 1 + static_cast<int>(rng.uniform_int(20));
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    const int d = 1 + static_cast<int>(rng.uniform_int(16));
    const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
    const auto dist = infer_topic_distribution(PooledTopics{ag::constant(random_matrix(rng, k, d, scale)), 0},
                                               ag::constant(random_matrix(rng, n, d, scale)));
    theta_bad += !simplex_rows(dist.theta.value());
    level_bad += std::abs(dist.image_level.sum() - 1.0) > 1e-6 || dist.image_level.minCoeff() < 0.0;

    const int w = 1 + 2 * static_cast<int>(rng.uniform_int(4));
    const int m = 1 + static_cast<int>(rng.uniform_int(4));
    const ag::Matrix grid = grid_map(w);
    const ag::Matrix mask = random_mask(rng, m, w * w);
    const auto sa = soft_argmax(ag::constant(random_matrix(rng, m, w * w, scale)), mask, grid,
                                std::pow(10.0, rng.uniform(-3.0, 0.0)));
    const auto pm = match_in_patch(ag::constant(random_matrix(rng, m, d, scale)),
                                   ag::constant(random_matrix(rng, m * w * w, d, scale)), mask, grid);
    for (const ag::Matrix* heat : {&sa.heat.value(), &pm.heat.value()}) {
      bool ok = simplex_rows(*heat);
      for (ag::Index i = 0; i < heat->size(); ++i) ok = ok && (mask.data()[i] > 0.0 || heat->data()[i] == 0.0);
      heat_bad += !ok;
    }
  }
  o.check(theta_bad == 0, "theta rows: " + std::to_string(theta_bad) + "/1000 violations");
  o.check(level_bad == 0, "image-level: " + std::to_string(level_bad) + "/1000 violations");
  o.check(heat_bad == 0, "fine heatmaps: " + std::to_string(heat_bad) + "/2000 violations");
  return o;
}

Outcome oracle_suite() {
  Outcome o;
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int na = 1 + static_cast<int>(rng.uniform_int(8)), nb = 1 + static_cast<int>(rng.uniform_int(8));
    const ag::Matrix a = random_matrix(rng, na, 4), b = random_matrix(rng, nb, 4);
    const double temp = rng.uniform(0.1, 1.0);
    worst = std::max(worst, max_abs(dual_softmax(ag::constant(a), ag::constant(b), temp).value(),
                                    oracle::dual_softmax(a, b, temp)));
  }
  o.check(worst <= 1e-6, "dual_softmax 20 cases, max dev " + fmt("%.2e", worst));

  int mismatched = 0;
  for (int t = 0; t < 50; ++t) {
    const int r = 1 + static_cast<int>(rng.uniform_int(8)), c = 1 + static_cast<int>(rng.uniform_int(8));
    ag::Matrix p(r, c);
    for (ag::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
    const double tau = rng.uniform(0.0, 0.8);
    const auto got = extract_coarse_matches(p, tau);
    const auto expect = oracle::mutual_nn(p, tau);
    bool same = got.size() == expect.size();
    for (std::size_t k = 0; same && k < got.size(); ++k) {
      same = got[k].i == expect[k].first && got[k].j == expect[k].second;
    }
    mismatched += !same;
  }
  o.check(mismatched == 0, "extract_coarse_matches 50 cases, " + std::to_string(mismatched) + " mismatches");

  worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int k = 1 + static_cast<int>(rng.uniform_int(10)), n = 1 + static_cast<int>(rng.uniform_int(20));
    const ag::Matrix local = random_matrix(rng, k, 8), tokens = random_matrix(rng, n, 8);
    const PooledTopics pooled{ag::constant(local), 0};
    const auto dist = infer_topic_distribution(pooled, ag::constant(tokens));
    Rng init(static_cast<std::uint64_t>(t));
    MergeParams merge(init, 8);
    merge.feed_forward = false;
    const ag::Matrix got = merge_context(merge, ag::constant(tokens), pooled, dist).value() - tokens;
    const ag::Matrix expect = oracle::linear(oracle::expected_context(dist.theta.value(), local), merge.output);
    worst = std::max(worst, max_abs(got, expect));
  }
  o.check(worst <= 1e-6, "merge_context context term 20 cases, max dev " + fmt("%.2e", worst));

  mismatched = 0;
  for (int t = 0; t < 20; ++t) {
    const int k = 8 + static_cast<int>(rng.uniform_int(93));
    Eigen::VectorXd a(k), b(k);
    for (int i = 0; i < k; ++i) {
      a(i) = rng.uniform();
      b(i) = rng.uniform();
    }
    a /= a.sum();
    b /= b.sum();
    mismatched += covisible_topics(a, b, 8) != oracle::top_k_products(a, b, 8);
  }
  o.check(mismatched == 0, "covisible_topics 20 cases, " + std::to_string(mismatched) + " mismatches");

  worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    AttentionOptions opts;
    opts.heads = 1 << rng.uniform_int(3);
    Rng init(static_cast<std::uint64_t>(100 + t));
    const AttentionParams p(init, 8, opts);
    const ag::Matrix topics = random_matrix(rng, 1 + static_cast<int>(rng.uniform_int(6)), 8);
    const ag::Matrix tokens = random_matrix(rng, 1 + static_cast<int>(rng.uniform_int(12)), 8);
    worst = std::max(worst, max_abs(context_pool(p, ag::constant(topics), ag::constant(tokens)).local.value(),
                                    oracle::attention(p, topics, tokens)));
  }
  o.check(worst <= 1e-6, "context_pool 10 cases, max dev " + fmt("%.2e", worst));
  return o;
}

Outcome geometry_suite() {
  Outcome o;
  SceneParams params;
  double worst_residual = 0.0, worst_loss = 0.0;
  for (int s = 0; s < 20; ++s) {
    const ScenePair pair = generate_scene_pair(pair_seed(303, s), params);
    Rng rng(static_cast<std::uint64_t>(s));
    ag::Matrix pa(100, 2), pb(100, 2);
    for (int k = 0; k < 100; ++k) {
      const Vec2 xa(rng.uniform(0, params.width - 1), rng.uniform(0, params.height - 1));
      const Vec2 xb = warp_point(pair.homography, xa);
      worst_residual = std::max(worst_residual,
                                std::abs(xa.homogeneous().dot(pair.fundamental.matrix() * xb.homogeneous())));
      pa.row(k) = xa.transpose();
      pb.row(k) = xb.transpose();
    }
    worst_loss = std::max(worst_loss,
                          fine_epipolar_loss(ag::constant(pa), ag::constant(pb), pair.fundamental).scalar());
  }
  o.check(worst_residual < 1e-9, "epipolar residual over 2000 gt pairs, max " + fmt("%.2e", worst_residual));
  o.check(worst_loss <= 1e-9, "fine epipolar loss on gt correspondences, max " + fmt("%.2e", worst_loss));

  Rng rng(304);
  double worst_rel = 0.0;
  for (int t = 0; t < 200; ++t) {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m.data()[i] = rng.normal();
    const Vec2 x(rng.uniform(0, 128), rng.uniform(0, 128)), y(rng.uniform(0, 128), rng.uniform(0, 128));
    const double d = symmetric_epipolar_distance(FundamentalMatrix(m), x, y);
    for (double s : {1e-3, 7.5, 1e4}) {
      const double ds = symmetric_epipolar_distance(FundamentalMatrix(m * s), x, y);
      worst_rel = std::max(worst_rel, std::abs(ds - d) / std::max(std::abs(d), 1e-300));
    }
  }
  o.check(worst_rel <= 1e-9, "F-rescale invariance, max relative change " + fmt("%.2e", worst_rel));
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  Rng rng(404);
  // Central differences on float64 with step 1e-4.
  const double tol = 1e-4;
  constexpr double kStep = 1e-4;

  {
    ag::Parameter la(random_matrix(rng, 6, 5)), lb(random_matrix(rng, 7, 5));
    SupervisionBundle sup;
    sup.gt_coarse = {{0, 1}, {2, 4}, {5, 6}};
    Rng neg(1);
    const auto negatives = sample_negatives(sup.gt_coarse, 7, 3, neg);
    const auto r = grad_check([&] {
      return topic_matching_loss(ag::softmax_rows(la.var()), ag::softmax_rows(lb.var()), sup, negatives);
    }, {&la, &lb}, rng, 10, kStep);
    o.check(r.worst_relative <= tol, "topic_matching_loss rel " + fmt("%.2e", r.worst_relative));
  }
  {
    ag::Parameter fa(random_matrix(rng, 6, 4)), fb(random_matrix(rng, 5, 4));
    const std::vector<IndexPair> gt{{0, 0}, {3, 2}, {5, 4}};
    const auto r = grad_check([&] {
      return coarse_feature_loss(dual_softmax(fa.var(), fb.var(), 0.5), gt);
    }, {&fa, &fb}, rng, 10, kStep);
    o.check(r.worst_relative <= tol, "coarse_feature_loss rel " + fmt("%.2e", r.worst_relative));
  }
  Mat3 fm;
  for (int i = 0; i < 9; ++i) fm.data()[i] = rng.normal();
  const FundamentalMatrix f(fm);
  {
    ag::Parameter pa(random_matrix(rng, 6, 2, 30.0)), pb(random_matrix(rng, 6, 2, 30.0));
    const auto r = grad_check([&] { return fine_epipolar_loss(pa.var(), pb.var(), f); }, {&pa, &pb}, rng, 10, kStep);
    o.check(r.worst_relative <= tol, "fine_epipolar_loss rel " + fmt("%.2e", r.worst_relative));
  }
  {
    // Coarse path through pooling, inference and merging; fine path through the
    // detector and in-patch matching; combined by total_loss.
    const int d = 8, k = 3, df = 4, w = 3, m = 2;
    MatcherConfig mc;
    mc.num_topics = k;
    mc.k_covis = 1;
    mc.attention_heads = 2;
    MatcherParams mp = init_matcher(5, d, mc);
    FineConfig fc;
    fc.window = w;
    FineParams fp = init_fine(6, df, fc);
    ag::Parameter ta(random_matrix(rng, 6, d)), tb(random_matrix(rng, 5, d));
    ag::Parameter patch_a(random_matrix(rng, m * w * w, df)), patch_b(random_matrix(rng, m * w * w, df));
    const ag::Matrix mask = ag::Matrix::Ones(m, w * w), grid = grid_map(w);
    const ag::Matrix origin = (ag::Matrix(m, 2) << 10, 12, 30, 5).finished();
    SupervisionBundle sup;
    sup.gt_coarse = {{0, 1}, {2, 3}, {4, 4}};
    Rng neg(2);
    const auto negatives = sample_negatives(sup.gt_coarse, 5, 2, neg);
    auto loss = [&] {
      const ag::Var topics = mp.bank.topics.var();
      const PooledTopics pa = context_pool(mp.pool, topics, ta.var());
      const PooledTopics pb = context_pool(mp.pool, topics, tb.var());
      const auto da = infer_topic_distribution(pa, ta.var());
      const auto db = infer_topic_distribution(pb, tb.var());
      const ag::Var fa = merge_context(mp.merge, ta.var(), pa, da);
      const ag::Var fb = merge_context(mp.merge, tb.var(), pb, db);
      const ag::Var coarse = coarse_feature_loss(dual_softmax(fa, fb, 0.5), sup.gt_coarse);
      const ag::Var topic = topic_matching_loss(da.theta, db.theta, sup, negatives);
      const Keypoint kp = detect_keypoint(fp, patch_a.var(), mask, grid, fc);
      const PatchMatch pm = match_in_patch(kp.descriptor, patch_b.var(), mask, grid);
      const ag::Var xa = ag::scale(ag::add(kp.coords, ag::constant(origin)), 2.0);
      const ag::Var xb = ag::scale(ag::add(pm.coords, ag::constant(origin)), 2.0);
      return total_loss(coarse, topic, fine_epipolar_loss(xa, xb, f), LossWeights{});
    };
    std::vector<ag::Parameter*> params{&ta, &tb, &patch_a, &patch_b, &mp.bank.topics,
                                       &mp.pool.query.weight, &mp.pool.key.weight, &mp.pool.value.weight,
                                       &mp.merge.output.weight, &mp.merge.ffn.fc1.weight,
                                       &fp.detect1.token_mlp.fc1.weight, &fp.detect2.channel_mlp.fc2.weight,
                                       &fp.head.weight};
    const auto r = grad_check(loss, params, rng, 10, kStep);
    o.check(r.worst_relative <= tol, "composite total_loss rel " + fmt("%.2e", r.worst_relative) + " over " +
                                         std::to_string(r.checked) + " entries");
  }
  return o;
}

Outcome soft_argmax_suite() {
  Outcome o;
  FineConfig cfg;
  cfg.temperature = 1e-3;
  const int dim = 3;
  const FineParams p = channel0_detector(dim, cfg);
  const ag::Matrix grid = grid_map(cfg.window);
  const int np = cfg.patch_cells();
  Rng rng(505);
  double worst = 0.0;
  int redrawn = 0;
  for (int t = 0; t < 100; ++t) {
    ag::Matrix patch = random_matrix(rng, np, dim);
    // The limit statement needs a unique maximum at the resolution of t.
    for (;;) {
      const Eigen::VectorXd col = patch.col(0);
      std::vector<double> s(col.data(), col.data() + np);
      std::sort(s.rbegin(), s.rend());
      if (s[0] - s[1] > 10.0 * cfg.temperature) break;
      patch = random_matrix(rng, np, dim);
      ++redrawn;
    }
    ag::Index best;
    patch.col(0).maxCoeff(&best);
    const Keypoint kp = detect_keypoint(p, ag::constant(patch), ag::Matrix::Ones(1, np), grid, cfg);
    worst = std::max(worst, (kp.coords.value().row(0) - grid.row(best)).cwiseAbs().maxCoeff());
  }
  o.check(worst <= 1e-3, "100 score maps at t=1e-3, max deviation " + fmt("%.2e", worst) + " cells (" +
                             std::to_string(redrawn) + " near-tie maps redrawn)");
  return o;
}

Outcome efficiency_suite() {
  Outcome o;
  int shapes = 0, unequal = 0;
  for (Variant v : {Variant::kFast, Variant::kPlus}) {
    for (auto [h, w] : {std::pair{32, 32}, std::pair{48, 64}, std::pair{64, 64}, std::pair{64, 96}, std::pair{96, 80}}) {
      ModelConfig cfg;
      cfg.widths = BackboneWidths{16, 24, 32};
      cfg.matcher.num_topics = 8;
      cfg.matcher.k_covis = 4;
      cfg.matcher.variant = v;
      cfg.matcher.tau = 0.01;
      cfg.seed = static_cast<std::uint64_t>(h * w);
      const Model model = init_model(cfg);
      Rng rng(static_cast<std::uint64_t>(h + w));
      ImageTensor a{ag::Matrix(h, w)}, b{ag::Matrix(h, w)};
      for (ag::Index i = 0; i < a.pixels.size(); ++i) {
        a.pixels.data()[i] = rng.uniform();
        b.pixels.data()[i] = rng.uniform();
      }
      MacCounter counter;
      MatchOutput out;
      {
        ScopedMacCounter guard(counter);
        out = run_matching(model, a, b);
      }
      const CostModel analytic = count_ops(cost_inputs_for(model, out, h, w));
      bool equal = analytic.total() == counter.total();
      for (const auto& [stage, macs] : analytic.stages) equal = equal && counter.stage(stage) == macs;
      unequal += !equal;
      ++shapes;
    }
  }
  o.check(unequal == 0, std::to_string(shapes - unequal) + "/" + std::to_string(shapes) +
                            " shapes with analytic == instrumented MACs");

  std::vector<double> ratios;
  // N = 1024, 2048, 4096 as 32x32, 32x64 and 64x64 coarse grids.
  auto coarse_rect = [](int h, int w, Variant v) {
    CostInputs in;
    in.height = h;
    in.width = w;
    in.num_topics = 100;
    in.variant = v;
    const int n = (h / 8) * (w / 8);
    in.populations_a = in.populations_b = std::vector<int>(100, 0);
    in.populations_a[0] = in.populations_b[0] = n;
    return static_cast<double>(count_ops(in).coarse_total());
  };
  const double fast4096 = coarse_rect(512, 512, Variant::kFast), plus4096 = coarse_rect(512, 512, Variant::kPlus);
  o.check(fast4096 < plus4096, "N=4096 dominant topic: fast " + fmt("%.3e", fast4096) + " < plus " + fmt("%.3e", plus4096));
  for (auto [h, w] : {std::pair{256, 256}, std::pair{256, 512}, std::pair{512, 512}}) {
    ratios.push_back(coarse_rect(h, w, Variant::kPlus) / coarse_rect(h, w, Variant::kFast));
  }
  o.check(ratios[0] < ratios[1] && ratios[1] < ratios[2],
          "plus/fast ratio over N=1024,2048,4096: " + fmt("%.3f", ratios[0]) + ", " + fmt("%.3f", ratios[1]) +
              ", " + fmt("%.3f", ratios[2]));
  return o;
}

// ---------------------------------------------------------------------------

struct OverfitRun {
  Model model;
  double initial = 0.0;
  double final = 0.0;
  EvalReport report;
};

ModelConfig overfit_config(Variant v) {
  ModelConfig cfg;
  cfg.widths = BackboneWidths{32, 48, 64};
  cfg.matcher.num_topics = 16;
  cfg.matcher.k_covis = 8;
  cfg.matcher.variant = v;
  return cfg;
}

OverfitRun overfit(Variant v, const std::vector<ScenePair>& pairs, const std::vector<std::string>& ids, int steps,
                   const fs::path& work) {
  TrainConfig cfg;
  cfg.model = overfit_config(v);
  OverfitRun run{init_model(cfg.model)};
  Trainer trainer(run.model, cfg);
  const int n = static_cast<int>(pairs.size());
  for (int s = 0; s < steps; ++s) {
    trainer.set_lr(cosine_lr(cfg.lr, s, steps));
    const double loss = trainer.step(pairs[static_cast<std::size_t>(s % n)]).total;
    if (s < n) run.initial += loss / n;
    if (s >= steps - n) run.final += loss / n;
    if ((s + 1) % 100 == 0) {
      std::cerr << "  " << variant_name(v) << " step " << s + 1 << "/" << steps << " loss " << loss << "\n";
    }
  }
  save_checkpoint(work / ("overfit_" + variant_name(v) + ".tmck"), run.model, &trainer.optimizer().state(),
                  trainer.steps());
  run.report = evaluate_pairs(&run.model, pairs, ids, EvalConfig{});
  return run;
}

double auc_at(const EvalReport& r, double t) {
  for (std::size_t k = 0; k < r.auc_thresholds.size(); ++k) {
    if (r.auc_thresholds[k] == t) return r.auc[k];
  }
  return std::nan("");
}

struct OverfitState {
  std::vector<ScenePair> pairs;
  std::vector<std::string> ids;
  std::optional<OverfitRun> plus;
};

Outcome overfit_suite(OverfitState& state, int steps, const fs::path& work) {
  Outcome o;
  const fs::path data = work / "overfit_data";
  fs::remove_all(data);
  const DatasetManifest m = build_dataset(20, data, SceneParams{}, 7);
  for (const auto& rec : m.pairs) {
    state.pairs.push_back(load_pair(m, rec.id));
    state.ids.push_back(rec.id);
  }
  for (Variant v : {Variant::kFast, Variant::kPlus}) {
    OverfitRun run = overfit(v, state.pairs, state.ids, steps, work);
    const std::string name = variant_name(v);
    o.check(run.final < 0.1 * run.initial, name + " (a) loss " + fmt("%.4f", run.initial) + " -> " +
                                               fmt("%.4f", run.final) + " (" +
                                               fmt("%.1f", 100.0 * run.final / run.initial) + "%)");
    const double auc5 = auc_at(run.report, 5.0);
    o.check(auc5 >= 0.80, name + " (b) AUC@5px " + fmt("%.3f", auc5) + " (AUC@3 " +
                              fmt("%.3f", auc_at(run.report, 3.0)) + ", @10 " +
                              fmt("%.3f", auc_at(run.report, 10.0)) + ", failures " +
                              std::to_string(run.report.failures) + ")");
    int better = 0;
    for (const auto& p : run.report.pairs) better += p.median_epipolar_fine < p.median_epipolar_coarse;
    o.check(better >= 14, name + " (c) fine beats coarse on " + std::to_string(better) + "/20 pairs");
    if (v == Variant::kPlus) state.plus = std::move(run);
  }
  return o;
}

Outcome sweep_suite(OverfitState& state, const fs::path& work) {
  Outcome o;
  if (!state.plus) {
    o.check(false, "no plus-variant overfit model available");
    return o;
  }
  const std::vector<int> ks{2, 4, 8};
  const EvalConfig cfg;
  const auto rows = covis_sweep(state.plus->model, state.pairs, ks, cfg);
  write_sweep_csv(work / "covis_sweep.csv", rows, cfg.auc_thresholds);
  const double a2 = rows[0].auc[1], a8 = rows[2].auc[1];
  o.check(a8 >= a2, "AUC@5px k=2 " + fmt("%.3f", a2) + ", k=4 " + fmt("%.3f", rows[1].auc[1]) + ", k=8 " +
                        fmt("%.3f", a8));
  o.check(rows[0].macs_expected < rows[1].macs_expected && rows[1].macs_expected < rows[2].macs_expected,
          "expected coarse MACs " + fmt("%.4e", rows[0].macs_expected) + " < " + fmt("%.4e", rows[1].macs_expected) +
              " < " + fmt("%.4e", rows[2].macs_expected));
  return o;
}

Outcome determinism_suite(const fs::path& work) {
  Outcome o;
  auto hashes = [](const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).string() + ":" + sha256_file(e.path()));
    }
    return out;
  };
  SceneParams p;
  p.width = p.height = 64;
  for (const char* d : {"det_a", "det_b"}) {
    fs::remove_all(work / d);
    build_dataset(10, work / d, p, 99);
  }
  const auto ha = hashes(work / "det_a"), hb = hashes(work / "det_b");
  o.check(ha == hb && !ha.empty(), std::to_string(ha.size()) + " dataset files with identical SHA-256");

  ModelConfig cfg = golden::golden_config();
  Model model = init_model(cfg);
  AdamState adam;
  for (auto& [name, par] : model.parameters()) {
    adam.m[name] = par->value() * 0.25;
    adam.v[name] = par->value().cwiseAbs2();
  }
  adam.step = 3;
  save_checkpoint(work / "roundtrip.tmck", model, &adam, 17);
  Model back = load_model(work / "roundtrip.tmck");
  AdamState adam_back;
  restore_model(read_checkpoint(work / "roundtrip.tmck"), back, &adam_back);
  bool bitwise = adam_back.m == adam.m && adam_back.v == adam.v && adam_back.step == adam.step;
  auto pa = model.parameters(), pb = back.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) bitwise = bitwise && pa[k].second->value() == pb[k].second->value();
  auto ba = model.buffers(), bb = back.buffers();
  for (std::size_t k = 0; k < ba.size(); ++k) bitwise = bitwise && *ba[k].second == *bb[k].second;
  o.check(bitwise, "checkpoint round trip bitwise over " + std::to_string(pa.size()) + " parameters and " +
                       std::to_string(ba.size()) + " buffers");

  const golden::GoldenRun run = golden::run_golden_match(work / "golden");
  std::ifstream in(golden::golden_file(), std::ios::binary);
  std::stringstream expected;
  expected << in.rdbuf();
  const auto rows = std::count(run.csv.begin(), run.csv.end(), '\n');
  o.check(run.exit_code == 0 && !expected.str().empty() && run.csv == expected.str(),
          "match CSV equals golden file (" + std::to_string(rows > 0 ? rows - 1 : 0) + " matches)");
  return o;
}

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Outcome()> run;
  bool slow = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work = "acceptance_work", report = "acceptance_report.md";
  int steps = 1000;
  bool fast_only = false;
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--report", report, "Markdown report path")->capture_default_str();
  app.add_option("--steps", steps, "Overfit steps per variant (at most 2000)")->check(CLI::Range(20, 2000))->capture_default_str();
  app.add_flag("--fast-only", fast_only, "Skip the overfit experiment and the sweep");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  OverfitState state;
  const std::vector<Criterion> criteria{
      {1, "simplex suite", 30, simplex_suite},
      {2, "oracle equivalence", 60, oracle_suite},
      {3, "geometry suite", 60, geometry_suite},
      {4, "gradient checks", 120, gradient_suite},
      {5, "soft-argmax limit", 10, soft_argmax_suite},
      {6, "efficiency scaling", 60, efficiency_suite},
      {7, "overfit experiment", 1800, [&] { return overfit_suite(state, steps, work); }, true},
      {8, "covisible sweep trend", 300, [&] { return sweep_suite(state, work); }, true},
      {9, "determinism and formats", 120, [&] { return determinism_suite(work); }},
  };

  std::ostringstream md;
  md << "# Acceptance report\n\n| # | criterion | status | seconds | budget | details |\n|---|---|---|---|---|---|\n";
  int failed = 0;
  for (const auto& c : criteria) {
    if (fast_only && c.slow) {
      std::cout << "criterion " << c.id << " " << c.title << ": SKIP\n";
      md << "| " << c.id << " | " << c.title << " | SKIP | | | |\n";
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(secs <= c.budget_s, "runtime " + fmt("%.1f", secs) + " s within " + fmt("%.0f", c.budget_s) + " s");
    failed += !o.pass;
    std::string details;
    for (const auto& n : o.notes) details += (details.empty() ? "" : "; ") + n;
    std::cout << "criterion " << c.id << " " << c.title << ": " << (o.pass ? "PASS" : "FAIL") << " (" << details
              << ")\n"
              << std::flush;
    md << "| " << c.id << " | " << c.title << " | " << (o.pass ? "PASS" : "FAIL") << " | " << fmt("%.1f", secs)
       << " | " << fmt("%.0f", c.budget_s) << " | " << details << " |\n";
  }
  md << "\n" << (failed == 0 ? "All criteria passed." : std::to_string(failed) + " criteria failed.") << "\n";
  std::ofstream(report) << md.str();
  return failed == 0 ? 0 : 1;
}
