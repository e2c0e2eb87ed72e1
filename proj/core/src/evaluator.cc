#include "topicmatch/evaluator.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "topicmatch/errors.h"
#include "topicmatch/rng.h"

namespace topicmatch {
namespace {

using json = nlohmann::json;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<double> epipolar_distances(const CorrespondenceSet& c, const FundamentalMatrix& f) {
  std::vector<double> out;
  out.reserve(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    out.push_back(symmetric_epipolar_distance_guarded(f, c.points_a[k], c.points_b[k]));
  }
  return out;
}

}  // namespace

std::string threshold_label(double t) {
  std::ostringstream s;
  s << '@' << t << "px";
  return s.str();
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

CorrespondenceSet fine_correspondences(const FineResult& fine) {
  CorrespondenceSet c;
  for (const auto& m : fine.matches) {
    c.add(m.xa, m.xb);
    c.weights.push_back(m.confidence);
  }
  return c;
}

CorrespondenceSet coarse_correspondences(const CoarseMatchSet& matches, const FeaturePyramid& a,
                                         const FeaturePyramid& b) {
  const GridShape ga{a.coarse_width, a.coarse_height}, gb{b.coarse_width, b.coarse_height};
  CorrespondenceSet c;
  for (const auto& m : matches) {
    c.add(coarse_cell_pixel(m.i, ga, FeaturePyramid::kCoarseStride),
          coarse_cell_pixel(m.j, gb, FeaturePyramid::kCoarseStride));
    c.weights.push_back(m.confidence);
  }
  return c;
}

CorrespondenceSet oracle_correspondences(const ScenePair& pair) {
  const GridShape ga{pair.image_a.width() / 8, pair.image_a.height() / 8};
  CorrespondenceSet c;
  for (const auto& [i, j] : pair.gt_coarse) {
    const Vec2 a = coarse_cell_pixel(i, ga, 8);
    c.add(a, warp_point(pair.homography, a));
  }
  return c;
}

PairEval evaluate_pair(const Model* model, const ScenePair& pair, const std::string& id,
                       const EvalConfig& cfg, std::map<std::string, double>* stage_ms) {
  require(pair.has_ground_truth, ErrorCode::kNoGroundTruth, "evaluation needs ground truth");
  PairEval ev;
  ev.id = id;
  CorrespondenceSet fine;
  if (cfg.oracle) {
    fine = oracle_correspondences(pair);
    ev.coarse_matches = static_cast<int>(fine.size());
  } else {
    require(model != nullptr, ErrorCode::kConfigError, "evaluation needs a model or oracle mode");
    const MatchOutput out = run_matching(*model, pair.image_a, pair.image_b);
    if (stage_ms != nullptr) {
      for (const auto& [k, v] : out.stage_ms) (*stage_ms)[k] += v;
    }
    fine = fine_correspondences(out.fine);
    const CorrespondenceSet coarse =
        coarse_correspondences(out.coarse.matches, out.pyramid_a, out.pyramid_b);
    ev.coarse_matches = static_cast<int>(coarse.size());
    ev.median_epipolar_coarse = median(epipolar_distances(coarse, pair.fundamental));
  }
  ev.fine_matches = static_cast<int>(fine.size());
  ev.median_epipolar_fine = median(epipolar_distances(fine, pair.fundamental));

  ev.correct.assign(cfg.precision_thresholds.size(), 0);
  for (std::size_t k = 0; k < fine.size(); ++k) {
    const double err = (warp_point(pair.homography, fine.points_a[k]) - fine.points_b[k]).norm();
    for (std::size_t t = 0; t < cfg.precision_thresholds.size(); ++t) {
      if (err < cfg.precision_thresholds[t]) ++ev.correct[t];
    }
  }

  try {
    const RansacResult r =
        estimate_homography_ransac(fine, cfg.ransac_threshold, cfg.ransac_iters, cfg.ransac_seed);
    ev.corner_error = corner_error(r.homography, pair.homography, pair.image_a.width(),
                                   pair.image_a.height());
  } catch (const Error& e) {
    ev.failure = error_code_name(e.code());
    ev.corner_error = std::numeric_limits<double>::infinity();
  }
  return ev;
}

EvalReport evaluate_pairs(const Model* model, std::span<const ScenePair> pairs,
                          std::span<const std::string> ids, const EvalConfig& cfg) {
  require(!pairs.empty(), ErrorCode::kEmptyDataset, "no pairs to evaluate");
  require(ids.size() == pairs.size(), ErrorCode::kShapeError, "one id per pair expected");
  EvalReport rep;
  rep.auc_thresholds = cfg.auc_thresholds;
  rep.precision_thresholds = cfg.precision_thresholds;
  std::vector<double> errors;
  std::vector<long long> correct(cfg.precision_thresholds.size(), 0);
  long long total = 0;
  std::vector<double> epi;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    PairEval ev = evaluate_pair(model, pairs[p], ids[p], cfg, &rep.stage_ms);
    errors.push_back(ev.corner_error);
    if (!ev.failure.empty()) ++rep.failures;
    total += ev.fine_matches;
    for (std::size_t t = 0; t < correct.size(); ++t) correct[t] += ev.correct[t];
    if (std::isfinite(ev.median_epipolar_fine)) epi.push_back(ev.median_epipolar_fine);
    rep.pairs.push_back(std::move(ev));
  }
  rep.auc = auc_at_thresholds(errors, cfg.auc_thresholds);
  for (std::size_t t = 0; t < correct.size(); ++t) {
    rep.precision.push_back(total > 0 ? static_cast<double>(correct[t]) / static_cast<double>(total) : 0.0);
  }
  rep.median_epipolar = median(epi);
  return rep;
}

EvalReport evaluate(const Model* model, const DatasetManifest& manifest, const std::string& split,
                    const EvalConfig& cfg) {
  const auto records = manifest.split(split);
  require(!records.empty(), ErrorCode::kEmptyDataset, "split '" + split + "' has no pairs");
  std::vector<ScenePair> pairs;
  std::vector<std::string> ids;
  for (const PairRecord* r : records) {
    pairs.push_back(load_pair(manifest, r->id));
    ids.push_back(r->id);
  }
  return evaluate_pairs(model, pairs, ids, cfg);
}

std::string EvalReport::to_json() const {
  json jp = json::array();
  for (const auto& p : pairs) {
    jp.push_back({{"id", p.id},
                  {"corner_error", finite_or_null(p.corner_error)},
                  {"coarse_matches", p.coarse_matches},
                  {"fine_matches", p.fine_matches},
                  {"correct", p.correct},
                  {"median_epipolar_fine", finite_or_null(p.median_epipolar_fine)},
                  {"median_epipolar_coarse", finite_or_null(p.median_epipolar_coarse)},
                  {"failure", p.failure}});
  }
  json auc_j = json::object(), prec_j = json::object();
  for (std::size_t t = 0; t < auc.size(); ++t) auc_j[threshold_label(auc_thresholds[t])] = auc[t];
  for (std::size_t t = 0; t < precision.size(); ++t) {
    prec_j[threshold_label(precision_thresholds[t])] = precision[t];
  }
  json doc = {{"auc", auc_j},
              {"precision", prec_j},
              {"median_epipolar", finite_or_null(median_epipolar)},
              {"failures", failures},
              {"pair_count", pairs.size()},
              {"stage_ms", stage_ms},
              {"pairs", jp}};
  return doc.dump(2);
}

TopicOverlay render_topic_overlay(const ag::Matrix& theta, int cell_width, int cell_height,
                                  const ag::Matrix& image, std::uint64_t palette_seed) {
  require(theta.rows() == static_cast<ag::Index>(cell_width) * cell_height, ErrorCode::kShapeError,
          "theta rows must equal the coarse cell count");
  require(theta.cols() >= 1 && theta.cols() <= 256, ErrorCode::kShapeError,
          "an 8-bit index map holds at most 256 topics");
  const int w = static_cast<int>(image.cols()), h = static_cast<int>(image.rows());
  require(w == cell_width * 8 && h == cell_height * 8, ErrorCode::kShapeError,
          "image size must be 8x the coarse grid");
  TopicOverlay out;
  out.width = w;
  out.height = h;
  out.cell_labels = assign_topics(theta, Mode::kEval, nullptr);

  Rng rng(palette_seed);
  for (ag::Index k = 0; k < theta.cols(); ++k) {
    std::array<std::uint8_t, 3> c{};
    for (auto& ch : c) ch = static_cast<std::uint8_t>(48 + rng.uniform_int(208));
    out.palette.push_back(c);
  }
  out.index_map.resize(static_cast<std::size_t>(w) * h);
  out.overlay = RgbImage(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int label = out.cell_labels[static_cast<std::size_t>((y / 8) * cell_width + x / 8)];
      out.index_map[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(label);
      const double g = std::clamp(image(y, x), 0.0, 1.0) * 255.0;
      std::uint8_t* px = out.overlay.at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        px[ch] = static_cast<std::uint8_t>(std::lround(0.5 * g + 0.5 * out.palette[static_cast<std::size_t>(label)][ch]));
      }
    }
  }
  return out;
}

void write_palette_json(const std::filesystem::path& path,
                        const std::vector<std::array<std::uint8_t, 3>>& palette,
                        std::uint64_t palette_seed) {
  json colors = json::array();
  for (const auto& c : palette) colors.push_back({c[0], c[1], c[2]});
  const json doc = {{"palette_seed", palette_seed}, {"alpha", 0.5}, {"colors", colors}};
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIOError, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

CostInputs cost_inputs_for(const Model& model, const MatchOutput& out, int height, int width) {
  CostInputs in;
  in.height = height;
  in.width = width;
  in.widths = model.config.widths;
  in.num_topics = model.config.matcher.num_topics;
  in.variant = model.config.matcher.variant;
  in.k_covis = model.config.matcher.k_covis;
  if (in.variant == Variant::kPlus) {
    in.populations_a = label_populations(out.coarse.labels_a, in.num_topics);
    in.populations_b = label_populations(out.coarse.labels_b, in.num_topics);
    in.covis = out.coarse.covis;
  }
  in.window = model.config.fine.window;
  in.token_hidden = model.config.fine.token_hidden;
  in.channel_hidden = model.config.fine.channel_hidden;
  in.matches = static_cast<int>(out.fine.matches.size());
  return in;
}

std::vector<SweepRow> covis_sweep(const Model& model, std::span<const ScenePair> pairs,
                                  std::span<const int> k_values, const EvalConfig& cfg) {
  require(model.config.matcher.variant == Variant::kPlus, ErrorCode::kConfigError,
          "covis sweep needs a plus-variant model");
  require(!pairs.empty(), ErrorCode::kEmptyDataset, "no pairs to sweep over");
  for (int k : k_values) {
    require(k >= 1 && k <= model.config.matcher.num_topics, ErrorCode::kConfigError,
            "k_covis must lie in [1, K], got " + std::to_string(k));
  }
  std::vector<SweepRow> rows;
  for (int k : k_values) {
    Model m = model;
    m.config.matcher.k_covis = k;
    SweepRow row;
    row.k_covis = k;
    std::vector<double> errors;
    double observed = 0.0, expected = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const ScenePair& pair = pairs[p];
      const MatchOutput out = run_matching(m, pair.image_a, pair.image_b);
      const CostModel cost = count_ops(cost_inputs_for(m, out, pair.image_a.height(), pair.image_a.width()));
      observed += static_cast<double>(cost.coarse_total());

      const double n = static_cast<double>(out.coarse.labels_a.size());
      double merge = 0.0;
      for (int t : out.coarse.covis) {
        merge += augment_topic_macs(n * out.coarse.dist_a.image_level(t),
                                    n * out.coarse.dist_b.image_level(t), m.config.widths.coarse);
      }
      expected += static_cast<double>(cost.coarse_total() - cost.stages.at("context_merge")) + merge;

      CorrespondenceSet fine = fine_correspondences(out.fine);
      try {
        const RansacResult r =
            estimate_homography_ransac(fine, cfg.ransac_threshold, cfg.ransac_iters, cfg.ransac_seed);
        errors.push_back(corner_error(r.homography, pair.homography, pair.image_a.width(),
                                      pair.image_a.height()));
      } catch (const Error&) {
        errors.push_back(std::numeric_limits<double>::infinity());
      }
    }
    row.auc = auc_at_thresholds(errors, cfg.auc_thresholds);
    row.macs_observed = static_cast<std::uint64_t>(std::llround(observed / static_cast<double>(pairs.size())));
    row.macs_expected = expected / static_cast<double>(pairs.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     const std::vector<double>& auc_thresholds) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIOError, "cannot write " + path.string());
  out << "k_covis";
  for (double t : auc_thresholds) out << ",auc@" << t;
  out << ",macs_observed,macs_expected\n";
  for (const auto& r : rows) {
    out << r.k_covis;
    for (double a : r.auc) out << "," << a;
    out << "," << r.macs_observed << "," << static_cast<std::uint64_t>(std::llround(r.macs_expected)) << "\n";
  }
}

}  // namespace topicmatch
