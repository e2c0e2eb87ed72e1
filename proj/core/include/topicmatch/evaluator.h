#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "topicmatch/cost_model.h"
#include "topicmatch/io.h"
#include "topicmatch/model.h"
#include "topicmatch/synth_data.h"

namespace topicmatch {

struct EvalConfig {
  double ransac_threshold = 3.0;
  int ransac_iters = 1000;
  std::uint64_t ransac_seed = 0;
  bool oracle = false;  // use exact gt correspondences instead of the model
  std::vector<double> auc_thresholds{3.0, 5.0, 10.0};
  std::vector<double> precision_thresholds{1.0, 3.0, 5.0};
};

struct PairEval {
  std::string id;
  double corner_error = std::numeric_limits<double>::infinity();
  int coarse_matches = 0;
  int fine_matches = 0;
  std::vector<int> correct;  // fine matches under each precision threshold
  double median_epipolar_fine = std::numeric_limits<double>::quiet_NaN();
  double median_epipolar_coarse = std::numeric_limits<double>::quiet_NaN();
  std::string failure;  // empty when a homography was estimated
};

struct EvalReport {
  std::vector<PairEval> pairs;
  std::vector<double> auc_thresholds;
  std::vector<double> auc;
  std::vector<double> precision_thresholds;
  std::vector<double> precision;  // pooled over all fine matches
  double median_epipolar = std::numeric_limits<double>::quiet_NaN();
  int failures = 0;
  std::map<std::string, double> stage_ms;

  std::string to_json() const;
};

// Points of each match in pixel coordinates.
CorrespondenceSet fine_correspondences(const FineResult& fine);
CorrespondenceSet coarse_correspondences(const CoarseMatchSet& matches, const FeaturePyramid& a,
                                         const FeaturePyramid& b);
// Every gt coarse cell of A paired with its exact image under the homography.
CorrespondenceSet oracle_correspondences(const ScenePair& pair);

// JSON key for a pixel threshold, e.g. "@3px".
std::string threshold_label(double t);

double median(std::vector<double> values);

// model may be null in oracle mode.
PairEval evaluate_pair(const Model* model, const ScenePair& pair, const std::string& id,
                       const EvalConfig& cfg, std::map<std::string, double>* stage_ms = nullptr);
EvalReport evaluate_pairs(const Model* model, std::span<const ScenePair> pairs,
                          std::span<const std::string> ids, const EvalConfig& cfg);
// Throws EmptyDataset when the split has no pairs.
EvalReport evaluate(const Model* model, const DatasetManifest& manifest, const std::string& split,
                    const EvalConfig& cfg);

struct TopicOverlay {
  int width = 0;
  int height = 0;
  std::vector<int> cell_labels;          // argmax topic per coarse cell
  std::vector<std::uint8_t> index_map;   // per pixel, nearest-neighbour upsampled labels
  std::vector<std::array<std::uint8_t, 3>> palette;
  RgbImage overlay;                       // 0.5 blend of image and label colour
};

// theta: N x K with N = cell_width * cell_height. Palette colours are drawn
// from palette_seed. Throws ShapeError for K > 256.
TopicOverlay render_topic_overlay(const ag::Matrix& theta, int cell_width, int cell_height,
                                  const ag::Matrix& image, std::uint64_t palette_seed);
void write_palette_json(const std::filesystem::path& path,
                        const std::vector<std::array<std::uint8_t, 3>>& palette,
                        std::uint64_t palette_seed);

struct SweepRow {
  int k_covis = 0;
  std::vector<double> auc;
  std::uint64_t macs_observed = 0;  // coarse stage, from argmax label populations
  double macs_expected = 0.0;       // coarse stage, from soft topic populations
};

// Re-evaluates a plus-variant model with each k_covis. Costs are means over pairs.
std::vector<SweepRow> covis_sweep(const Model& model, std::span<const ScenePair> pairs,
                                  std::span<const int> k_values, const EvalConfig& cfg);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     const std::vector<double>& auc_thresholds);

// Analytic costs for one matched pair, from the shapes and labels it produced.
CostInputs cost_inputs_for(const Model& model, const MatchOutput& out, int height, int width);

}  // namespace topicmatch
