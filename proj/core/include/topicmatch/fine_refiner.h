#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicmatch/autograd.h"
#include "topicmatch/backbone.h"
#include "topicmatch/geometry.h"
#include "topicmatch/nn.h"
#include "topicmatch/topic_matcher.h"

namespace topicmatch {

struct FineConfig {
  int window = 5;            // odd patch side on the 1/2 map
  double temperature = 0.1;  // detector heatmap temperature
  int token_hidden = 0;      // 0 -> 2 * window^2
  int channel_hidden = 0;    // 0 -> 2 * D_f
  bool fixed_center = false; // ablation: one-hot heat on the patch center

  int patch_cells() const { return window * window; }
  void validate() const;
};

// Patch cell coordinates (u, v) relative to the patch origin, row-major:
// row n = v * w + u holds (u, v).
ag::Matrix grid_map(int window);

// Patches of all matches stacked along rows: patch m occupies rows
// [m * N_p, (m + 1) * N_p). Out-of-bounds cells are zero rows with mask 0.
struct PatchBatch {
  ag::Var patches_a;          // M*N_p x D_f
  ag::Var patches_b;
  ag::Matrix mask_a;          // M x N_p, 1 valid / 0 outside the map
  ag::Matrix mask_b;
  std::vector<Vec2> origin_a; // fine-grid coordinates of local cell (0, 0)
  std::vector<Vec2> origin_b;
  int window = 5;

  int size() const { return static_cast<int>(origin_a.size()); }
};

// A coarse cell maps to fine-grid center (4 col, 4 row).
PatchBatch crop_patches(const FeaturePyramid& a, const FeaturePyramid& b,
                        const CoarseMatchSet& matches, int window);

struct MixerBlock {
  LayerNorm token_norm;
  Mlp token_mlp;  // N_p -> H_t -> N_p
  LayerNorm channel_norm;
  Mlp channel_mlp;  // D -> H_c -> D

  MixerBlock() = default;
  MixerBlock(Rng& rng, int tokens, int channels, int token_hidden, int channel_hidden);
  int tokens() const { return token_mlp.fc1.in_features(); }
  void set_zero();
  void collect(const std::string& prefix, NamedParameters& out);
};

// x holds stacked N_p-token patches (M*N_p x D).
ag::Var mixer_block(const MixerBlock& block, const ag::Var& x);

struct FineParams {
  MixerBlock shared1, shared2;      // applied to both patches
  MixerBlock detect1, detect2;      // detector on the A patch
  Linear head;                      // D -> 1 per token

  void collect(NamedParameters& out, const std::string& prefix = "fine");
};

FineParams init_fine(std::uint64_t seed, int dim, const FineConfig& cfg);

// Masked cells get zero probability. heat = softmax(scores / t) per row.
struct SoftArgmax {
  ag::Var heat;    // M x N_p
  ag::Var coords;  // M x 2 local (u, v)
};
SoftArgmax soft_argmax(const ag::Var& scores, const ag::Matrix& mask, const ag::Matrix& grid,
                       double temperature);

struct Keypoint {
  ag::Var coords;      // M x 2 local
  ag::Var descriptor;  // M x D
  ag::Var heat;        // M x N_p
  ag::Var scores;      // M x N_p, before masking
};

// Score map from the detector, heatmap at temperature t, expectation of grid
// and patch features under the heatmap.
Keypoint detect_keypoint(const FineParams& params, const ag::Var& patches, const ag::Matrix& mask,
                         const ag::Matrix& grid, const FineConfig& cfg);

struct PatchMatch {
  ag::Var coords;      // M x 2 local
  ag::Var descriptor;  // M x D
  ag::Var heat;        // M x N_p
  std::vector<double> confidence;  // peak of each heat row
};

// Heat over valid cells from dot products with the query descriptors.
PatchMatch match_in_patch(const ag::Var& descriptors, const ag::Var& patches,
                          const ag::Matrix& mask, const ag::Matrix& grid);

struct FineMatch {
  Vec2 xa;
  Vec2 xb;
  double confidence = 0.0;
  int coarse_index = 0;  // position in the input coarse set
};

struct FineResult {
  std::vector<FineMatch> matches;
  ag::Var points_a;  // M x 2 pixel coordinates, differentiable
  ag::Var points_b;
  ag::Var heat_a;
  ag::Var heat_b;
  ag::Matrix mask_a;
  ag::Matrix mask_b;
  int dropped = 0;   // coarse pairs whose patches had no valid cell
};

// Pixel = fine stride * (patch origin + local coordinate).
FineResult refine_matches(const FeaturePyramid& a, const FeaturePyramid& b,
                          const CoarseMatchSet& coarse, const FineParams& params,
                          const FineConfig& cfg);

}  // namespace topicmatch
