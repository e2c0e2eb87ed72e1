#pragma once

#include <utility>
#include <vector>

#include "topicmatch/autograd.h"
#include "topicmatch/geometry.h"
#include "topicmatch/rng.h"

namespace topicmatch {

struct LossWeights {
  double lambda_c = 0.25;
  double lambda_f = 0.25;
};

struct SupervisionBundle {
  std::vector<IndexPair> gt_coarse;
  FundamentalMatrix fundamental;
  int n_negatives = 5;
  double epsilon = 1e-6;

  void validate() const;
};

// For every gt pair (i, j), up to n B-features j' with (i, j') not in gt, drawn
// uniformly without replacement. Result is grouped by gt pair in gt order.
std::vector<std::vector<int>> sample_negatives(const std::vector<IndexPair>& gt, int n_b, int n,
                                               Rng& rng);

// Mean over gt pairs of -log<theta_i, theta_j> plus the mean over that pair's
// negatives of -log(1 - <theta_i, theta_n>), every log argument floored at eps.
ag::Var topic_matching_loss(const ag::Var& theta_a, const ag::Var& theta_b,
                            const SupervisionBundle& sup, Rng& rng);
ag::Var topic_matching_loss(const ag::Var& theta_a, const ag::Var& theta_b,
                            const SupervisionBundle& sup,
                            const std::vector<std::vector<int>>& negatives);

// -mean log P_c(i, j) over gt cells.
ag::Var coarse_feature_loss(const ag::Var& p_c, const std::vector<IndexPair>& gt,
                            double epsilon = 1e-6);

// Mean symmetric epipolar distance of (points_a[m], points_b[m]) with both
// line-norm denominators floored at `floor`. points: M x 2 pixel coordinates.
ag::Var fine_epipolar_loss(const ag::Var& points_a, const ag::Var& points_b,
                           const FundamentalMatrix& f, double floor = 1e-12);

// lambda_c (feat + topic) + lambda_f fine. An undefined `fine` counts as zero.
ag::Var total_loss(const ag::Var& coarse_feat, const ag::Var& topic, const ag::Var& fine,
                   const LossWeights& w);
double total_loss(double coarse_feat, double topic, double fine, const LossWeights& w);

}  // namespace topicmatch
