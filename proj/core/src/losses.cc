#include "topicmatch/losses.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "topicmatch/errors.h"

namespace topicmatch {
namespace {

void require_finite(double v, const char* what) {
  require(std::isfinite(v), ErrorCode::kNonFinite, std::string(what) + " is not finite");
}

}  // namespace

void SupervisionBundle::validate() const {
  require(n_negatives >= 1, ErrorCode::kConfigError, "n_negatives must be >= 1");
  require(epsilon > 0.0 && epsilon <= 1e-3, ErrorCode::kConfigError,
          "epsilon must lie in (0, 1e-3]");
}

std::vector<std::vector<int>> sample_negatives(const std::vector<IndexPair>& gt, int n_b, int n,
                                               Rng& rng) {
  std::vector<std::vector<int>> out;
  out.reserve(gt.size());
  for (const auto& [i, j] : gt) {
    std::unordered_set<int> partners;
    for (const auto& [i2, j2] : gt) {
      if (i2 == i) partners.insert(j2);
    }
    std::vector<int> candidates;
    candidates.reserve(static_cast<std::size_t>(n_b));
    for (int c = 0; c < n_b; ++c) {
      if (!partners.contains(c)) candidates.push_back(c);
    }
    std::vector<int> picked;
    for (std::size_t k : rng.sample_without_replacement(candidates.size(), static_cast<std::size_t>(n))) {
      picked.push_back(candidates[k]);
    }
    out.push_back(std::move(picked));
  }
  return out;
}

ag::Var topic_matching_loss(const ag::Var& theta_a, const ag::Var& theta_b,
                            const SupervisionBundle& sup, Rng& rng) {
  return topic_matching_loss(
      theta_a, theta_b, sup,
      sample_negatives(sup.gt_coarse, static_cast<int>(theta_b.rows()), sup.n_negatives, rng));
}

ag::Var topic_matching_loss(const ag::Var& theta_a, const ag::Var& theta_b,
                            const SupervisionBundle& sup,
                            const std::vector<std::vector<int>>& negatives) {
  sup.validate();
  require(!sup.gt_coarse.empty(), ErrorCode::kNoGroundTruth, "topic loss needs gt pairs");
  require(negatives.size() == sup.gt_coarse.size(), ErrorCode::kShapeError,
          "one negative list per gt pair expected");
  require(theta_a.cols() == theta_b.cols(), ErrorCode::kShapeError, "topic counts differ");
  const double m = static_cast<double>(sup.gt_coarse.size());

  std::vector<ag::Index> ia, jb, na, nb;
  std::vector<double> neg_weight;
  for (std::size_t p = 0; p < sup.gt_coarse.size(); ++p) {
    const auto [i, j] = sup.gt_coarse[p];
    require(i >= 0 && i < theta_a.rows() && j >= 0 && j < theta_b.rows(), ErrorCode::kShapeError,
            "gt pair index out of range");
    ia.push_back(i);
    jb.push_back(j);
    for (int n : negatives[p]) {
      require(n >= 0 && n < theta_b.rows(), ErrorCode::kShapeError, "negative index out of range");
      na.push_back(i);
      nb.push_back(n);
      neg_weight.push_back(1.0 / (static_cast<double>(negatives[p].size()) * m));
    }
  }
  const ag::Var same = ag::row_dot(ag::gather_rows(theta_a, ia), ag::gather_rows(theta_b, jb));
  ag::Var loss = ag::scale(ag::mean(ag::log_clamped(same, sup.epsilon)), -1.0);
  if (!na.empty()) {
    const ag::Var p = ag::row_dot(ag::gather_rows(theta_a, na), ag::gather_rows(theta_b, nb));
    const ag::Var apart = ag::add_scalar(ag::scale(p, -1.0), 1.0);
    const ag::Matrix w = Eigen::Map<const ag::Matrix>(neg_weight.data(),
                                                      static_cast<ag::Index>(neg_weight.size()), 1);
    loss = ag::sub(loss, ag::sum(ag::mul(ag::log_clamped(apart, sup.epsilon), ag::constant(w))));
  }
  return loss;
}

ag::Var coarse_feature_loss(const ag::Var& p_c, const std::vector<IndexPair>& gt, double epsilon) {
  require(!gt.empty(), ErrorCode::kNoGroundTruth, "coarse feature loss needs gt pairs");
  std::vector<std::pair<ag::Index, ag::Index>> cells;
  cells.reserve(gt.size());
  for (const auto& [i, j] : gt) {
    require(i >= 0 && i < p_c.rows() && j >= 0 && j < p_c.cols(), ErrorCode::kShapeError,
            "gt pair index out of range");
    cells.emplace_back(i, j);
  }
  return ag::scale(ag::mean(ag::log_clamped(ag::gather_elements(p_c, cells), epsilon)), -1.0);
}

ag::Var fine_epipolar_loss(const ag::Var& points_a, const ag::Var& points_b,
                           const FundamentalMatrix& f, double floor) {
  require(points_a.rows() > 0, ErrorCode::kNoMatches, "fine loss needs at least one match");
  require(points_a.cols() == 2 && points_b.cols() == 2 && points_a.rows() == points_b.rows(),
          ErrorCode::kShapeError, "fine loss expects two M x 2 point sets");
  const ag::Index m = points_a.rows();
  const ag::Var ones = ag::constant(ag::Matrix::Ones(m, 1));
  const std::vector<ag::Var> parts_a{points_a, ones}, parts_b{points_b, ones};
  const ag::Var xa = ag::concat_cols(parts_a);
  const ag::Var yb = ag::concat_cols(parts_b);
  const ag::Matrix fm = f.matrix();
  // Rows of line_b are (F^T x)^T, rows of line_a are (F y)^T.
  const ag::Var line_b = ag::matmul(xa, ag::constant(fm));
  const ag::Var line_a = ag::matmul(yb, ag::constant(fm.transpose()));
  const ag::Var num = ag::square(ag::row_dot(xa, line_a));
  const ag::Var den_b = ag::clamp_min(ag::sum_cols(ag::square(ag::slice_cols(line_b, 0, 2))), floor);
  const ag::Var den_a = ag::clamp_min(ag::sum_cols(ag::square(ag::slice_cols(line_a, 0, 2))), floor);
  return ag::mean(ag::add(ag::div(num, den_b), ag::div(num, den_a)));
}

ag::Var total_loss(const ag::Var& coarse_feat, const ag::Var& topic, const ag::Var& fine,
                   const LossWeights& w) {
  require(w.lambda_c >= 0.0 && w.lambda_f >= 0.0, ErrorCode::kConfigError,
          "loss weights must be nonnegative");
  require_finite(coarse_feat.scalar(), "coarse feature loss");
  require_finite(topic.scalar(), "topic matching loss");
  ag::Var out = ag::scale(ag::add(coarse_feat, topic), w.lambda_c);
  if (fine.defined()) {
    require_finite(fine.scalar(), "fine epipolar loss");
    out = ag::add(out, ag::scale(fine, w.lambda_f));
  }
  require_finite(out.scalar(), "total loss");
  return out;
}

double total_loss(double coarse_feat, double topic, double fine, const LossWeights& w) {
  require(w.lambda_c >= 0.0 && w.lambda_f >= 0.0, ErrorCode::kConfigError,
          "loss weights must be nonnegative");
  require_finite(coarse_feat, "coarse feature loss");
  require_finite(topic, "topic matching loss");
  require_finite(fine, "fine epipolar loss");
  return w.lambda_c * (coarse_feat + topic) + w.lambda_f * fine;
}

}  // namespace topicmatch
