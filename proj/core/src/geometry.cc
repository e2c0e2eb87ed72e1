#include "topicmatch/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "topicmatch/errors.h"
#include "topicmatch/rng.h"

namespace topicmatch {
namespace {

constexpr double kWarpEps = 1e-12;

Mat3 skew(const Vec3& t) {
  Mat3 s;
  s << 0.0, -t.z(), t.y(),
       t.z(), 0.0, -t.x(),
       -t.y(), t.x(), 0.0;
  return s;
}

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Mat3 hartley_normalization(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const Vec2& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0.0, -s * centroid.x(),
       0.0, s, -s * centroid.y(),
       0.0, 0.0, 1.0;
  return t;
}

}  // namespace

Homography::Homography(const Mat3& h) {
  const double norm = h.norm();
  require(norm > 0.0 && std::isfinite(norm), ErrorCode::kDegenerateWarp,
          "homography has zero or non-finite entries");
  const double det = (h / norm).determinant();
  require(std::abs(det) > 1e-12, ErrorCode::kDegenerateWarp, "singular homography");
  h_ = std::abs(h(2, 2)) > 1e-12 ? Mat3(h / h(2, 2)) : h;
}

Homography Homography::translation(double tx, double ty) {
  Mat3 h = Mat3::Identity();
  h(0, 2) = tx;
  h(1, 2) = ty;
  return Homography(h);
}

FundamentalMatrix::FundamentalMatrix(const Mat3& f) {
  const double norm = f.norm();
  require(norm > 0.0 && std::isfinite(norm), ErrorCode::kDegeneratePose,
          "fundamental matrix with zero or non-finite norm");
  f_ = f / norm;
}

FundamentalMatrix FundamentalMatrix::from_normalized(const Mat3& f) {
  FundamentalMatrix out(f);
  if (std::abs(f.norm() - 1.0) < 1e-12) out.f_ = f;
  return out;
}

Vec2 warp_point(const Homography& h, const Vec2& p) {
  const Vec3 q = h.matrix() * p.homogeneous();
  require(std::abs(q.z()) >= kWarpEps, ErrorCode::kDegenerateWarp,
          "point maps to infinity under homography");
  return q.hnormalized();
}

std::vector<Vec2> warp_points(const Homography& h, std::span<const Vec2> pts) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) {
    require(p.allFinite(), ErrorCode::kDegenerateWarp, "non-finite input point");
    out.push_back(warp_point(h, p));
  }
  return out;
}

FundamentalMatrix fundamental_from_pose(const CameraPose& pose) {
  require(pose.translation.norm() > 1e-9, ErrorCode::kDegeneratePose,
          "zero baseline has no fundamental matrix");
  const Mat3 k_inv = pose.intrinsics.inverse();
  const Mat3 f = k_inv.transpose() * skew(pose.translation) * pose.rotation * k_inv;
  return FundamentalMatrix(f);
}

double symmetric_epipolar_distance(const FundamentalMatrix& f, const Vec2& x, const Vec2& y) {
  const Vec3 xh = x.homogeneous();
  const Vec3 yh = y.homogeneous();
  const Mat3& m = f.matrix();
  const Vec3 line_b = m.transpose() * xh;  // epipolar line of x in image B
  const Vec3 line_a = m * yh;              // epipolar line of y in image A
  const double den_b = line_b.head<2>().squaredNorm();
  const double den_a = line_a.head<2>().squaredNorm();
  require(den_a >= 1e-12 && den_b >= 1e-12, ErrorCode::kUndefinedDistance,
          "point lies at an epipole");
  const double r = xh.dot(line_a);
  return r * r * (1.0 / den_b + 1.0 / den_a);
}

double symmetric_epipolar_distance_guarded(const FundamentalMatrix& f, const Vec2& x,
                                           const Vec2& y, double floor) {
  const Vec3 xh = x.homogeneous();
  const Vec3 yh = y.homogeneous();
  const Mat3& m = f.matrix();
  const double den_b = std::max((m.transpose() * xh).head<2>().squaredNorm(), floor);
  const Vec3 line_a = m * yh;
  const double den_a = std::max(line_a.head<2>().squaredNorm(), floor);
  const double r = xh.dot(line_a);
  return r * r * (1.0 / den_b + 1.0 / den_a);
}

Homography fit_homography_dlt(std::span<const Vec2> a, std::span<const Vec2> b) {
  require(a.size() == b.size(), ErrorCode::kShapeError, "DLT: point count mismatch");
  require(a.size() >= 4, ErrorCode::kInsufficientMatches, "DLT needs at least 4 pairs");
  const Mat3 ta = hartley_normalization(a);
  const Mat3 tb = hartley_normalization(b);
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd design(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = ta * a[i].homogeneous();
    const Vec3 q = tb * b[i].homogeneous();
    const double x = p.x() / p.z(), y = p.y() / p.z();
    const double u = q.x() / q.z(), v = q.y() / q.z();
    design.row(2 * i) << -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u;
    design.row(2 * i + 1) << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
  }
  // The null vector of A is the smallest eigenvector of A^T A; a 9x9 symmetric
  // eigensolve is much cheaper than a full SVD of the tall design matrix.
  const Eigen::Matrix<double, 9, 9> ata = design.transpose() * design;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> solver(ata);
  const Eigen::Matrix<double, 9, 1> hvec = solver.eigenvectors().col(0);
  Mat3 hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
  return Homography(tb.inverse() * hn * ta);
}

double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Vec2& a,
                                const Vec2& b) {
  const Vec3 fa = h.matrix() * a.homogeneous();
  const Vec3 bb = h_inv.matrix() * b.homogeneous();
  if (std::abs(fa.z()) < kWarpEps || std::abs(bb.z()) < kWarpEps) {
    return std::numeric_limits<double>::infinity();
  }
  return (fa.hnormalized() - b).squaredNorm() + (bb.hnormalized() - a).squaredNorm();
}

namespace {

struct Consensus {
  std::vector<bool> mask;
  std::size_t count = 0;
};

Consensus score_hypothesis(const Homography& h, const CorrespondenceSet& c, double thresh_sq) {
  Consensus out;
  out.mask.assign(c.size(), false);
  const Homography h_inv = h.inverse();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (symmetric_transfer_error(h, h_inv, c.points_a[i], c.points_b[i]) <= thresh_sq) {
      out.mask[i] = true;
      ++out.count;
    }
  }
  return out;
}

Homography refit(const CorrespondenceSet& c, const std::vector<bool>& mask) {
  std::vector<Vec2> a, b;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (mask[i]) {
      a.push_back(c.points_a[i]);
      b.push_back(c.points_b[i]);
    }
  }
  return fit_homography_dlt(a, b);
}

}  // namespace

RansacResult estimate_homography_ransac(const CorrespondenceSet& c, double threshold_px,
                                        int iters, std::uint64_t seed) {
  require(c.points_a.size() == c.points_b.size(), ErrorCode::kShapeError,
          "correspondence lists differ in length");
  require(c.size() >= 4, ErrorCode::kInsufficientMatches,
          "homography estimation needs at least 4 correspondences");
  const double thresh_sq = threshold_px * threshold_px;
  Rng rng(seed);

  Consensus best;
  Homography best_h;
  std::vector<Vec2> sa(4), sb(4);
  for (int it = 0; it < iters; ++it) {
    const auto sample = rng.sample_without_replacement(c.size(), 4);
    for (int k = 0; k < 4; ++k) {
      sa[k] = c.points_a[sample[k]];
      sb[k] = c.points_b[sample[k]];
    }
    Homography h;
    Consensus cons;
    try {
      h = fit_homography_dlt(sa, sb);
      cons = score_hypothesis(h, c, thresh_sq);
    } catch (const Error&) {
      continue;  // degenerate minimal sample or singular fit
    }
    if (cons.count > best.count) {
      best = std::move(cons);
      best_h = h;
      if (best.count == c.size()) break;
    }
  }
  require(best.count >= 4, ErrorCode::kNoConsensus, "no hypothesis reached 4 inliers");

  // Refit on the consensus set, then once more on the refit's own inliers if
  // that does not shrink the support.
  RansacResult result;
  try {
    result.homography = refit(c, best.mask);
    Consensus again = score_hypothesis(result.homography, c, thresh_sq);
    if (again.count >= best.count) {
      result.homography = refit(c, again.mask);
      best = std::move(again);
    }
  } catch (const Error&) {
    result.homography = best_h;
  }
  result.inliers = std::move(best.mask);
  result.inlier_count = best.count;
  return result;
}

double corner_error(const Homography& h_est, const Homography& h_gt, int width, int height) {
  const double w = width - 1.0, h = height - 1.0;
  const Vec2 corners[4] = {Vec2(0.0, 0.0), Vec2(w, 0.0), Vec2(w, h), Vec2(0.0, h)};
  double total = 0.0;
  for (const Vec2& p : corners) total += (warp_point(h_est, p) - warp_point(h_gt, p)).norm();
  return total / 4.0;
}

std::vector<double> auc_at_thresholds(std::span<const double> errors,
                                      std::span<const double> thresholds) {
  require(!errors.empty(), ErrorCode::kEmptyInput, "AUC of an empty error list");
  std::vector<double> sorted(errors.begin(), errors.end());
  for (double& v : sorted) {
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
  }
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  // Knots of the cumulative curve: (0, 0), (e_k, k/n).
  std::vector<double> e{0.0}, r{0.0};
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    e.push_back(sorted[k]);
    r.push_back(static_cast<double>(k + 1) / n);
  }

  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    require(t > 0.0, ErrorCode::kEmptyInput, "AUC threshold must be positive");
    double area = 0.0;
    std::size_t k = 1;
    for (; k < e.size() && e[k] <= t; ++k) {
      area += 0.5 * (e[k] - e[k - 1]) * (r[k] + r[k - 1]);
    }
    // Flat continuation at the last reached recall up to t.
    area += (t - e[k - 1]) * r[k - 1];
    out.push_back(area / t);
  }
  return out;
}

Vec2 coarse_cell_pixel(int index, const GridShape& grid, int cell_px) {
  const int col = index % grid.width;
  const int row = index / grid.width;
  return Vec2(static_cast<double>(col * cell_px), static_cast<double>(row * cell_px));
}

std::vector<IndexPair> gt_coarse_matches(const Homography& h, const GridShape& grid_a,
                                         const GridShape& grid_b, int cell_px) {
  const double half = 0.5 * cell_px;
  // For each B cell: best A index and its distance.
  std::vector<int> owner(static_cast<std::size_t>(grid_b.size()), -1);
  std::vector<double> owner_dist(static_cast<std::size_t>(grid_b.size()),
                                 std::numeric_limits<double>::infinity());
  for (int i = 0; i < grid_a.size(); ++i) {
    const Vec3 q = h.matrix() * coarse_cell_pixel(i, grid_a, cell_px).homogeneous();
    if (std::abs(q.z()) < kWarpEps) continue;
    const Vec2 p = q.hnormalized();
    const double cx = std::round(p.x() / cell_px);
    const double cy = std::round(p.y() / cell_px);
    if (cx < 0 || cy < 0 || cx >= grid_b.width || cy >= grid_b.height) continue;
    const double dist = (p - Vec2(cx * cell_px, cy * cell_px)).norm();
    if (dist > half) continue;
    const int j = static_cast<int>(cy) * grid_b.width + static_cast<int>(cx);
    if (dist < owner_dist[j]) {
      owner_dist[j] = dist;
      owner[j] = i;
    }
  }
  std::vector<IndexPair> out;
  for (int j = 0; j < grid_b.size(); ++j) {
    if (owner[j] >= 0) out.emplace_back(owner[j], j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace topicmatch
