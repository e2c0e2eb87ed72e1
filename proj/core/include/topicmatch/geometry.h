#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace topicmatch {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Image-to-image projective map, scaled so that h(2,2) == 1 whenever that
// entry is nonzero.
class Homography {
 public:
  Homography() : h_(Mat3::Identity()) {}
  // Throws DegenerateWarp on a (numerically) singular matrix.
  explicit Homography(const Mat3& h);

  const Mat3& matrix() const { return h_; }
  Homography inverse() const { return Homography(h_.inverse()); }
  Homography compose(const Homography& after) const { return Homography(after.h_ * h_); }

  static Homography translation(double tx, double ty);

 private:
  Mat3 h_;
};

// Maps points of image A to epipolar lines of image B and vice versa under the
// convention x_a^T F x_b = 0. Stored at unit Frobenius norm.
class FundamentalMatrix {
 public:
  FundamentalMatrix() : f_(Mat3::Zero()) {}
  explicit FundamentalMatrix(const Mat3& f);
  // Keeps an already normalized matrix bit for bit (used when loading).
  static FundamentalMatrix from_normalized(const Mat3& f);

  const Mat3& matrix() const { return f_; }

 private:
  Mat3 f_;
};

// Relative pose taking points from camera B coordinates into camera A
// coordinates: X_a = rotation * X_b + translation. Both views share intrinsics.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Mat3 intrinsics = Mat3::Identity();
};

struct CorrespondenceSet {
  std::vector<Vec2> points_a;
  std::vector<Vec2> points_b;
  std::vector<double> weights;  // empty, or one confidence per pair

  std::size_t size() const { return points_a.size(); }
  void add(const Vec2& a, const Vec2& b) {
    points_a.push_back(a);
    points_b.push_back(b);
  }
};

struct GridShape {
  int width = 0;
  int height = 0;
  int size() const { return width * height; }
};

using IndexPair = std::pair<int, int>;

Vec2 warp_point(const Homography& h, const Vec2& p);
std::vector<Vec2> warp_points(const Homography& h, std::span<const Vec2> pts);

FundamentalMatrix fundamental_from_pose(const CameraPose& pose);

// |x^T F y|^2 (1/|F^T x|_{0:2}^2 + 1/|F y|_{0:2}^2) with x in image A and y in
// image B. Throws UndefinedDistance when either line-norm term vanishes.
double symmetric_epipolar_distance(const FundamentalMatrix& f, const Vec2& x, const Vec2& y);

// Same quantity with each denominator floored at `floor` (training guard).
double symmetric_epipolar_distance_guarded(const FundamentalMatrix& f, const Vec2& x,
                                           const Vec2& y, double floor = 1e-12);

// Normalized DLT over all given pairs (at least 4).
Homography fit_homography_dlt(std::span<const Vec2> a, std::span<const Vec2> b);

// Squared forward plus squared backward transfer distance.
double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Vec2& a,
                                const Vec2& b);

struct RansacResult {
  Homography homography;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

// Pair i is an inlier when its symmetric transfer error is at most
// threshold_px^2. The winning hypothesis is refit on its inliers.
RansacResult estimate_homography_ransac(const CorrespondenceSet& c, double threshold_px,
                                        int iters, std::uint64_t seed);

// Mean distance between the four image corners mapped by each homography.
double corner_error(const Homography& h_est, const Homography& h_gt, int width, int height);

// Area under the cumulative accuracy curve up to each threshold, normalized by
// the threshold. Non-finite errors count as failures.
std::vector<double> auc_at_thresholds(std::span<const double> errors,
                                      std::span<const double> thresholds);

// Coarse cell (col, row) of a grid is anchored at pixel (cell_px*col, cell_px*row).
Vec2 coarse_cell_pixel(int index, const GridShape& grid, int cell_px);

// Ground-truth coarse correspondences under h, sorted by index in A.
std::vector<IndexPair> gt_coarse_matches(const Homography& h, const GridShape& grid_a,
                                         const GridShape& grid_b, int cell_px);

}  // namespace topicmatch
