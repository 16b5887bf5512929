#include "gsrig/icp.hpp"

#include "gsrig/kdtree.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace gsrig {

Mat3X SimilarityTransform::apply(const Mat3X& pts) const {
  Eigen::Matrix3d r = rotation.toRotationMatrix();
  Mat3X out = pts * r.transpose() * scale;
  out.rowwise() += translation.transpose();
  return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.conjugate();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

SimilarityTransform umeyama_alignment(const Mat3X& source, const Mat3X& target) {
  if (source.rows() != target.rows() || source.rows() < 3)
    throw Error("DegenerateAlignment", "need >= 3 paired correspondences");
  const double n = static_cast<double>(source.rows());
  Vec3 mu_s = source.colwise().mean();
  Vec3 mu_t = target.colwise().mean();
  Mat3X cs = source.rowwise() - mu_s.transpose();
  Mat3X ct = target.rowwise() - mu_t.transpose();

  Eigen::Matrix3d sigma = ct.transpose() * cs / n;
  double var_s = cs.squaredNorm() / n;
  if (var_s <= 1e-30) throw Error("DegenerateAlignment", "source correspondences coincide");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Rank-deficient cross-covariance leaves the rotation underdetermined.
  if (svd.singularValues()(1) <= 1e-12 * std::max(1.0, svd.singularValues()(0)))
    throw Error("DegenerateAlignment", "correspondence set is rank deficient");

  Vec3 d = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2) = -1.0;
  Eigen::Matrix3d r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();

  SimilarityTransform t;
  t.scale = svd.singularValues().dot(d) / var_s;
  if (!(t.scale > 0.0)) throw Error("DegenerateAlignment", "non-positive recovered scale");
  t.rotation = Quat(r).normalized();
  t.translation = mu_t - t.scale * (r * mu_s);
  return t;
}

namespace {

// Principal axes as a proper rotation, columns sorted by descending
// variance.
Eigen::Matrix3d pca_axes(const Mat3X& pts) {
  Vec3 mu = pts.colwise().mean();
  Mat3X c = pts.rowwise() - mu.transpose();
  Eigen::Matrix3d cov = c.transpose() * c / static_cast<double>(pts.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Matrix3d axes;
  axes.col(0) = es.eigenvectors().col(2);
  axes.col(1) = es.eigenvectors().col(1);
  axes.col(2) = es.eigenvectors().col(0);
  if (axes.determinant() < 0.0) axes.col(2) = -axes.col(2);
  return axes;
}

struct Correspondences {
  Mat3X src;    // trimmed, in source order
  Mat3X tgt;
  double rms;   // over the trimmed set
};

Correspondences correspond(const Mat3X& source, const SimilarityTransform& t,
                           const KdTree& target_tree, const Mat3X& target, int keep) {
  Mat3X moved = t.apply(source);
  const int k = static_cast<int>(source.rows());
  std::vector<std::pair<double, int>> pairs(static_cast<size_t>(k));
  std::vector<int> nn(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    int j = target_tree.nearest(moved.row(i).transpose());
    nn[static_cast<size_t>(i)] = j;
    pairs[static_cast<size_t>(i)] = {(moved.row(i) - target.row(j)).squaredNorm(), i};
  }
  std::sort(pairs.begin(), pairs.end());
  Correspondences c;
  c.src.resize(keep, 3);
  c.tgt.resize(keep, 3);
  double sum = 0.0;
  for (int r = 0; r < keep; ++r) {
    int i = pairs[static_cast<size_t>(r)].second;
    c.src.row(r) = source.row(i);
    c.tgt.row(r) = target.row(nn[static_cast<size_t>(i)]);
    sum += pairs[static_cast<size_t>(r)].first;
  }
  c.rms = std::sqrt(sum / keep);
  return c;
}

double trimmed_rms(const Mat3X& source, const SimilarityTransform& t,
                   const KdTree& target_tree, const Mat3X& target, int keep) {
  Mat3X moved = t.apply(source);
  std::vector<double> d2(static_cast<size_t>(source.rows()));
  for (int i = 0; i < source.rows(); ++i) {
    int j = target_tree.nearest(moved.row(i).transpose());
    d2[static_cast<size_t>(i)] = (moved.row(i) - target.row(j)).squaredNorm();
  }
  std::nth_element(d2.begin(), d2.begin() + keep - 1, d2.end());
  double sum = std::accumulate(d2.begin(), d2.begin() + keep, 0.0);
  return std::sqrt(sum / keep);
}

}  // namespace

namespace {

// Rows surviving two rounds of dropping the `trim` fraction farthest from
// the running centroid — a cheap deterministic outlier pre-filter so the
// initialization moments do not chase gross outliers.
Mat3X robust_core(const Mat3X& pts, double trim) {
  Mat3X cur = pts;
  if (trim <= 0.0) return cur;
  for (int round = 0; round < 2; ++round) {
    const int n = static_cast<int>(cur.rows());
    const int keep = std::max(4, n - static_cast<int>(std::floor(trim * n)));
    if (keep >= n) continue;
    Vec3 mu = cur.colwise().mean();
    std::vector<std::pair<double, int>> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      order[static_cast<size_t>(i)] = {(cur.row(i).transpose() - mu).squaredNorm(), i};
    std::sort(order.begin(), order.end());
    Mat3X next(keep, 3);
    for (int r = 0; r < keep; ++r) next.row(r) = cur.row(order[static_cast<size_t>(r)].second);
    cur = next;
  }
  return cur;
}

}  // namespace

IcpResult scaled_icp(const Mat3X& source, const Mat3X& target, const IcpParams& params) {
  if (source.rows() < 4 || target.rows() < 4)
    throw Error("TooFewPoints", "scaled_icp needs >= 4 points on both sides");
  if (params.trim_fraction < 0.0 || params.trim_fraction >= 0.5)
    throw Error("BadParams", "trim_fraction must be in [0, 0.5)");

  KdTree target_tree(target);
  const int n = static_cast<int>(source.rows());
  const int keep = std::max(3, n - static_cast<int>(std::floor(params.trim_fraction * n)));

  // Initialization moments come from outlier-pre-filtered subsets.
  Mat3X core_s = robust_core(source, params.trim_fraction);
  Mat3X core_t = robust_core(target, params.trim_fraction);
  Vec3 mu_s = core_s.colwise().mean();
  Vec3 mu_t = core_t.colwise().mean();
  double rad_s = std::sqrt((core_s.rowwise() - mu_s.transpose()).squaredNorm() / core_s.rows());
  double rad_t = std::sqrt((core_t.rowwise() - mu_t.transpose()).squaredNorm() / core_t.rows());
  double s0 = rad_s > 1e-30 ? rad_t / rad_s : 1.0;

  // Rotation hypotheses: identity plus the four proper sign combinations
  // of the PCA axis alignment, so large rotations are reachable. Each is
  // iterated to convergence; the best final trimmed RMS wins.
  Eigen::Matrix3d axes_s = pca_axes(core_s);
  Eigen::Matrix3d axes_t = pca_axes(core_t);
  std::vector<Eigen::Matrix3d> rotations;
  rotations.push_back(Eigen::Matrix3d::Identity());
  for (int flip = 0; flip < 4; ++flip) {
    Vec3 d(flip & 1 ? -1.0 : 1.0, flip & 2 ? -1.0 : 1.0, 1.0);
    d(2) = d(0) * d(1);  // keep det = +1
    rotations.push_back(axes_t * d.asDiagonal() * axes_s.transpose());
  }

  IcpResult result;
  result.rms = std::numeric_limits<double>::infinity();
  for (const auto& r : rotations) {
    SimilarityTransform t;
    t.scale = s0;
    t.rotation = Quat(r).normalized();
    t.translation = mu_t - s0 * (r * mu_s);
    double rms = trimmed_rms(source, t, target_tree, target, keep);
    if (rms < result.rms) {
      result.transform = t;
      result.rms = rms;
    }

    // Standard trimmed iteration: correspond under the current transform,
    // drop the worst pairs, refit closed form, always advance.
    double prev = rms;
    for (int iter = 0; iter < params.max_iters; ++iter) {
      Correspondences c = correspond(source, t, target_tree, target, keep);
      try {
        t = umeyama_alignment(c.src, c.tgt);
      } catch (const Error&) {
        break;  // degenerate trimmed set; abandon this start
      }
      rms = trimmed_rms(source, t, target_tree, target, keep);
      result.iterations = std::max(result.iterations, iter + 1);
      if (rms < result.rms) {
        result.transform = t;
        result.rms = rms;
      }
      if (std::abs(prev - rms) < params.tol) break;
      prev = rms;
    }
  }
  return result;
}

Rig transfer_labels(const Mat3X& source_points, const SkinningMatrix& source_skinning,
                    const Skeleton& source_skeleton, const GaussianCloud& target,
                    const SimilarityTransform& T, TransferReport* report) {
  if (target.size() < 1) throw Error("EmptyInput", "transfer target is empty");
  if (source_skinning.points() != source_points.rows())
    throw Error("ShapeError", "source skinning rows != source points");

  Mat3X moved = T.apply(source_points);
  KdTree tree(moved);

  Rig rig;
  rig.cloud = target;
  rig.skeleton = source_skeleton;
  rig.skeleton.joints = T.apply(source_skeleton.joints);
  rig.skinning.weights.resize(target.size(), source_skinning.joints());

  if (report) {
    report->distances.resize(static_cast<size_t>(target.size()));
    report->mean = 0.0;
    report->max = 0.0;
  }
  for (int i = 0; i < target.size(); ++i) {
    Vec3 p = target.means.row(i).transpose();
    int j = tree.nearest(p);
    rig.skinning.weights.row(i) = source_skinning.weights.row(j);
    if (report) {
      double d = (p - moved.row(j).transpose()).norm();
      report->distances[static_cast<size_t>(i)] = d;
      report->mean += d / target.size();
      report->max = std::max(report->max, d);
    }
  }
  return rig;
}

}  // namespace gsrig
