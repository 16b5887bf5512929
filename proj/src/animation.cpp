#include "gsrig/animation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace gsrig {

std::vector<AffineTransform> forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  validate_pose(pose, skeleton);
  const int m = skeleton.size();
  const int root = skeleton.root();
  if (root < 0) throw Error("CorruptSkeleton", "skeleton has no root");

  std::vector<std::vector<int>> children(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    int p = skeleton.parents[static_cast<size_t>(j)];
    if (p == kNoParent) continue;
    if (p < 0 || p >= m) throw Error("CorruptSkeleton", "parent index out of range");
    children[static_cast<size_t>(p)].push_back(j);
  }

  std::vector<AffineTransform> world(static_cast<size_t>(m));
  std::vector<int> stack{root};
  int visited = 0;
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    ++visited;

    int p = skeleton.parents[static_cast<size_t>(j)];
    Eigen::Matrix3d rot = pose.joint_rotations[static_cast<size_t>(j)].toRotationMatrix();
    AffineTransform& w = world[static_cast<size_t>(j)];
    if (p == kNoParent) {
      w.linear = rot;
      w.translation = pose.root_translation + skeleton.joints.row(j).transpose();
    } else {
      const AffineTransform& wp = world[static_cast<size_t>(p)];
      // Under identity rotations the recursion collapses to T(rest_j); writing
      // rest_j directly keeps that exact instead of ulp-drifted, which is what
      // lets the bit-exact identity fast path in lbs_deform fire for identity
      // poses.
      if (rot.isIdentity(0.0) && wp.linear.isIdentity(0.0) &&
          wp.translation == skeleton.joints.row(p).transpose()) {
        w.linear = wp.linear;
        w.translation = skeleton.joints.row(j).transpose();
      } else {
        Vec3 offset = (skeleton.joints.row(j) - skeleton.joints.row(p)).transpose();
        w.linear = wp.linear * rot;
        w.translation = wp.linear * offset + wp.translation;
      }
    }
    // Reverse order so lower-index children are processed first (stable,
    // though FK output is order-independent).
    const auto& ch = children[static_cast<size_t>(j)];
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  if (visited != m) throw Error("CorruptSkeleton", "skeleton graph is not a rooted tree");
  return world;
}

Mat3X posed_joints(const std::vector<AffineTransform>& transforms) {
  Mat3X out(static_cast<int>(transforms.size()), 3);
  for (int j = 0; j < out.rows(); ++j)
    out.row(j) = transforms[static_cast<size_t>(j)].translation.transpose();
  return out;
}

namespace {

constexpr double kEigClamp = 1e-10;

// If a is c*Q for a rotation Q (uniform-scale similarity), returns c > 0.
bool similarity_factor(const Eigen::Matrix3d& a, double* c) {
  Eigen::Matrix3d g = a.transpose() * a;
  double c2 = g.trace() / 3.0;
  if (c2 <= 0.0) return false;
  if ((g - c2 * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c2))
    return false;
  if (a.determinant() < 0.0) return false;
  *c = std::sqrt(c2);
  return true;
}

}  // namespace

GaussianCloud lbs_deform(const GaussianCloud& cloud, const SkinningMatrix& skinning,
                         const std::vector<AffineTransform>& transforms,
                         const Mat3X& rest_joints) {
  const int n = cloud.size();
  const int m = static_cast<int>(transforms.size());
  if (skinning.points() != n || skinning.joints() != m || rest_joints.rows() != m)
    throw Error("SizeMismatch", "lbs inputs disagree on dimensions");

  bool all_identity = true;
  for (const auto& t : transforms) all_identity = all_identity && t.is_identity();
  if (all_identity) return cloud;

  // Skinning transforms: rest space -> posed space per joint.
  std::vector<AffineTransform> skin(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    skin[static_cast<size_t>(j)].linear = transforms[static_cast<size_t>(j)].linear;
    skin[static_cast<size_t>(j)].translation =
        transforms[static_cast<size_t>(j)].translation -
        transforms[static_cast<size_t>(j)].linear * rest_joints.row(j).transpose();
  }

  GaussianCloud out = cloud;
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix3d lin = Eigen::Matrix3d::Zero();
    Vec3 trans = Vec3::Zero();
    for (int j = 0; j < m; ++j) {
      double w = skinning.weights(i, j);
      if (w == 0.0) continue;
      lin += w * skin[static_cast<size_t>(j)].linear;
      trans += w * skin[static_cast<size_t>(j)].translation;
    }

    out.means.row(i) = (lin * cloud.means.row(i).transpose() + trans).transpose();

    double c = 1.0;
    if (similarity_factor(lin, &c)) {
      // Exact path: scales pick up the factor, orientation composes.
      out.scales.row(i) = cloud.scales.row(i) * c;
      Quat q(lin / c);
      out.orientations[static_cast<size_t>(i)] =
          (q * cloud.orientations[static_cast<size_t>(i)]).normalized();
    } else {
      Eigen::Matrix3d sigma = cloud.covariance(i);
      Eigen::Matrix3d moved = lin * sigma * lin.transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(moved);
      Vec3 evals = es.eigenvalues().cwiseMax(kEigClamp);
      Eigen::Matrix3d evecs = es.eigenvectors();
      if (evecs.determinant() < 0.0) evecs.col(0) = -evecs.col(0);

      Eigen::Matrix3d rebuilt = evecs * evals.asDiagonal() * evecs.transpose();
      double scale_ref = std::max(1.0, moved.cwiseAbs().maxCoeff());
      if ((rebuilt - moved).cwiseAbs().maxCoeff() > 1e-6 * scale_ref)
        throw Error("NumericalError", "covariance refactor residual too large");

      out.scales.row(i) = evals.cwiseSqrt().transpose();
      out.orientations[static_cast<size_t>(i)] = Quat(evecs).normalized();
    }
  }
  return out;
}

}  // namespace gsrig
