#pragma once

#include "gsrig/types.hpp"

#include <vector>

namespace gsrig {

struct AffineTransform {
  Eigen::Matrix3d linear = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }
  bool is_identity() const {
    return linear == Eigen::Matrix3d::Identity() && translation == Vec3::Zero();
  }
};

// Per-joint world transforms composed root -> leaf:
// W_j = W_parent * T(rest offset) * R(pose_j), with the root additionally
// translated by root_translation. The posed position of joint j is
// W_j applied to the origin (its translation part); with the identity pose
// every joint lands back on its rest position.
std::vector<AffineTransform> forward_kinematics(const Skeleton& skeleton, const Pose& pose);

// Posed joint positions out of the FK transforms (their translation parts).
Mat3X posed_joints(const std::vector<AffineTransform>& transforms);

// Linear blend skinning. Per point, the blended affine
// A = sum_j w_ij * (W_j * T(-rest_j)) moves the mean; covariances map as
// A_lin Sigma A_lin^T and are refactored to (scales, orientation) by
// symmetric eigendecomposition (eigenvalues clamped at 1e-10). A blend
// that is exactly a similarity keeps scales (times the factor) and
// composes the rotation instead. All-identity transforms return the cloud
// unchanged bit for bit.
GaussianCloud lbs_deform(const GaussianCloud& cloud, const SkinningMatrix& skinning,
                         const std::vector<AffineTransform>& transforms,
                         const Mat3X& rest_joints);

}  // namespace gsrig
