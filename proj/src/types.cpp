#include "gsrig/types.hpp"

#include <cmath>

namespace gsrig {

namespace {

constexpr double kQuatNormTol = 1e-6;
constexpr double kRowSumTol = 1e-5;

void push(std::vector<Violation>& out, const char* code, std::string msg, int index = -1) {
  out.push_back({code, std::move(msg), index});
}

}  // namespace

Eigen::Matrix3d GaussianCloud::covariance(int i) const {
  Eigen::Matrix3d r = orientations[static_cast<size_t>(i)].normalized().toRotationMatrix();
  Eigen::Vector3d s2 = scales.row(i).transpose().array().square();
  return r * s2.asDiagonal() * r.transpose();
}

int Skeleton::root() const {
  for (int i = 0; i < size(); ++i)
    if (parents[static_cast<size_t>(i)] == kNoParent) return i;
  return -1;
}

int Skeleton::body_count() const {
  int n = 0;
  for (auto g : groups)
    if (g == JointGroup::Body) ++n;
  return n;
}

std::vector<std::pair<int, int>> Skeleton::bones() const {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<size_t>(std::max(0, size() - 1)));
  for (int i = 0; i < size(); ++i) {
    int p = parents[static_cast<size_t>(i)];
    if (p != kNoParent) edges.emplace_back(p, i);
  }
  return edges;
}

Pose Pose::identity(int joint_count) {
  Pose p;
  p.joint_rotations.assign(static_cast<size_t>(joint_count), Quat::Identity());
  return p;
}

std::vector<Violation> validate_cloud(const GaussianCloud& cloud) {
  std::vector<Violation> out;
  const int n = cloud.size();
  if (n < 1) {
    push(out, "EmptyCloud", "cloud has no points");
    return out;
  }
  if (cloud.scales.rows() != n || static_cast<int>(cloud.orientations.size()) != n ||
      cloud.colors.rows() != n || cloud.opacities.size() != n) {
    push(out, "SizeMismatch", "cloud attribute arrays disagree on N");
    return out;
  }
  for (int i = 0; i < n; ++i) {
    if (!cloud.means.row(i).allFinite()) push(out, "NonFiniteMean", "mean is not finite", i);
    if (!(cloud.scales.row(i).minCoeff() > 0.0))
      push(out, "NonPositiveScale", "scale must be > 0", i);
    if (std::abs(cloud.orientations[static_cast<size_t>(i)].norm() - 1.0) > kQuatNormTol)
      push(out, "QuaternionNorm", "orientation quaternion not unit", i);
    if (cloud.colors.row(i).minCoeff() < 0.0 || cloud.colors.row(i).maxCoeff() > 1.0)
      push(out, "ColorRange", "color outside [0,1]", i);
    if (cloud.opacities[i] < 0.0 || cloud.opacities[i] > 1.0)
      push(out, "OpacityRange", "opacity outside [0,1]", i);
  }
  return out;
}

std::vector<Violation> validate_skeleton(const Skeleton& skeleton,
                                         std::optional<int> body_joint_count) {
  std::vector<Violation> out;
  const int m = skeleton.size();
  if (m < 1) {
    push(out, "EmptySkeleton", "skeleton has no joints");
    return out;
  }
  if (static_cast<int>(skeleton.parents.size()) != m ||
      static_cast<int>(skeleton.groups.size()) != m) {
    push(out, "SizeMismatch", "parent/group arrays disagree with joint count");
    return out;
  }
  if (!skeleton.joints.allFinite()) push(out, "NonFiniteJoint", "joint positions must be finite");

  int roots = 0;
  for (int i = 0; i < m; ++i) {
    int p = skeleton.parents[static_cast<size_t>(i)];
    if (p == kNoParent) {
      ++roots;
    } else if (p < 0 || p >= m) {
      push(out, "ParentOutOfRange", "parent index outside [0,m)", i);
    } else if (p == i) {
      push(out, "CycleDetected", "joint is its own parent", i);
    }
  }
  if (roots == 0) push(out, "NoRoot", "no joint has the no-parent sentinel");
  if (roots > 1) push(out, "MultipleRoots", "more than one root joint");

  // Walk every parent chain; a chain that fails to terminate within m hops
  // sits on a cycle. Runs even with no root so a pure cycle is named as
  // such, not just as a missing root.
  {
    for (int i = 0; i < m; ++i) {
      int cur = i;
      int hops = 0;
      while (cur != kNoParent && hops <= m) {
        int p = skeleton.parents[static_cast<size_t>(cur)];
        if (p < kNoParent || p >= m) break;
        cur = p;
        ++hops;
      }
      if (hops > m) {
        push(out, "CycleDetected", "parent chain does not reach the root", i);
        break;
      }
    }
  }

  if (body_joint_count && skeleton.body_count() > 0 &&
      skeleton.body_count() != *body_joint_count) {
    push(out, "BodyCountMismatch",
         "body joint count " + std::to_string(skeleton.body_count()) +
             " != configured " + std::to_string(*body_joint_count));
  }
  return out;
}

std::vector<Violation> validate_skinning(const SkinningMatrix& skinning) {
  std::vector<Violation> out;
  for (int i = 0; i < skinning.points(); ++i) {
    if (skinning.weights.row(i).minCoeff() < 0.0)
      push(out, "NegativeWeight", "skinning weight < 0", i);
    double sum = skinning.weights.row(i).sum();
    if (std::abs(sum - 1.0) > kRowSumTol)
      push(out, "RowSumViolation", "row sums to " + std::to_string(sum), i);
  }
  return out;
}

std::vector<Violation> validate_rig(const Rig& rig, std::optional<int> body_joint_count) {
  std::vector<Violation> out = validate_cloud(rig.cloud);
  auto sk = validate_skeleton(rig.skeleton, body_joint_count);
  out.insert(out.end(), sk.begin(), sk.end());
  auto sw = validate_skinning(rig.skinning);
  out.insert(out.end(), sw.begin(), sw.end());

  if (rig.skinning.points() != rig.cloud.size())
    push(out, "SizeMismatch", "skinning rows != cloud size");
  if (rig.skinning.joints() != rig.skeleton.size())
    push(out, "SizeMismatch", "skinning columns != joint count");
  if (!rig.joint_names.empty() &&
      static_cast<int>(rig.joint_names.size()) != rig.skeleton.size())
    push(out, "SizeMismatch", "joint_names length != joint count");
  return out;
}

void validate_pose(const Pose& pose, const Skeleton& skeleton) {
  if (static_cast<int>(pose.joint_rotations.size()) != skeleton.size())
    throw Error("PoseLengthMismatch", "pose rotation count != joint count");
  for (const auto& q : pose.joint_rotations)
    if (std::abs(q.norm() - 1.0) > 1e-6)
      throw Error("QuaternionNorm", "pose quaternion not unit length");
}

}  // namespace gsrig
