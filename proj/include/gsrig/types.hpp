#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsrig {

using Mat3X = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Thrown on contract violations. `code` is a stable machine-readable name
// (e.g. "TooFewPoints"); the CLI surfaces it as structured JSON.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

constexpr int kNoParent = -1;

enum class JointGroup { Body, Other };

inline const char* to_string(JointGroup g) {
  return g == JointGroup::Body ? "body" : "other";
}

// N anisotropic Gaussian primitives. The means carry all geometry the
// rigging pipeline consumes; the remaining attributes feed rendering and
// the optional appearance channels of the point encoder.
struct GaussianCloud {
  Mat3X means;                  // N x 3
  Mat3X scales;                 // N x 3, positive axis lengths
  std::vector<Quat> orientations;  // N unit quaternions
  Mat3X colors;                 // N x 3 in [0, 1]
  Eigen::VectorXd opacities;    // N in [0, 1]

  int size() const { return static_cast<int>(means.rows()); }

  // Covariance of Gaussian i: R diag(s^2) R^T.
  Eigen::Matrix3d covariance(int i) const;
};

// Rooted skeleton tree: joint positions, parent indices (root = kNoParent)
// and a body/other tag per joint.
struct Skeleton {
  Mat3X joints;               // m x 3
  std::vector<int> parents;   // m, parents[root] == kNoParent
  std::vector<JointGroup> groups;

  int size() const { return static_cast<int>(joints.rows()); }
  int root() const;
  int body_count() const;
  // Parent-child index pairs, one per non-root joint, ordered by child.
  std::vector<std::pair<int, int>> bones() const;
};

// Per-point categorical distribution over joints; rows sum to 1.
struct SkinningMatrix {
  Eigen::MatrixXd weights;  // n x m

  int points() const { return static_cast<int>(weights.rows()); }
  int joints() const { return static_cast<int>(weights.cols()); }
};

struct Rig {
  GaussianCloud cloud;
  Skeleton skeleton;
  SkinningMatrix skinning;
  std::vector<std::string> joint_names;  // optional, empty or length m
};

// One animation frame: local joint rotations relative to rest, plus a
// root translation.
struct Pose {
  Vec3 root_translation = Vec3::Zero();
  std::vector<Quat> joint_rotations;

  static Pose identity(int joint_count);
};

// One invariant violation found by validate_rig. Violations are data, not
// failures; `index` points at the offending point/joint when meaningful.
struct Violation {
  std::string code;
  std::string message;
  int index = -1;
};

std::vector<Violation> validate_cloud(const GaussianCloud& cloud);
std::vector<Violation> validate_skeleton(const Skeleton& skeleton,
                                         std::optional<int> body_joint_count = {});
std::vector<Violation> validate_skinning(const SkinningMatrix& skinning);

// Checks every invariant of the rig (cloud, skeleton, skinning, cross
// dimensions). Empty result iff the rig is well formed.
std::vector<Violation> validate_rig(const Rig& rig,
                                    std::optional<int> body_joint_count = {});

void validate_pose(const Pose& pose, const Skeleton& skeleton);

}  // namespace gsrig
