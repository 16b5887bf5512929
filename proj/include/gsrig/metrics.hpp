#pragma once

#include "gsrig/types.hpp"

namespace gsrig {

// Skeleton / skinning evaluation metrics, RigNet-style. Chamfer variants
// are reported as percentages of the ground-truth cloud's bounding-box
// diagonal (pass that as `normalizer`).

// 0.5 * [mean_pred dist-to-nearest-gt + mean_gt dist-to-nearest-pred],
// as a percentage of normalizer.
double cd_j2j(const Mat3X& pred_joints, const Mat3X& gt_joints, double normalizer);

// Symmetric mean point-to-nearest-bone-segment distance: pred joints vs gt
// bones and gt joints vs pred bones. A skeleton without bones degenerates
// to its joints.
double cd_j2b(const Mat3X& pred_joints, const Skeleton& pred_skeleton,
              const Mat3X& gt_joints, const Skeleton& gt_skeleton, double normalizer);

// Chamfer between dense bone samplings (32 uniform samples per bone,
// endpoints included).
double cd_b2b(const Skeleton& pred_skeleton, const Skeleton& gt_skeleton, double normalizer);

struct JointMatchScores {
  double iou = 0.0;        // TP / (|pred| + |gt| - TP), in percent
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  int true_positives = 0;
};

// Maximum-cardinality one-to-one matching between pred and gt joints,
// restricted to pairs within tau = tau_frac * normalizer.
JointMatchScores joint_iou_pr(const Mat3X& pred_joints, const Mat3X& gt_joints,
                              double tau_frac, double normalizer);

struct SkinningScores {
  double precision = 0.0;  // percent, over (point, joint) influencing pairs
  double recall = 0.0;     // percent
};

// A (point, joint) pair is influencing iff its weight >= w_thresh.
SkinningScores skinning_pr(const SkinningMatrix& pred, const SkinningMatrix& gt,
                           double w_thresh);

// Mean over points of the L1 row difference; range [0, 2].
double skinning_avg_l1(const SkinningMatrix& pred, const SkinningMatrix& gt);

// Exact point-to-segment distance (used by the J2B/B2B metrics and tests).
double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

// Undirected bone-edge F1 between skeletons over the same joint index set.
double bone_edge_f1(const Skeleton& pred, const Skeleton& gt);

}  // namespace gsrig
