#pragma once

#include "gsrig/types.hpp"

namespace gsrig {

// Similarity transform p -> scale * R * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }
  Mat3X apply(const Mat3X& pts) const;
  SimilarityTransform inverse() const;
  static SimilarityTransform identity() { return {}; }
};

struct IcpParams {
  int max_iters = 50;
  double trim_fraction = 0.1;  // in [0, 0.5)
  double tol = 1e-7;           // stop when trimmed RMS improves by less
};

struct IcpResult {
  SimilarityTransform transform;
  double rms = 0.0;  // final trimmed RMS
  int iterations = 0;
};

// Closed-form similarity alignment (Umeyama): SVD of the cross-covariance,
// scale from the variance ratio. Throws DegenerateAlignment when the
// correspondence set is rank deficient.
SimilarityTransform umeyama_alignment(const Mat3X& source, const Mat3X& target);

// Trimmed scaled ICP aligning source onto target. Each iteration finds
// nearest-neighbor correspondences, drops the trim_fraction worst pairs,
// and solves the closed form on the rest. Initialization tries the PCA
// axis alignments of the two sets and keeps the best, so large rotations
// are recovered without a user-supplied guess.
IcpResult scaled_icp(const Mat3X& source, const Mat3X& target, const IcpParams& params = {});

// Per-target-point transfer distances, for reporting coverage of the
// label transfer.
struct TransferReport {
  std::vector<double> distances;  // one per target point
  double mean = 0.0;
  double max = 0.0;
};

// Maps the source skeleton through T and copies each target point's
// skinning row from its nearest transformed source point.
Rig transfer_labels(const Mat3X& source_points, const SkinningMatrix& source_skinning,
                    const Skeleton& source_skeleton, const GaussianCloud& target,
                    const SimilarityTransform& T, TransferReport* report = nullptr);

}  // namespace gsrig
