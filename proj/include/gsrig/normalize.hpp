#pragma once

#include "gsrig/types.hpp"

namespace gsrig {

// Uniform scale + translation taking raw coordinates into the canonical
// box (apply: (x - center) * scale).
struct NormalizationTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
  Vec3 invert(const Vec3& p) const { return p / scale + center; }
  Mat3X apply(const Mat3X& pts) const;
  Mat3X invert(const Mat3X& pts) const;
};

// Euclidean length of the axis-aligned bounding-box diagonal. Throws
// EmptyInput on an empty set; a single point yields 0.
double bbox_diagonal(const Mat3X& points);

// Jointly recenters and rescales cloud + skeleton so the means' bounding
// box is centered at the origin with longest side 1. Gaussian scales pick
// up the same factor. Throws DegenerateBounds when the cloud has no
// spatial extent.
NormalizationTransform normalize_character(GaussianCloud& cloud, Skeleton& skeleton);

}  // namespace gsrig
