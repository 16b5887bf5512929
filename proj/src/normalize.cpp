#include "gsrig/normalize.hpp"

namespace gsrig {

Mat3X NormalizationTransform::apply(const Mat3X& pts) const {
  return (pts.rowwise() - center.transpose()) * scale;
}

Mat3X NormalizationTransform::invert(const Mat3X& pts) const {
  return (pts / scale).rowwise() + center.transpose();
}

double bbox_diagonal(const Mat3X& points) {
  if (points.rows() < 1) throw Error("EmptyInput", "bbox_diagonal of empty set");
  Vec3 lo = points.colwise().minCoeff();
  Vec3 hi = points.colwise().maxCoeff();
  return (hi - lo).norm();
}

NormalizationTransform normalize_character(GaussianCloud& cloud, Skeleton& skeleton) {
  if (cloud.size() < 1) throw Error("EmptyInput", "cannot normalize an empty cloud");
  Vec3 lo = cloud.means.colwise().minCoeff();
  Vec3 hi = cloud.means.colwise().maxCoeff();
  double longest = (hi - lo).maxCoeff();
  if (!(longest > 1e-12)) throw Error("DegenerateBounds", "cloud has no spatial extent");

  NormalizationTransform t;
  t.center = 0.5 * (lo + hi);
  t.scale = 1.0 / longest;

  cloud.means = t.apply(cloud.means);
  cloud.scales *= t.scale;
  skeleton.joints = t.apply(skeleton.joints);
  return t;
}

}  // namespace gsrig
