#include "gsrig/icp.hpp"
#include "gsrig/rng.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

using namespace gsrig;
using namespace gsrig::testing;

TEST_SUITE_BEGIN("icp");

TEST_CASE("umeyama recovers a known similarity exactly") {
  Rng rng(11);
  Mat3X src = random_points(rng, 40);
  SimilarityTransform gt;
  gt.scale = 1.7;
  gt.rotation = random_rotation(rng);
  gt.translation = Vec3(0.3, -1.2, 2.0);
  Mat3X tgt = gt.apply(src);

  auto t = umeyama_alignment(src, tgt);
  CHECK(t.scale == doctest::Approx(1.7).epsilon(1e-10));
  CHECK((t.apply(src) - tgt).cwiseAbs().maxCoeff() < 1e-10);
  // Rotation matches up to quaternion sign.
  CHECK(std::abs(std::abs(t.rotation.dot(gt.rotation)) - 1.0) < 1e-10);
}

TEST_CASE("umeyama rejects degenerate correspondence sets") {
  Mat3X line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) << i, 0, 0;  // collinear
  CHECK_THROWS_WITH_AS(umeyama_alignment(line, line),
                       doctest::Contains("DegenerateAlignment"), Error);
  Mat3X two = Mat3X::Zero(2, 3);
  CHECK_THROWS_AS(umeyama_alignment(two, two), Error);
}

TEST_CASE("similarity transform inverse composes to identity") {
  Rng rng(13);
  SimilarityTransform t;
  t.scale = 0.6;
  t.rotation = random_rotation(rng);
  t.translation = Vec3(1, 2, 3);
  Mat3X pts = random_points(rng, 10);
  Mat3X back = t.inverse().apply(t.apply(pts));
  CHECK((back - pts).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scaled icp: identical sets give identity and zero rms") {
  Rng rng(17);
  Mat3X pts = random_points(rng, 100);
  IcpParams params;
  params.trim_fraction = 0.0;
  auto res = scaled_icp(pts, pts, params);
  CHECK(res.rms < 1e-9);
  CHECK(res.transform.scale == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.transform.translation.norm() < 1e-9);
}

TEST_CASE("scaled icp recovers s=1.7 with a large rotation, rms < 1e-6") {
  Rng rng(19);
  Mat3X src = random_points(rng, 300);
  src.col(0) *= 2.0;   // anisotropy so the PCA axes are well defined
  src.col(2) *= 0.5;
  SimilarityTransform gt;
  gt.scale = 1.7;
  gt.rotation = Quat(Eigen::AngleAxisd(2.4, Vec3(1, 1, 0.3).normalized()));
  gt.translation = Vec3(-2, 0.5, 4);
  Mat3X tgt = gt.apply(src);

  IcpParams params;
  params.trim_fraction = 0.0;
  auto res = scaled_icp(src, tgt, params);
  CHECK(res.rms < 1e-6);
  CHECK(res.transform.scale == doctest::Approx(1.7).epsilon(1e-6));
  CHECK((res.transform.apply(src) - tgt).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("scaled icp with 20% outliers at distance 10, trim 0.25") {
  Rng rng(23);
  int n = 200;
  Mat3X src = random_points(rng, n);
  src.col(0) *= 2.0;
  src.col(2) *= 0.6;
  SimilarityTransform gt;
  gt.scale = 1.3;
  gt.rotation = Quat(Eigen::AngleAxisd(0.8, Vec3(0.2, 1, 0.1).normalized()));
  gt.translation = Vec3(0.7, -0.4, 1.1);
  Mat3X tgt = gt.apply(src);

  // Corrupt 20% of the source with far-away junk.
  int n_out = n / 5;
  for (int i = 0; i < n_out; ++i) {
    int idx = n - 1 - i;
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    src.row(idx) += (10.0 * dir.normalized()).transpose();
  }

  IcpParams params;
  params.trim_fraction = 0.25;
  auto res = scaled_icp(src, tgt, params);

  // Inlier residual after alignment.
  Mat3X moved = res.transform.apply(src);
  double sum = 0.0;
  for (int i = 0; i < n - n_out; ++i) sum += (moved.row(i) - tgt.row(i)).squaredNorm();
  double inlier_rms = std::sqrt(sum / (n - n_out));
  CHECK(inlier_rms < 1e-3);
}

TEST_CASE("transfer_labels with identity copies skinning verbatim") {
  Rng rng(29);
  Mat3X pts = random_points(rng, 20);
  GaussianCloud cloud = cloud_from_means(pts);
  Skeleton skel;
  skel.joints = Mat3X(2, 3);
  skel.joints << 0, 0, 0, 1, 0, 0;
  skel.parents = {kNoParent, 0};
  skel.groups = {JointGroup::Body, JointGroup::Body};
  SkinningMatrix sw;
  sw.weights = Eigen::MatrixXd(20, 2);
  for (int i = 0; i < 20; ++i) {
    double a = rng.uniform();
    sw.weights.row(i) << a, 1.0 - a;
  }

  auto rig = transfer_labels(pts, sw, skel, cloud, SimilarityTransform::identity());
  CHECK(rig.skinning.weights == sw.weights);
  CHECK(rig.skeleton.joints == skel.joints);
}

TEST_CASE("transfer_labels through a known transform matches true correspondents") {
  Rng rng(37);
  Mat3X pts = random_points(rng, 50);
  SimilarityTransform t;
  t.scale = 2.0;
  t.rotation = random_rotation(rng);
  t.translation = Vec3(5, 0, -1);
  GaussianCloud target = cloud_from_means(t.apply(pts));

  Skeleton skel;
  skel.joints = Mat3X::Zero(3, 3);
  skel.parents = {kNoParent, 0, 1};
  skel.groups = {JointGroup::Body, JointGroup::Body, JointGroup::Body};
  SkinningMatrix sw;
  sw.weights = Eigen::MatrixXd::Zero(50, 3);
  for (int i = 0; i < 50; ++i) sw.weights(i, i % 3) = 1.0;

  TransferReport report;
  auto rig = transfer_labels(pts, sw, skel, target, t, &report);
  CHECK(rig.skinning.weights == sw.weights);  // exact nearest hit per construction
  CHECK(report.max < 1e-9);
  CHECK(report.mean < 1e-9);
}

TEST_CASE("transfer_labels assigns far points their nearest row and reports it") {
  Mat3X pts(2, 3);
  pts << 0, 0, 0, 1, 0, 0;
  Skeleton skel;
  skel.joints = Mat3X::Zero(1, 3);
  skel.parents = {kNoParent};
  skel.groups = {JointGroup::Body};
  SkinningMatrix sw;
  sw.weights = Eigen::MatrixXd::Ones(2, 1);

  Mat3X far(1, 3);
  far << 100, 0, 0;
  GaussianCloud target = cloud_from_means(far);

  TransferReport report;
  auto rig = transfer_labels(pts, sw, skel, target, SimilarityTransform::identity(), &report);
  CHECK(rig.skinning.weights(0, 0) == 1.0);  // no hole
  CHECK(report.max == doctest::Approx(99.0));
  REQUIRE(report.distances.size() == 1);
  CHECK(report.distances[0] == doctest::Approx(99.0));
}

TEST_SUITE_END();
