#include "gsrig/metrics.hpp"
#include "gsrig/rng.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <vector>

using namespace gsrig;
using namespace gsrig::testing;

TEST_SUITE_BEGIN("metrics");

namespace {

// Independent O(|P||G|) Chamfer oracle.
double brute_chamfer_pct(const Mat3X& a, const Mat3X& b, double normalizer) {
  auto side = [](const Mat3X& from, const Mat3X& to) {
    double sum = 0.0;
    for (int i = 0; i < from.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < to.rows(); ++j)
        best = std::min(best, (from.row(i) - to.row(j)).norm());
      sum += best;
    }
    return sum / from.rows();
  };
  return 0.5 * (side(a, b) + side(b, a)) / normalizer * 100.0;
}

// Exhaustive maximum matching by recursion over gt joints with a pred
// usage bitmask; exact for <= 10 joints.
int brute_match_rec(const std::vector<std::vector<bool>>& ok, int j, unsigned used) {
  int ng = ok.empty() ? 0 : static_cast<int>(ok[0].size());
  if (j >= ng) return 0;
  int best = brute_match_rec(ok, j + 1, used);  // leave gt j unmatched
  for (int i = 0; i < static_cast<int>(ok.size()); ++i)
    if (!(used & (1u << i)) && ok[static_cast<size_t>(i)][static_cast<size_t>(j)])
      best = std::max(best, 1 + brute_match_rec(ok, j + 1, used | (1u << i)));
  return best;
}

int brute_max_matching(const std::vector<std::vector<bool>>& ok) {
  return brute_match_rec(ok, 0, 0u);
}

Skeleton chain_skeleton(const Mat3X& joints) {
  Skeleton s;
  s.joints = joints;
  s.parents.assign(static_cast<size_t>(joints.rows()), 0);
  s.parents[0] = kNoParent;
  for (int i = 1; i < joints.rows(); ++i) s.parents[static_cast<size_t>(i)] = i - 1;
  s.groups.assign(static_cast<size_t>(joints.rows()), JointGroup::Body);
  return s;
}

}  // namespace

TEST_CASE("cd_j2j basics") {
  Mat3X a(2, 3);
  a << 0, 0, 0, 1, 1, 1;
  CHECK(cd_j2j(a, a, 1.0) == 0.0);

  Mat3X pred(1, 3), gt(1, 3);
  pred << 0, 0, 0;
  gt << 1, 0, 0;
  // 0.5*(1+1)/10 * 100 = 10.
  CHECK(cd_j2j(pred, gt, 10.0) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("cd_j2j matches the brute-force oracle on random sets") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    Rng r = rng.split(static_cast<uint64_t>(trial));
    int np = 1 + static_cast<int>(r.uniform_index(20));
    int ng = 1 + static_cast<int>(r.uniform_index(20));
    Mat3X p = random_points(r, np), g = random_points(r, ng);
    double norm = 0.5 + r.uniform();
    CHECK(cd_j2j(p, g, norm) ==
          doctest::Approx(brute_chamfer_pct(p, g, norm)).epsilon(1e-10));
  }
}

TEST_CASE("point_segment_distance clamps to the segment") {
  CHECK(point_segment_distance({1, 1, 0}, {0, 0, 0}, {2, 0, 0}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(point_segment_distance({-1, 0, 0}, {0, 0, 0}, {2, 0, 0}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(point_segment_distance({3, 4, 0}, {1, 0, 0}, {1, 0, 0}) ==
        doctest::Approx(std::sqrt(4.0 + 16.0)).epsilon(1e-12));
}

TEST_CASE("cd_j2b and cd_b2b vanish on identical skeletons") {
  Mat3X joints(3, 3);
  joints << 0, 0, 0, 1, 0, 0, 1, 1, 0;
  Skeleton s = chain_skeleton(joints);
  CHECK(cd_j2b(joints, s, joints, s, 1.0) == 0.0);
  CHECK(cd_b2b(s, s, 1.0) == 0.0);
}

TEST_CASE("cd_j2b single-bone example") {
  Mat3X gt_joints(2, 3);
  gt_joints << 0, 0, 0, 2, 0, 0;
  Skeleton gt = chain_skeleton(gt_joints);
  Mat3X pred_joints(1, 3);
  pred_joints << 1, 1, 0;
  Skeleton pred = chain_skeleton(pred_joints);

  // pred joint (1,1,0) sits at distance 1 from the gt bone; both gt joints
  // sit at distance sqrt(2) from the single pred "joint skeleton".
  double expect = 0.5 * (1.0 + std::sqrt(2.0)) / 1.0 * 100.0;
  CHECK(cd_j2b(pred_joints, pred, gt_joints, gt, 1.0) ==
        doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("cd_b2b matches all-pairs sampled oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    Rng r = rng.split(static_cast<uint64_t>(trial));
    Skeleton a = chain_skeleton(random_points(r, 4));
    Skeleton b = chain_skeleton(random_points(r, 5));

    auto samples = [](const Skeleton& s) {
      std::vector<Vec3> out;
      for (auto [p, c] : s.bones())
        for (int k = 0; k < 32; ++k) {
          double t = static_cast<double>(k) / 31.0;
          out.push_back(s.joints.row(p).transpose() * (1.0 - t) +
                        s.joints.row(c).transpose() * t);
        }
      return out;
    };
    auto sa = samples(a), sb = samples(b);
    auto side = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
      double sum = 0.0;
      for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) best = std::min(best, (p - q).norm());
        sum += best;
      }
      return sum / static_cast<double>(from.size());
    };
    double expect = 0.5 * (side(sa, sb) + side(sb, sa)) * 100.0;
    CHECK(cd_b2b(a, b, 1.0) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("joint IoU/precision/recall on identical sets") {
  Rng rng(5);
  Mat3X joints = random_points(rng, 6);
  auto s = joint_iou_pr(joints, joints, 0.05, 1.0);
  CHECK(s.iou == doctest::Approx(100.0));
  CHECK(s.precision == doctest::Approx(100.0));
  CHECK(s.recall == doctest::Approx(100.0));
  CHECK(s.true_positives == 6);
}

TEST_CASE("joint IoU/precision/recall with one spurious prediction") {
  Rng rng(6);
  Mat3X gt = random_points(rng, 5);
  Mat3X pred(6, 3);
  pred.topRows(5) = gt;
  pred.row(5) << 50, 50, 50;
  auto s = joint_iou_pr(pred, gt, 0.05, 1.0);
  CHECK(s.true_positives == 5);
  CHECK(s.precision == doctest::Approx(100.0 * 5.0 / 6.0));
  CHECK(s.recall == doctest::Approx(100.0));
  CHECK(s.iou == doctest::Approx(100.0 * 5.0 / 6.0));
}

TEST_CASE("joint matching equals the exhaustive oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    Rng r = rng.split(static_cast<uint64_t>(trial));
    int np = 1 + static_cast<int>(r.uniform_index(6));
    int ng = 1 + static_cast<int>(r.uniform_index(6));
    // Cramped range so the tau ball actually creates contested pairs.
    Mat3X p = random_points(r, np, 0.0, 0.3), g = random_points(r, ng, 0.0, 0.3);
    double tau_frac = 0.2, norm = 1.0;

    std::vector<std::vector<bool>> ok(static_cast<size_t>(np),
                                      std::vector<bool>(static_cast<size_t>(ng)));
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < ng; ++j)
        ok[static_cast<size_t>(i)][static_cast<size_t>(j)] =
            (p.row(i) - g.row(j)).norm() <= tau_frac * norm;

    auto s = joint_iou_pr(p, g, tau_frac, norm);
    CHECK(s.true_positives == brute_max_matching(ok));
  }
}

TEST_CASE("skinning precision/recall and L1") {
  SkinningMatrix a, b;
  a.weights = Eigen::MatrixXd(2, 2);
  a.weights << 1, 0, 0.75, 0.25;
  b.weights = a.weights;
  auto s = skinning_pr(a, b, 1e-2);
  CHECK(s.precision == doctest::Approx(100.0));
  CHECK(s.recall == doctest::Approx(100.0));
  CHECK(skinning_avg_l1(a, b) == 0.0);

  SkinningMatrix p, g;
  p.weights = Eigen::MatrixXd(1, 2);
  g.weights = Eigen::MatrixXd(1, 2);
  p.weights << 1, 0;
  g.weights << 0, 1;
  CHECK(skinning_avg_l1(p, g) == doctest::Approx(2.0));

  p.weights << 0.75, 0.25;
  g.weights << 0.5, 0.5;
  // |0.75-0.5| + |0.25-0.5| = 0.5.
  CHECK(skinning_avg_l1(p, g) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("skinning precision/recall counts influencing pairs") {
  SkinningMatrix pred, gt;
  pred.weights = Eigen::MatrixXd(1, 3);
  gt.weights = Eigen::MatrixXd(1, 3);
  pred.weights << 0.5, 0.5, 0.0;
  gt.weights << 1.0, 0.0, 0.0;
  auto s = skinning_pr(pred, gt, 1e-2);
  // pred influencers {0,1}, gt influencers {0}: precision 1/2, recall 1/1.
  CHECK(s.precision == doctest::Approx(50.0));
  CHECK(s.recall == doctest::Approx(100.0));
}

TEST_CASE("bone edge F1") {
  Mat3X joints(4, 3);
  joints << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  Skeleton gt = chain_skeleton(joints);
  CHECK(bone_edge_f1(gt, gt) == doctest::Approx(1.0));

  Skeleton pred = gt;
  pred.parents = {kNoParent, 0, 1, 1};  // one edge differs: (2,3) -> (1,3)
  // Shared edges {0-1, 1-2}: precision 2/3, recall 2/3, F1 = 2/3.
  CHECK(bone_edge_f1(pred, gt) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_SUITE_END();
