#include "gsrig/metrics.hpp"

#include "gsrig/kdtree.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <set>

namespace gsrig {

namespace {

constexpr int kBoneSamples = 32;

double mean_nn_distance(const Mat3X& from, const Mat3X& to) {
  KdTree tree(to);
  double sum = 0.0;
  for (int i = 0; i < from.rows(); ++i) {
    int j = tree.nearest(from.row(i).transpose());
    sum += (from.row(i) - to.row(j)).norm();
  }
  return sum / static_cast<double>(from.rows());
}

double mean_segment_distance(const Mat3X& points, const Skeleton& skeleton) {
  auto bones = skeleton.bones();
  double sum = 0.0;
  for (int i = 0; i < points.rows(); ++i) {
    Vec3 p = points.row(i).transpose();
    double best = std::numeric_limits<double>::infinity();
    if (bones.empty()) {
      for (int j = 0; j < skeleton.size(); ++j)
        best = std::min(best, (p - skeleton.joints.row(j).transpose()).norm());
    } else {
      for (const auto& [a, b] : bones)
        best = std::min(best, point_segment_distance(p, skeleton.joints.row(a).transpose(),
                                                     skeleton.joints.row(b).transpose()));
    }
    sum += best;
  }
  return sum / static_cast<double>(points.rows());
}

Mat3X sample_bones(const Skeleton& skeleton) {
  auto bones = skeleton.bones();
  if (bones.empty()) return skeleton.joints;
  Mat3X out(static_cast<int>(bones.size()) * kBoneSamples, 3);
  int row = 0;
  for (const auto& [a, b] : bones) {
    Vec3 pa = skeleton.joints.row(a).transpose();
    Vec3 pb = skeleton.joints.row(b).transpose();
    for (int s = 0; s < kBoneSamples; ++s) {
      double t = static_cast<double>(s) / (kBoneSamples - 1);
      out.row(row++) = ((1.0 - t) * pa + t * pb).transpose();
    }
  }
  return out;
}

void check_normalizer(double normalizer) {
  if (!(normalizer > 0.0)) throw Error("BadNormalizer", "normalizer must be > 0");
}

// Kuhn's augmenting-path maximum bipartite matching on the thresholded
// distance graph. Rows scanned in index order: deterministic.
int max_matching(const std::vector<std::vector<int>>& adj, int right_size,
                 std::vector<int>* right_match_out = nullptr) {
  std::vector<int> right_match(static_cast<size_t>(right_size), -1);
  std::vector<char> visited;
  std::function<bool(int)> try_augment = [&](int u) -> bool {
    for (int v : adj[static_cast<size_t>(u)]) {
      if (visited[static_cast<size_t>(v)]) continue;
      visited[static_cast<size_t>(v)] = 1;
      if (right_match[static_cast<size_t>(v)] < 0 ||
          try_augment(right_match[static_cast<size_t>(v)])) {
        right_match[static_cast<size_t>(v)] = u;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (int u = 0; u < static_cast<int>(adj.size()); ++u) {
    visited.assign(static_cast<size_t>(right_size), 0);
    if (try_augment(u)) ++matched;
  }
  if (right_match_out) *right_match_out = std::move(right_match);
  return matched;
}

}  // namespace

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double cd_j2j(const Mat3X& pred_joints, const Mat3X& gt_joints, double normalizer) {
  if (pred_joints.rows() < 1 || gt_joints.rows() < 1)
    throw Error("EmptyInput", "cd_j2j needs nonempty joint sets");
  check_normalizer(normalizer);
  double d = 0.5 * (mean_nn_distance(pred_joints, gt_joints) +
                    mean_nn_distance(gt_joints, pred_joints));
  return d / normalizer * 100.0;
}

double cd_j2b(const Mat3X& pred_joints, const Skeleton& pred_skeleton,
              const Mat3X& gt_joints, const Skeleton& gt_skeleton, double normalizer) {
  if (pred_joints.rows() < 1 || gt_joints.rows() < 1)
    throw Error("EmptyInput", "cd_j2b needs nonempty joint sets");
  check_normalizer(normalizer);
  double d = 0.5 * (mean_segment_distance(pred_joints, gt_skeleton) +
                    mean_segment_distance(gt_joints, pred_skeleton));
  return d / normalizer * 100.0;
}

double cd_b2b(const Skeleton& pred_skeleton, const Skeleton& gt_skeleton, double normalizer) {
  check_normalizer(normalizer);
  Mat3X pred_samples = sample_bones(pred_skeleton);
  Mat3X gt_samples = sample_bones(gt_skeleton);
  double d = 0.5 * (mean_nn_distance(pred_samples, gt_samples) +
                    mean_nn_distance(gt_samples, pred_samples));
  return d / normalizer * 100.0;
}

JointMatchScores joint_iou_pr(const Mat3X& pred_joints, const Mat3X& gt_joints,
                              double tau_frac, double normalizer) {
  check_normalizer(normalizer);
  const double tau = tau_frac * normalizer;
  const int np = static_cast<int>(pred_joints.rows());
  const int ng = static_cast<int>(gt_joints.rows());
  std::vector<std::vector<int>> adj(static_cast<size_t>(np));
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < ng; ++j)
      if ((pred_joints.row(i) - gt_joints.row(j)).norm() <= tau)
        adj[static_cast<size_t>(i)].push_back(j);

  JointMatchScores scores;
  scores.true_positives = max_matching(adj, ng);
  if (np > 0) scores.precision = 100.0 * scores.true_positives / np;
  if (ng > 0) scores.recall = 100.0 * scores.true_positives / ng;
  int uni = np + ng - scores.true_positives;
  if (uni > 0) scores.iou = 100.0 * scores.true_positives / uni;
  return scores;
}

SkinningScores skinning_pr(const SkinningMatrix& pred, const SkinningMatrix& gt,
                           double w_thresh) {
  if (pred.points() != gt.points() || pred.joints() != gt.joints())
    throw Error("ShapeError", "skinning matrices must have the same shape");
  long tp = 0, pred_pos = 0, gt_pos = 0;
  for (int i = 0; i < pred.points(); ++i) {
    for (int j = 0; j < pred.joints(); ++j) {
      bool p = pred.weights(i, j) >= w_thresh;
      bool g = gt.weights(i, j) >= w_thresh;
      tp += p && g;
      pred_pos += p;
      gt_pos += g;
    }
  }
  SkinningScores s;
  if (pred_pos > 0) s.precision = 100.0 * static_cast<double>(tp) / pred_pos;
  if (gt_pos > 0) s.recall = 100.0 * static_cast<double>(tp) / gt_pos;
  return s;
}

double skinning_avg_l1(const SkinningMatrix& pred, const SkinningMatrix& gt) {
  if (pred.points() != gt.points() || pred.joints() != gt.joints())
    throw Error("ShapeError", "skinning matrices must have the same shape");
  return (pred.weights - gt.weights).cwiseAbs().rowwise().sum().mean();
}

double bone_edge_f1(const Skeleton& pred, const Skeleton& gt) {
  auto edge_set = [](const Skeleton& s) {
    std::set<std::pair<int, int>> edges;
    for (const auto& [a, b] : s.bones()) edges.insert({std::min(a, b), std::max(a, b)});
    return edges;
  };
  auto pe = edge_set(pred);
  auto ge = edge_set(gt);
  if (pe.empty() && ge.empty()) return 1.0;
  int tp = 0;
  for (const auto& e : pe) tp += ge.count(e);
  double precision = pe.empty() ? 0.0 : static_cast<double>(tp) / pe.size();
  double recall = ge.empty() ? 0.0 : static_cast<double>(tp) / ge.size();
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace gsrig
