#pragma once

#include "gsrig/conditioning.hpp"
#include "gsrig/gsdiff.hpp"

namespace gsrig {

// Per-cloud-point bone-direction field: the vector from the point's nearest
// joint to that joint's parent (zero at points owned by the root).
struct BoneFlowField {
  Mat3X vectors;  // N x 3
};

BoneFlowField boneflow_gt(const GaussianCloud& cloud, const Skeleton& skeleton);
BoneFlowField boneflow_gt(const Mat3X& means, const Skeleton& skeleton);

// --------------------------------------------------------------------------
// Flow regression loss: mean over points of (1 - cos(pred, gt)) + 0.1 |pred -
// gt|^2, where exactly-zero targets contribute the L2 term only. The cosine
// denominator is softened so the gradient stays finite at pred = 0.
template <class S>
nn::Ref<S> boneflow_loss(nn::Ref<S> pred, const nn::Mat<S>& target) {
  if (pred->cols() != 3 || target.rows() != pred->rows() || target.cols() != 3)
    throw Error("ShapeError", "boneflow_loss: predictions and targets must be Nx3");
  const int n = pred->rows();
  if (n == 0) throw Error("ShapeError", "boneflow_loss: empty input");
  const S eps = S(1e-8);

  S total = S(0);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVector3<S> p = pred->value.row(i);
    Eigen::RowVector3<S> g = target.row(i);
    S l2 = (p - g).squaredNorm();
    total += S(0.1) * l2;
    S gn = g.norm();
    if (gn >= S(1e-12)) {
      S np = std::sqrt(p.squaredNorm() + eps * eps);
      total += S(1) - p.dot(g) / (np * gn);
    }
  }
  auto node = nn::detail::make_node<S>(nn::Mat<S>::Constant(1, 1, total / S(n)), {pred});
  node->backward = [target, eps](nn::Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const int nn_ = static_cast<int>(target.rows());
    const S g0 = self.grad(0, 0) / S(nn_);
    nn::Mat<S> grad(nn_, 3);
    for (int i = 0; i < nn_; ++i) {
      Eigen::RowVector3<S> p = in.value.row(i);
      Eigen::RowVector3<S> g = target.row(i);
      Eigen::RowVector3<S> d = S(0.2) * (p - g);
      S gn = g.norm();
      if (gn >= S(1e-12)) {
        S np2 = p.squaredNorm() + eps * eps;
        S np = std::sqrt(np2);
        // d/dp [ -p.g / (np gn) ] = -g/(np gn) + p (p.g)/(np^3 gn)
        d += -g / (np * gn) + p * (p.dot(g) / (np2 * np * gn));
      }
      grad.row(i) = d * g0;
    }
    nn::detail::accum(in, grad);
  };
  return node;
}

// --------------------------------------------------------------------------
// Learned flow prediction: per-point 3-vector head on the shared encoders.

struct BoneFlowTrainConfig {
  int steps = 500;
  int batch = 4;
  double lr = 1e-3;
  uint64_t seed = 0;
  int max_points = 256;
  int hidden = 64;
  EncoderStackConfig enc;
};

template <class S>
struct BoneFlowModel {
  EncoderStackConfig enc_cfg;
  nn::ParamStore<S> store;
  EncoderStack<S> enc;
  nn::Mlp<S> head;  // [point features | pooled appearance] -> flow vector

  static BoneFlowModel init(const EncoderStackConfig& enc_cfg, int hidden, uint64_t seed) {
    BoneFlowModel m;
    m.enc_cfg = enc_cfg;
    Rng rng(seed);
    m.enc = EncoderStack<S>::init(m.store, enc_cfg, rng);
    m.head = nn::Mlp<S>::init(m.store, "flow.head", enc_cfg.point.d_geo + enc_cfg.view.d_app,
                              hidden, 3, rng);
    return m;
  }

  nn::Ref<S> forward(const EncoderInputs& in) const {
    auto ec = encode_condition(enc, in);
    nn::Ref<S> pooled = nn::sorted_mean_rows(ec.appearance);
    nn::Ref<S> head_in = nn::concat_cols(std::vector<nn::Ref<S>>{
        ec.point_features,
        nn::repeat_rows(pooled, static_cast<int>(in.means.rows()))});
    return head(head_in);
  }
};

// One training sample: encoder inputs plus the flow target per input point.
struct BoneFlowSample {
  EncoderInputs inputs;
  Mat3X targets;
};

std::vector<BoneFlowSample> prepare_boneflow_samples(const std::vector<CharacterSample>& chars,
                                                     const EncoderStackConfig& enc_cfg,
                                                     int max_points, uint64_t seed);

GsdiffTrainResult train_boneflow(const std::vector<CharacterSample>& dataset,
                                 const BoneFlowTrainConfig& cfg,
                                 const std::string& checkpoint_path);

BoneFlowModel<float> load_boneflow_model(const std::string& checkpoint_path);

// Flow field for the encoder inputs' points.
BoneFlowField predict_boneflow(const BoneFlowModel<float>& model, const EncoderInputs& inputs);

// --------------------------------------------------------------------------
// MST bone connection

struct ConnectParams {
  double lambda_flow = 1.0;  // weight of the flow-alignment penalty
  int segment_samples = 8;   // interior sample points per candidate bone
  int k_f = 4;               // flow vectors polled around each sample point
  int root_override = -1;    // >= 0 forces the root joint
  double tau_body = 0.1;     // template-distance threshold for the body tag
  const Mat3X* body_template = nullptr;  // optional body-joint hint
};

// Complete-graph edge costs |j_a - j_b| (1 + lambda (1 - |align|)); exactly
// symmetric, zero diagonal.
Eigen::MatrixXd bone_cost_matrix(const Mat3X& joints, const BoneFlowField& flow,
                                 const Mat3X& means, const ConnectParams& params = {});

// Minimum spanning tree over the cost matrix, rooted at the joint closest on
// average to the cloud (or the override). Throws EmptyInput when no joints.
Skeleton connect_bones(const Mat3X& joints, const BoneFlowField& flow, const Mat3X& means,
                       const ConnectParams& params = {});

}  // namespace gsrig
