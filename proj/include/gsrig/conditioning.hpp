#pragma once

#include "gsrig/kdtree.hpp"
#include "gsrig/nn_blocks.hpp"
#include "gsrig/render.hpp"
#include "gsrig/types.hpp"

namespace gsrig {

// --------------------------------------------------------------------------
// Plain (non-differentiated) geometry helpers

// k-NN graph over the means, self included as the zero-distance neighbor.
// Throws TooFewPoints when N < k.
nn::IdxMat knn_graph(const Mat3X& means, int k);

// Positions minus the centroid; the centroid is accumulated
// order-independently so the result is exactly permutation-equivariant.
Mat3X centered_positions(const Mat3X& means);

// Inverse-distance interpolation plan for a set of query points over the
// means: indices and normalized weights of the k nearest means per query.
// A query within 1e-9 of a mean snaps to that mean's feature exactly.
struct InterpPlan {
  nn::IdxMat idx;        // m x k
  Eigen::MatrixXd w;     // m x k, rows sum to 1
};
InterpPlan make_interp_plan(const Mat3X& query, const KdTree& tree, int k);

// One-call form of the interpolation: weighted neighbor features per query.
Eigen::MatrixXd knn_interpolate(const Mat3X& query, const Mat3X& means,
                                const Eigen::MatrixXd& features, int k);

// Four canonical-view images, each area-downsampled to patch x patch and
// flattened row-major (y, x, channel) into one row, values in [0, 1].
// Throws BadViews unless exactly four equal square images divisible by patch.
Eigen::MatrixXd flatten_views(const std::vector<Image>& views, int patch = 16);

// Per-point appearance channels (scales, colors, opacity) for the encoder's
// optional aux input.
Eigen::MatrixXd cloud_aux_channels(const GaussianCloud& cloud);

// --------------------------------------------------------------------------
// Encoders

struct PointEncoderConfig {
  int k_graph = 16;
  int hidden = 64;
  int d_geo = 128;
  bool use_aux = false;  // feed Gaussian scale/color/opacity into edge features
};

struct ViewEncoderConfig {
  int d_app = 64;
  int patch = 16;
};

// Edge-convolution encoder: three stacked per-edge MLPs with max
// aggregation over each point's neighbors, then a per-point projection.
template <class S>
struct PointEncoder {
  PointEncoderConfig cfg;
  nn::Linear<S> e1, e2, e3, proj;

  static PointEncoder init(nn::ParamStore<S>& store, const PointEncoderConfig& cfg, Rng& rng) {
    PointEncoder p;
    p.cfg = cfg;
    int in1 = 6 + (cfg.use_aux ? 7 : 0);
    p.e1 = nn::Linear<S>::init(store, "penc.e1", in1, cfg.hidden, rng);
    p.e2 = nn::Linear<S>::init(store, "penc.e2", 2 * cfg.hidden, cfg.hidden, rng);
    p.e3 = nn::Linear<S>::init(store, "penc.e3", 2 * cfg.hidden, cfg.hidden, rng);
    p.proj = nn::Linear<S>::init(store, "penc.proj", cfg.hidden, cfg.d_geo, rng);
    return p;
  }

  // centered: N x 3 centered positions; graph: N x k neighbor indices;
  // aux: N x 7 attribute channels or empty.
  nn::Ref<S> forward(const nn::Mat<S>& centered, const nn::IdxMat& graph,
                     const nn::Mat<S>& aux) const {
    const int n = static_cast<int>(centered.rows());
    const int k = static_cast<int>(graph.cols());
    if (graph.rows() != n) throw Error("ShapeError", "point encoder: graph size mismatch");
    std::vector<int> flat(static_cast<size_t>(n) * static_cast<size_t>(k));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) flat[static_cast<size_t>(i) * k + j] = graph(i, j);

    auto edges_from = [&](nn::Ref<S> f, bool with_aux) {
      nn::Ref<S> fi = nn::repeat_rows(f, k);
      nn::Ref<S> fj = nn::gather_rows(f, flat);
      std::vector<nn::Ref<S>> parts{fi, nn::sub(fj, fi)};
      if (with_aux) parts.push_back(nn::repeat_rows(nn::constant<S>(aux), k));
      return nn::concat_cols(std::move(parts));
    };

    nn::Ref<S> x = nn::constant<S>(centered);
    nn::Ref<S> f1 = nn::block_max(nn::tanh_(e1(edges_from(x, cfg.use_aux))), n, k);
    nn::Ref<S> f2 = nn::block_max(nn::tanh_(e2(edges_from(f1, false))), n, k);
    nn::Ref<S> f3 = nn::block_max(nn::tanh_(e3(edges_from(f2, false))), n, k);
    return proj(f3);
  }
};

// Linear patch projection shared across the four views plus a learned
// per-view embedding.
template <class S>
struct ViewEncoder {
  ViewEncoderConfig cfg;
  nn::Linear<S> proj;
  nn::Ref<S> embed;

  static ViewEncoder init(nn::ParamStore<S>& store, const ViewEncoderConfig& cfg, Rng& rng) {
    ViewEncoder v;
    v.cfg = cfg;
    int in = cfg.patch * cfg.patch * 3;
    v.proj = nn::Linear<S>::init(store, "venc.proj", in, cfg.d_app, rng);
    v.embed = store.add("venc.embed", nn::dense_init<S>(rng, 4, cfg.d_app));
    return v;
  }

  // flat: 4 x (patch*patch*3) from flatten_views.
  nn::Ref<S> forward(const nn::Mat<S>& flat) const {
    return nn::add(proj(nn::constant<S>(flat)), embed);
  }
};

// Encoded condition for one character: geometry features per point plus the
// four appearance tokens. `means` stay alongside the features because kNN
// interpolation needs them at every consumer.
struct ConditionBundle {
  Mat3X means;                      // N x 3 (the encoder's input points)
  Eigen::MatrixXd point_features;   // N x d_geo
  Eigen::MatrixXd appearance;       // 4 x d_app
};

// --------------------------------------------------------------------------
// Shared encoder stack: every learned component conditions on the same pair
// of encoders, trained jointly with its head.

struct EncoderStackConfig {
  PointEncoderConfig point;
  ViewEncoderConfig view;
  int view_res = 64;  // canonical render resolution fed to flatten_views
};

// Checkpoint (de)serialization of the encoder configuration.
nlohmann::json encoder_cfg_to_json(const EncoderStackConfig& cfg);
EncoderStackConfig encoder_cfg_from_json(const nlohmann::json& j);

template <class S>
struct EncoderStack {
  EncoderStackConfig cfg;
  PointEncoder<S> point;
  ViewEncoder<S> view;

  static EncoderStack init(nn::ParamStore<S>& store, const EncoderStackConfig& cfg, Rng& rng) {
    EncoderStack e;
    e.cfg = cfg;
    e.point = PointEncoder<S>::init(store, cfg.point, rng);
    e.view = ViewEncoder<S>::init(store, cfg.view, rng);
    return e;
  }
};

// Precomputed per-sample encoder inputs (graph, centered positions, views).
struct EncoderInputs {
  Mat3X means;
  Mat3X centered;
  nn::IdxMat graph;
  Eigen::MatrixXd aux;         // N x 7 (always built; unused unless use_aux)
  Eigen::MatrixXd views_flat;  // 4 x patch^2*3
};

// Renders the canonical views and assembles all encoder inputs for a cloud.
EncoderInputs make_encoder_inputs(const GaussianCloud& cloud, const EncoderStackConfig& cfg);

// Deterministic random subset of at most max_points Gaussians (views should
// still be rendered from the full cloud). Returns the cloud unchanged when it
// is already small enough.
GaussianCloud subsample_cloud(const GaussianCloud& cloud, int max_points, uint64_t seed);

// Runs both encoders forward (building graph nodes) on prepared inputs.
template <class S>
struct EncodedCondition {
  nn::Ref<S> point_features;  // N x d_geo
  nn::Ref<S> appearance;      // 4 x d_app
};

template <class S>
EncodedCondition<S> encode_condition(const EncoderStack<S>& enc, const EncoderInputs& in) {
  EncodedCondition<S> out;
  out.point_features =
      enc.point.forward(in.centered.template cast<S>(), in.graph, in.aux.template cast<S>());
  out.appearance = enc.view.forward(in.views_flat.template cast<S>());
  return out;
}

// Plain-value condition for inference: encoder outputs widened to double.
template <class S>
ConditionBundle make_condition_bundle(const EncoderStack<S>& enc, const EncoderInputs& in) {
  EncodedCondition<S> c = encode_condition(enc, in);
  ConditionBundle b;
  b.means = in.means;
  b.point_features = c.point_features->value.template cast<double>();
  b.appearance = c.appearance->value.template cast<double>();
  return b;
}

}  // namespace gsrig
