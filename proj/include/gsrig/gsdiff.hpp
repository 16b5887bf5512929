#pragma once

#include "gsrig/conditioning.hpp"
#include "gsrig/synthetic.hpp"

#include <optional>

namespace gsrig {

// --------------------------------------------------------------------------
// Noise schedule and forward process

struct NoiseSchedule {
  int T = 0;
  Eigen::VectorXd betas;       // strictly increasing, in (0,1)
  Eigen::VectorXd alphas;      // 1 - betas
  Eigen::VectorXd alpha_bars;  // running product, decreasing
};

// Linear beta ramp from beta_min to beta_max over T steps.
// Throws InvalidSchedule unless 0 < beta_min < beta_max < 1 and T >= 2.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

// Closed-form forward corruption: sqrt(ab_t) J0 + sqrt(1-ab_t) noise.
// Throws BadStep when t is outside [0, T).
Mat3X diffuse(const Mat3X& J0, int t, const Mat3X& noise, const NoiseSchedule& sched);

// Inverts diffuse given the noise: exact recovery of J0 up to rounding.
Mat3X predict_x0(const Mat3X& Jt, int t, const Mat3X& eps, const NoiseSchedule& sched);

// Ascending timestep subsequence used for strided sampling: `steps` values
// from 0 to T-1 inclusive, evenly spaced, deduplicated.
std::vector<int> respaced_steps(int T, int steps);

// --------------------------------------------------------------------------
// Model configuration

struct JointGroupConfig {
  JointGroup group = JointGroup::Other;
  int fixed_count = -1;  // body: template joint count; < 0 means count head
  int max_count = 16;    // count head classes cover {1..max_count}
};

struct DenoiserConfig {
  int d_model = 128;
  int heads = 4;
  int layers = 4;
  int d_ff = 0;  // 0 -> 2 * d_model
  int k_interp = 8;
  // Condition switches, each independently removable for ablations: local
  // per-joint interpolated geometry, the global pooled geometry token, and
  // the four appearance tokens. Switched-off paths have no parameters.
  bool use_local = true;
  bool use_global = true;
  bool use_image = true;
};

// --------------------------------------------------------------------------
// Set-attention denoiser

// Joint tokens = projected positions + timestep embedding (+ interpolated
// local geometry); condition tokens = appearance tokens and a pooled
// geometry token, attended to via cross-attention in every block.
template <class S>
struct Denoiser {
  DenoiserConfig cfg;
  JointGroupConfig group;
  int t_rows = 0;
  nn::Linear<S> proj_in, proj_geo, proj_global, proj_app, out_proj;
  nn::Ref<S> t_embed;
  std::vector<nn::TransformerBlock<S>> blocks;
  nn::LayerNorm<S> out_ln;
  nn::Mlp<S> count_head;

  bool has_cross() const { return cfg.use_global || cfg.use_image; }
  bool has_count() const { return group.fixed_count < 0; }

  static Denoiser init(nn::ParamStore<S>& store, const DenoiserConfig& cfg,
                       const JointGroupConfig& group, int T, int d_geo, int d_app, Rng& rng) {
    if (cfg.d_model < 1 || cfg.layers < 1 || T < 2)
      throw Error("ShapeError", "denoiser: bad dimensions");
    Denoiser d;
    d.cfg = cfg;
    if (d.cfg.d_ff <= 0) d.cfg.d_ff = 2 * cfg.d_model;
    d.group = group;
    d.t_rows = T;
    d.proj_in = nn::Linear<S>::init(store, "gsd.in", 3, cfg.d_model, rng);
    d.t_embed = store.add("gsd.temb", nn::dense_init<S>(rng, T, cfg.d_model));
    if (cfg.use_local) d.proj_geo = nn::Linear<S>::init(store, "gsd.geo", d_geo, cfg.d_model, rng);
    if (cfg.use_global)
      d.proj_global = nn::Linear<S>::init(store, "gsd.glob", d_geo, cfg.d_model, rng);
    if (cfg.use_image) d.proj_app = nn::Linear<S>::init(store, "gsd.app", d_app, cfg.d_model, rng);
    for (int l = 0; l < cfg.layers; ++l)
      d.blocks.push_back(nn::TransformerBlock<S>::init(store, "gsd.b" + std::to_string(l),
                                                       cfg.d_model, cfg.heads, d.cfg.d_ff,
                                                       d.has_cross(), rng));
    d.out_ln = nn::LayerNorm<S>::init(store, "gsd.oln", cfg.d_model);
    d.out_proj = nn::Linear<S>::init(store, "gsd.out", cfg.d_model, 3, rng);
    if (d.has_count())
      d.count_head = nn::Mlp<S>::init(store, "gsd.cnt", cfg.d_model, cfg.d_model,
                                      group.max_count, rng);
    return d;
  }

  // Condition token stack (empty Ref when every condition source is off).
  nn::Ref<S> cond_tokens(nn::Ref<S> point_features, nn::Ref<S> appearance) const {
    std::vector<nn::Ref<S>> parts;
    if (cfg.use_image) parts.push_back(proj_app(appearance));
    if (cfg.use_global) parts.push_back(proj_global(nn::sorted_mean_rows(point_features)));
    if (parts.empty()) return nullptr;
    return parts.size() == 1 ? parts[0] : nn::concat_rows(std::move(parts));
  }

  struct Out {
    nn::Ref<S> eps_hat;       // m x 3
    nn::Ref<S> count_logits;  // 1 x max_count, null when the count is fixed
  };

  // tree must index the condition means that point_features describe. Jt rows
  // are the current joint positions, treated as constants (epsilon prediction).
  Out forward(const Mat3X& Jt, int t, const KdTree& tree, nn::Ref<S> point_features,
              nn::Ref<S> appearance) const {
    if (Jt.rows() < 1) throw Error("ShapeError", "denoiser: need at least one joint");
    if (t < 0 || t >= t_rows) throw Error("BadStep", "denoiser: timestep out of range");
    nn::Ref<S> x = proj_in(nn::constant<S>(Jt.cast<S>()));
    x = nn::add_row(x, nn::gather_rows(t_embed, std::vector<int>{t}));
    if (cfg.use_local) {
      InterpPlan plan = make_interp_plan(Jt, tree, cfg.k_interp);
      nn::Ref<S> local = nn::const_weighted_rows(point_features, plan.idx,
                                                 nn::Mat<S>(plan.w.cast<S>()));
      x = nn::add(x, proj_geo(local));
    }
    nn::Ref<S> cond = cond_tokens(point_features, appearance);
    for (const auto& b : blocks) x = b(x, cond);

    Out out;
    out.eps_hat = out_proj(out_ln(x));
    if (has_count()) {
      nn::Ref<S> pooled = cond ? nn::sorted_mean_rows(cond)
                               : nn::constant<S>(nn::Mat<S>::Zero(1, cfg.d_model));
      out.count_logits = count_head(pooled);
    }
    return out;
  }
};

// --------------------------------------------------------------------------
// Full model: encoders + denoiser + schedule under one parameter store

template <class S>
struct GsdiffModel {
  JointGroupConfig group;
  DenoiserConfig den_cfg;
  EncoderStackConfig enc_cfg;
  NoiseSchedule sched;
  int sample_steps = 100;  // default reverse steps when the caller names none
  nn::ParamStore<S> store;
  EncoderStack<S> enc;
  Denoiser<S> den;

  static GsdiffModel init(const JointGroupConfig& group, const DenoiserConfig& den_cfg,
                          const EncoderStackConfig& enc_cfg, const NoiseSchedule& sched,
                          uint64_t seed) {
    if (group.fixed_count < 0 && group.max_count < 1)
      throw Error("ShapeError", "gsdiff: max_count must be >= 1");
    if (group.group == JointGroup::Body && group.fixed_count < 1)
      throw Error("ShapeError", "gsdiff: body group requires a fixed count");
    GsdiffModel m;
    m.group = group;
    m.den_cfg = den_cfg;
    m.enc_cfg = enc_cfg;
    m.sched = sched;
    Rng rng(seed);
    m.enc = EncoderStack<S>::init(m.store, enc_cfg, rng);
    m.den = Denoiser<S>::init(m.store, den_cfg, group, sched.T, enc_cfg.point.d_geo,
                              enc_cfg.view.d_app, rng);
    m.den_cfg = m.den.cfg;  // pick up the resolved d_ff
    return m;
  }
};

// Plain-value forward for inference and tests.
struct DenoiserEval {
  Mat3X eps_hat;
  Eigen::VectorXd count_logits;  // empty when the count is fixed
};
DenoiserEval denoiser_forward(const GsdiffModel<float>& model, const Mat3X& Jt, int t,
                              const ConditionBundle& cond);

// Count-head logits for a condition (independent of any joint positions).
Eigen::VectorXd predict_count_logits(const GsdiffModel<float>& model, const ConditionBundle& cond);

// --------------------------------------------------------------------------
// Dataset preparation

// One training sample: precomputed encoder inputs plus the target joints of
// the configured group.
struct JointSample {
  EncoderInputs inputs;
  Mat3X joints;
};

enum class JointFilter { Body, Other, All };

// Extracts each character's target joints and encoder inputs. The point
// encoder sees at most max_points means (seeded subsample); the canonical
// views always render from the full cloud. Characters with no joints in the
// filtered group are skipped.
std::vector<JointSample> prepare_joint_samples(const std::vector<CharacterSample>& chars,
                                               JointFilter filter,
                                               const EncoderStackConfig& enc_cfg, int max_points,
                                               uint64_t seed);

// --------------------------------------------------------------------------
// Training

struct GsdiffTrainConfig {
  int steps = 800;
  int batch = 4;
  double lr = 1e-3;
  uint64_t seed = 0;
  int max_points = 256;
  int T = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int sample_steps = 100;  // default reverse steps, recorded in the checkpoint
  DenoiserConfig den;
  EncoderStackConfig enc;
};

struct GsdiffTrainResult {
  std::vector<double> loss_curve;  // one entry per optimizer step
};

// Trains encoders + denoiser end to end on epsilon MSE plus 0.1-weighted
// count cross-entropy (variable-count groups only) and writes the checkpoint.
// Throws EmptyDataset when no usable sample exists and CountOutOfRange when
// an other-group character exceeds max_count.
GsdiffTrainResult train_gsdiff(const std::vector<CharacterSample>& dataset,
                               const JointGroupConfig& group, const GsdiffTrainConfig& cfg,
                               const std::string& checkpoint_path);

// Rebuilds a trained model from its checkpoint.
GsdiffModel<float> load_gsdiff_model(const std::string& checkpoint_path);

// --------------------------------------------------------------------------
// Sampling

// Ancestral reverse diffusion over a strided timestep subsequence. The joint
// count comes from `count` when given, the fixed group count, or the count
// head's argmax. Deterministic in (cond, seed).
Mat3X sample_joints(const GsdiffModel<float>& model, const ConditionBundle& cond,
                    std::optional<int> count, std::optional<int> steps, uint64_t seed);

// --------------------------------------------------------------------------
// Regression baseline (generation-vs-regression comparison)

struct DensityPeakConfig {
  double radius = 0.03;        // density ball radius
  double delta_thresh = 0.05;  // min separation from any denser point
  int min_density = 2;
};

// Density-peak cluster centers: a point is a center when no denser point
// lies within delta_thresh of it. Density ties break on coordinates, so the
// result is independent of point order; centers come back sorted by (x,y,z).
Mat3X density_peak_centers(const Mat3X& pts, const DensityPeakConfig& cfg);

struct RegressionConfig {
  int hidden = 64;
  double lr = 1e-3;
  int steps = 500;
  int batch = 4;
  uint64_t seed = 0;
  int max_points = 256;
  EncoderStackConfig enc;
  DensityPeakConfig peaks;
};

template <class S>
struct RegressionModel {
  EncoderStackConfig enc_cfg;
  DensityPeakConfig peaks;
  nn::ParamStore<S> store;
  EncoderStack<S> enc;
  nn::Mlp<S> head;  // [point features | pooled appearance] -> offset to joint

  static RegressionModel init(const EncoderStackConfig& enc_cfg, const DensityPeakConfig& peaks,
                              int hidden, uint64_t seed) {
    RegressionModel m;
    m.enc_cfg = enc_cfg;
    m.peaks = peaks;
    Rng rng(seed);
    m.enc = EncoderStack<S>::init(m.store, enc_cfg, rng);
    m.head = nn::Mlp<S>::init(m.store, "reg.head", enc_cfg.point.d_geo + enc_cfg.view.d_app,
                              hidden, 3, rng);
    return m;
  }
};

// Per-point offsets toward the nearest joint, trained with MSE.
GsdiffTrainResult train_joint_regression(const std::vector<JointSample>& dataset,
                                         const RegressionConfig& cfg,
                                         const std::string& checkpoint_path);

RegressionModel<float> load_regression_model(const std::string& checkpoint_path);

struct RegressionResult {
  Mat3X joints;       // cluster centers, sorted by (x,y,z)
  int cluster_count;  // == joints.rows(); collapse shows up as a low count
};

// Shifts every point by its predicted offset and clusters the result.
RegressionResult regress_joints_baseline(const RegressionModel<float>& model,
                                         const EncoderInputs& inputs);

}  // namespace gsrig
