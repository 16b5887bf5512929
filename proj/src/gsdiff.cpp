#include "gsrig/gsdiff.hpp"

#include <algorithm>
#include <cmath>

namespace gsrig {

namespace {

using nn::Ref;

Mat3X draw_normals(Rng& rng, int rows) {
  Mat3X out(rows, 3);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = rng.normal();
  return out;
}

}  // namespace

// --------------------------------------------------------------------------
// Schedule

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 2) throw Error("InvalidSchedule", "need at least two steps");
  if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
    throw Error("InvalidSchedule", "betas must satisfy 0 < beta_min < beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double bar = 1.0;
  for (int t = 0; t < T; ++t) {
    double beta = beta_min + (beta_max - beta_min) * (static_cast<double>(t) / (T - 1));
    s.betas(t) = beta;
    s.alphas(t) = 1.0 - beta;
    bar *= 1.0 - beta;
    s.alpha_bars(t) = bar;
  }
  return s;
}

Mat3X diffuse(const Mat3X& J0, int t, const Mat3X& noise, const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.T) throw Error("BadStep", "diffuse: t outside the schedule");
  if (J0.rows() != noise.rows()) throw Error("ShapeError", "diffuse: noise shape disagrees");
  double ab = sched.alpha_bars(t);
  return std::sqrt(ab) * J0 + std::sqrt(1.0 - ab) * noise;
}

Mat3X predict_x0(const Mat3X& Jt, int t, const Mat3X& eps, const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.T) throw Error("BadStep", "predict_x0: t outside the schedule");
  if (Jt.rows() != eps.rows()) throw Error("ShapeError", "predict_x0: eps shape disagrees");
  double ab = sched.alpha_bars(t);
  return (Jt - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

std::vector<int> respaced_steps(int T, int steps) {
  if (T < 1) throw Error("InvalidSchedule", "respaced_steps: empty schedule");
  steps = std::max(1, std::min(steps, T));
  std::vector<int> taus;
  if (steps == 1) {
    taus.push_back(T - 1);
    return taus;
  }
  for (int i = 0; i < steps; ++i) {
    int t = static_cast<int>(
        std::llround(static_cast<double>(i) * (T - 1) / (steps - 1)));
    if (taus.empty() || t > taus.back()) taus.push_back(t);
  }
  return taus;
}

// --------------------------------------------------------------------------
// Plain forwards

DenoiserEval denoiser_forward(const GsdiffModel<float>& model, const Mat3X& Jt, int t,
                              const ConditionBundle& cond) {
  KdTree tree(cond.means);
  auto pf = nn::constant<float>(cond.point_features.cast<float>());
  auto ap = nn::constant<float>(cond.appearance.cast<float>());
  auto out = model.den.forward(Jt, t, tree, pf, ap);
  DenoiserEval ev;
  ev.eps_hat = out.eps_hat->value.cast<double>();
  if (out.count_logits)
    ev.count_logits = out.count_logits->value.row(0).transpose().cast<double>();
  return ev;
}

Eigen::VectorXd predict_count_logits(const GsdiffModel<float>& model,
                                     const ConditionBundle& cond) {
  if (!model.den.has_count())
    throw Error("ShapeError", "count head absent: group has a fixed joint count");
  auto pf = nn::constant<float>(cond.point_features.cast<float>());
  auto ap = nn::constant<float>(cond.appearance.cast<float>());
  Ref<float> ct = model.den.cond_tokens(pf, ap);
  Ref<float> pooled = ct ? nn::sorted_mean_rows(ct)
                         : nn::constant<float>(nn::Mat<float>::Zero(1, model.den.cfg.d_model));
  return model.den.count_head(pooled)->value.row(0).transpose().cast<double>();
}

// --------------------------------------------------------------------------
// Dataset preparation

std::vector<JointSample> prepare_joint_samples(const std::vector<CharacterSample>& chars,
                                               JointFilter filter,
                                               const EncoderStackConfig& enc_cfg, int max_points,
                                               uint64_t seed) {
  std::vector<JointSample> out;
  for (size_t ci = 0; ci < chars.size(); ++ci) {
    const CharacterSample& ch = chars[ci];
    std::vector<int> rows;
    for (int j = 0; j < ch.skeleton.size(); ++j) {
      JointGroup g = ch.skeleton.groups[static_cast<size_t>(j)];
      if (filter == JointFilter::All || (filter == JointFilter::Body && g == JointGroup::Body) ||
          (filter == JointFilter::Other && g == JointGroup::Other))
        rows.push_back(j);
    }
    if (rows.empty()) continue;

    JointSample s;
    s.joints.resize(static_cast<int>(rows.size()), 3);
    for (size_t r = 0; r < rows.size(); ++r)
      s.joints.row(static_cast<int>(r)) = ch.skeleton.joints.row(rows[r]);

    GaussianCloud sub = subsample_cloud(ch.cloud, max_points, split_seed(seed, ci));
    s.inputs.means = sub.means;
    s.inputs.centered = centered_positions(sub.means);
    s.inputs.graph = knn_graph(sub.means, enc_cfg.point.k_graph);
    s.inputs.aux = cloud_aux_channels(sub);
    auto views = render_canonical_views(ch.cloud, enc_cfg.view_res);
    s.inputs.views_flat =
        flatten_views(std::vector<Image>(views.begin(), views.end()), enc_cfg.view.patch);
    out.push_back(std::move(s));
  }
  return out;
}

// --------------------------------------------------------------------------
// Training

namespace {

nlohmann::json gsdiff_config_json(const GsdiffModel<float>& model, const GsdiffTrainConfig& cfg,
                                  const std::vector<double>& curve) {
  const DenoiserConfig& d = model.den_cfg;
  nlohmann::json j = {
      {"kind", "gsdiff"},
      {"group", to_string(model.group.group)},
      {"fixed_count", model.group.fixed_count},
      {"max_count", model.group.max_count},
      {"den",
       {{"d_model", d.d_model},
        {"heads", d.heads},
        {"layers", d.layers},
        {"d_ff", d.d_ff},
        {"k_interp", d.k_interp},
        {"use_local", d.use_local},
        {"use_global", d.use_global},
        {"use_image", d.use_image}}},
      {"enc", encoder_cfg_to_json(model.enc_cfg)},
      {"sched", {{"T", cfg.T}, {"beta_min", cfg.beta_min}, {"beta_max", cfg.beta_max}}},
      {"sample_steps", cfg.sample_steps},
      {"train",
       {{"steps", cfg.steps},
        {"batch", cfg.batch},
        {"lr", cfg.lr},
        {"seed", cfg.seed},
        {"max_points", cfg.max_points}}},
      {"loss_curve", curve},
      {"final_loss", curve.empty() ? 0.0 : curve.back()}};
  return j;
}

}  // namespace

GsdiffTrainResult train_gsdiff(const std::vector<CharacterSample>& dataset,
                               const JointGroupConfig& group, const GsdiffTrainConfig& cfg,
                               const std::string& checkpoint_path) {
  if (dataset.empty()) throw Error("EmptyDataset", "train_gsdiff: no characters");
  JointFilter filter =
      group.group == JointGroup::Body ? JointFilter::Body : JointFilter::Other;
  auto samples =
      prepare_joint_samples(dataset, filter, cfg.enc, cfg.max_points, split_seed(cfg.seed, 17));
  if (samples.empty())
    throw Error("EmptyDataset", "train_gsdiff: no sample carries joints of the target group");
  for (const auto& s : samples) {
    int m = static_cast<int>(s.joints.rows());
    if (group.fixed_count >= 0 && m != group.fixed_count)
      throw Error("ShapeError", "train_gsdiff: sample joint count differs from the fixed count");
    if (group.fixed_count < 0 && m > group.max_count)
      throw Error("CountOutOfRange", "train_gsdiff: sample exceeds max_count");
  }

  NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
  auto model = GsdiffModel<float>::init(group, cfg.den, cfg.enc, sched, split_seed(cfg.seed, 1));
  model.sample_steps = cfg.sample_steps;

  std::vector<KdTree> trees;
  trees.reserve(samples.size());
  for (const auto& s : samples) trees.emplace_back(s.inputs.means);

  Rng stream(split_seed(cfg.seed, 2));
  nn::AdamState<float> adam;
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  auto params = model.store.refs();

  std::vector<double> curve;
  curve.reserve(static_cast<size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    Ref<float> total;
    for (int b = 0; b < cfg.batch; ++b) {
      size_t i = stream.uniform_index(samples.size());
      const JointSample& smp = samples[i];
      auto ec = encode_condition(model.enc, smp.inputs);
      int t = static_cast<int>(stream.uniform_index(static_cast<uint64_t>(sched.T)));
      Mat3X noise = draw_normals(stream, static_cast<int>(smp.joints.rows()));
      Mat3X Jt = diffuse(smp.joints, t, noise, sched);
      auto out = model.den.forward(Jt, t, trees[i], ec.point_features, ec.appearance);
      Ref<float> l = nn::mse(out.eps_hat, nn::Mat<float>(noise.cast<float>()));
      if (model.den.has_count()) {
        int c = static_cast<int>(smp.joints.rows());
        l = nn::add(l, nn::scale(nn::cross_entropy_logits(out.count_logits,
                                                          std::vector<int>{c - 1}),
                                 0.1));
      }
      total = total ? nn::add(total, l) : l;
    }
    total = nn::scale(total, 1.0 / cfg.batch);
    model.store.zero_grads();
    nn::backward(total);
    nn::adam_step(params, adam, adam_cfg);
    curve.push_back(static_cast<double>(total->value(0, 0)));
  }

  nn::save_checkpoint(checkpoint_path, model.store, gsdiff_config_json(model, cfg, curve));
  return {curve};
}

GsdiffModel<float> load_gsdiff_model(const std::string& checkpoint_path) {
  nn::RawCheckpoint raw = nn::load_checkpoint(checkpoint_path);
  const nlohmann::json& c = raw.config;
  if (c.value("kind", "") != "gsdiff")
    throw Error("BadCheckpoint", "not a joint-diffusion checkpoint");

  JointGroupConfig group;
  group.group = c.at("group").get<std::string>() == "body" ? JointGroup::Body : JointGroup::Other;
  group.fixed_count = c.at("fixed_count").get<int>();
  group.max_count = c.at("max_count").get<int>();

  DenoiserConfig den;
  const auto& d = c.at("den");
  den.d_model = d.at("d_model").get<int>();
  den.heads = d.at("heads").get<int>();
  den.layers = d.at("layers").get<int>();
  den.d_ff = d.at("d_ff").get<int>();
  den.k_interp = d.at("k_interp").get<int>();
  den.use_local = d.at("use_local").get<bool>();
  den.use_global = d.at("use_global").get<bool>();
  den.use_image = d.at("use_image").get<bool>();

  EncoderStackConfig enc = encoder_cfg_from_json(c.at("enc"));
  const auto& sc = c.at("sched");
  NoiseSchedule sched = make_schedule(sc.at("T").get<int>(), sc.at("beta_min").get<double>(),
                                      sc.at("beta_max").get<double>());

  auto model = GsdiffModel<float>::init(group, den, enc, sched, 0);
  model.sample_steps = c.value("sample_steps", 100);
  nn::load_into(raw, model.store);
  return model;
}

// --------------------------------------------------------------------------
// Sampling

Mat3X sample_joints(const GsdiffModel<float>& model, const ConditionBundle& cond,
                    std::optional<int> count, std::optional<int> steps, uint64_t seed) {
  int m;
  if (count) {
    m = *count;
  } else if (model.group.fixed_count >= 0) {
    m = model.group.fixed_count;
  } else {
    Eigen::VectorXd logits = predict_count_logits(model, cond);
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
      if (logits(i) > logits(best)) best = i;
    m = best + 1;
  }
  if (m < 1) throw Error("CountOutOfRange", "sample_joints: need at least one joint");
  if (model.group.fixed_count < 0 && m > model.group.max_count)
    throw Error("CountOutOfRange", "sample_joints: count exceeds max_count");

  const NoiseSchedule& sched = model.sched;
  std::vector<int> taus = respaced_steps(sched.T, steps ? *steps : model.sample_steps);

  Rng rng(seed);
  Mat3X x = draw_normals(rng, m);
  KdTree tree(cond.means);
  auto pf = nn::constant<float>(cond.point_features.cast<float>());
  auto ap = nn::constant<float>(cond.appearance.cast<float>());

  for (size_t s = taus.size(); s-- > 0;) {
    int t = taus[s];
    auto out = model.den.forward(x, t, tree, pf, ap);
    Mat3X eps = out.eps_hat->value.cast<double>();
    double ab_t = sched.alpha_bars(t);
    Mat3X x0 = (x - std::sqrt(1.0 - ab_t) * eps) / std::sqrt(ab_t);
    if (s == 0) {
      x = x0;
      break;
    }
    int prev = taus[s - 1];
    double ab_p = sched.alpha_bars(prev);
    double step_alpha = ab_t / ab_p;       // product of alphas skipped this stride
    double step_beta = 1.0 - step_alpha;
    double denom = 1.0 - ab_t;
    Mat3X mu = (std::sqrt(ab_p) * step_beta / denom) * x0 +
               (std::sqrt(step_alpha) * (1.0 - ab_p) / denom) * x;
    double var = step_beta * (1.0 - ab_p) / denom;
    x = mu + std::sqrt(var) * draw_normals(rng, m);
  }
  return x;
}

// --------------------------------------------------------------------------
// Regression baseline

Mat3X density_peak_centers(const Mat3X& pts, const DensityPeakConfig& cfg) {
  const int n = static_cast<int>(pts.rows());
  if (n == 0) return Mat3X(0, 3);
  const double r2 = cfg.radius * cfg.radius;

  std::vector<int> rho(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if ((pts.row(i) - pts.row(j)).squaredNorm() <= r2) ++rho[static_cast<size_t>(i)];

  // Rank = (density, x, y, z): a total order on distinct points, so the
  // "nearest denser point" is well defined without index tie-breaks and the
  // result cannot depend on point order.
  auto ranks_above = [&](int i, int j) {
    if (rho[static_cast<size_t>(j)] != rho[static_cast<size_t>(i)])
      return rho[static_cast<size_t>(j)] > rho[static_cast<size_t>(i)];
    for (int c = 0; c < 3; ++c)
      if (pts(j, c) != pts(i, c)) return pts(j, c) > pts(i, c);
    return false;
  };

  std::vector<Eigen::RowVector3d> centers;
  for (int i = 0; i < n; ++i) {
    if (rho[static_cast<size_t>(i)] < cfg.min_density) continue;
    double delta2 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (ranks_above(i, j)) delta2 = std::min(delta2, (pts.row(i) - pts.row(j)).squaredNorm());
    if (delta2 > cfg.delta_thresh * cfg.delta_thresh) centers.push_back(pts.row(i));
  }

  std::sort(centers.begin(), centers.end(),
            [](const Eigen::RowVector3d& a, const Eigen::RowVector3d& b) {
              for (int c = 0; c < 3; ++c)
                if (a(c) != b(c)) return a(c) < b(c);
              return false;
            });
  centers.erase(std::unique(centers.begin(), centers.end(),
                            [](const Eigen::RowVector3d& a, const Eigen::RowVector3d& b) {
                              return (a.array() == b.array()).all();
                            }),
                centers.end());

  Mat3X out(static_cast<int>(centers.size()), 3);
  for (size_t i = 0; i < centers.size(); ++i) out.row(static_cast<int>(i)) = centers[i];
  return out;
}

namespace {

// [point features | pooled appearance] rows fed to the offset head.
Ref<float> regression_head_input(const EncodedCondition<float>& ec, int n) {
  Ref<float> pooled = nn::sorted_mean_rows(ec.appearance);
  return nn::concat_cols(
      std::vector<Ref<float>>{ec.point_features, nn::repeat_rows(pooled, n)});
}

}  // namespace

GsdiffTrainResult train_joint_regression(const std::vector<JointSample>& dataset,
                                         const RegressionConfig& cfg,
                                         const std::string& checkpoint_path) {
  if (dataset.empty()) throw Error("EmptyDataset", "train_joint_regression: no samples");
  auto model = RegressionModel<float>::init(cfg.enc, cfg.peaks, cfg.hidden,
                                            split_seed(cfg.seed, 1));

  // Per-point targets: offset to the nearest joint.
  std::vector<nn::Mat<float>> targets;
  targets.reserve(dataset.size());
  for (const auto& s : dataset) {
    KdTree jt(s.joints);
    const int n = static_cast<int>(s.inputs.means.rows());
    nn::Mat<float> tgt(n, 3);
    for (int i = 0; i < n; ++i) {
      int j = jt.nearest(s.inputs.means.row(i).transpose());
      tgt.row(i) =
          (s.joints.row(j) - s.inputs.means.row(i)).cast<float>();
    }
    targets.push_back(std::move(tgt));
  }

  Rng stream(split_seed(cfg.seed, 2));
  nn::AdamState<float> adam;
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  auto params = model.store.refs();

  std::vector<double> curve;
  curve.reserve(static_cast<size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    Ref<float> total;
    for (int b = 0; b < cfg.batch; ++b) {
      size_t i = stream.uniform_index(dataset.size());
      auto ec = encode_condition(model.enc, dataset[i].inputs);
      Ref<float> pred = model.head(
          regression_head_input(ec, static_cast<int>(dataset[i].inputs.means.rows())));
      Ref<float> l = nn::mse(pred, targets[i]);
      total = total ? nn::add(total, l) : l;
    }
    total = nn::scale(total, 1.0 / cfg.batch);
    model.store.zero_grads();
    nn::backward(total);
    nn::adam_step(params, adam, adam_cfg);
    curve.push_back(static_cast<double>(total->value(0, 0)));
  }

  nlohmann::json config = {{"kind", "regression"},
                           {"enc", encoder_cfg_to_json(cfg.enc)},
                           {"hidden", cfg.hidden},
                           {"peaks",
                            {{"radius", cfg.peaks.radius},
                             {"delta_thresh", cfg.peaks.delta_thresh},
                             {"min_density", cfg.peaks.min_density}}},
                           {"train",
                            {{"steps", cfg.steps},
                             {"batch", cfg.batch},
                             {"lr", cfg.lr},
                             {"seed", cfg.seed},
                             {"max_points", cfg.max_points}}},
                           {"loss_curve", curve},
                           {"final_loss", curve.empty() ? 0.0 : curve.back()}};
  nn::save_checkpoint(checkpoint_path, model.store, config);
  return {curve};
}

RegressionModel<float> load_regression_model(const std::string& checkpoint_path) {
  nn::RawCheckpoint raw = nn::load_checkpoint(checkpoint_path);
  const nlohmann::json& c = raw.config;
  if (c.value("kind", "") != "regression")
    throw Error("BadCheckpoint", "not a joint-regression checkpoint");
  EncoderStackConfig enc = encoder_cfg_from_json(c.at("enc"));
  DensityPeakConfig peaks;
  peaks.radius = c.at("peaks").at("radius").get<double>();
  peaks.delta_thresh = c.at("peaks").at("delta_thresh").get<double>();
  peaks.min_density = c.at("peaks").at("min_density").get<int>();
  auto model = RegressionModel<float>::init(enc, peaks, c.at("hidden").get<int>(), 0);
  nn::load_into(raw, model.store);
  return model;
}

RegressionResult regress_joints_baseline(const RegressionModel<float>& model,
                                         const EncoderInputs& inputs) {
  auto ec = encode_condition(model.enc, inputs);
  const int n = static_cast<int>(inputs.means.rows());
  Ref<float> pred = model.head(regression_head_input(ec, n));
  Mat3X shifted = inputs.means + pred->value.cast<double>();
  RegressionResult res;
  res.joints = density_peak_centers(shifted, model.peaks);
  res.cluster_count = static_cast<int>(res.joints.rows());
  return res;
}

}  // namespace gsrig
