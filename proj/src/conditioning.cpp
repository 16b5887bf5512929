#include "gsrig/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gsrig {

nn::IdxMat knn_graph(const Mat3X& means, int k) {
  const int n = static_cast<int>(means.rows());
  if (k < 1) throw Error("BadParams", "knn_graph: k must be >= 1");
  if (n < k) throw Error("TooFewPoints", "knn_graph: need at least k points");
  KdTree tree(means);
  nn::IdxMat graph(n, k);
  for (int i = 0; i < n; ++i) {
    auto nb = tree.knn(means.row(i).transpose(), k);
    for (int j = 0; j < k; ++j) graph(i, j) = nb[static_cast<size_t>(j)].index;
  }
  return graph;
}

Mat3X centered_positions(const Mat3X& means) {
  const int n = static_cast<int>(means.rows());
  if (n == 0) throw Error("TooFewPoints", "centered_positions: empty input");
  Vec3 c;
  std::vector<double> buf(static_cast<size_t>(n));
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = means(i, j);
    c[j] = nn::sorted_sum(buf) / static_cast<double>(n);
  }
  return means.rowwise() - c.transpose();
}

InterpPlan make_interp_plan(const Mat3X& query, const KdTree& tree, int k) {
  const int m = static_cast<int>(query.rows());
  if (k < 1 || k > tree.size()) throw Error("BadParams", "interpolation k out of range");
  InterpPlan plan;
  plan.idx = nn::IdxMat::Zero(m, k);
  plan.w = Eigen::MatrixXd::Zero(m, k);
  std::vector<double> buf;
  for (int i = 0; i < m; ++i) {
    auto nb = tree.knn(query.row(i).transpose(), k);
    int snap = -1;
    for (int j = 0; j < k; ++j) {
      plan.idx(i, j) = nb[static_cast<size_t>(j)].index;
      if (snap < 0 && std::sqrt(nb[static_cast<size_t>(j)].dist2) < 1e-9) snap = j;
    }
    if (snap >= 0) {
      plan.w(i, snap) = 1.0;  // exact limit of the 1/d weights
      continue;
    }
    buf.clear();
    for (int j = 0; j < k; ++j) buf.push_back(1.0 / std::sqrt(nb[static_cast<size_t>(j)].dist2));
    std::vector<double> tmp = buf;
    double z = nn::sorted_sum(tmp);
    for (int j = 0; j < k; ++j) plan.w(i, j) = buf[static_cast<size_t>(j)] / z;
  }
  return plan;
}

Eigen::MatrixXd knn_interpolate(const Mat3X& query, const Mat3X& means,
                                const Eigen::MatrixXd& features, int k) {
  if (features.rows() != means.rows())
    throw Error("ShapeError", "knn_interpolate: one feature row per mean required");
  KdTree tree(means);
  InterpPlan plan = make_interp_plan(query, tree, k);
  Eigen::MatrixXd out(query.rows(), features.cols());
  std::vector<double> buf(static_cast<size_t>(k));
  for (int i = 0; i < out.rows(); ++i)
    for (int c = 0; c < out.cols(); ++c) {
      for (int j = 0; j < k; ++j)
        buf[static_cast<size_t>(j)] = plan.w(i, j) * features(plan.idx(i, j), c);
      out(i, c) = nn::sorted_sum(buf);
    }
  return out;
}

Eigen::MatrixXd flatten_views(const std::vector<Image>& views, int patch) {
  if (views.size() != 4) throw Error("BadViews", "exactly four canonical views required");
  const int res = views[0].width;
  for (const auto& v : views)
    if (v.width != res || v.height != res)
      throw Error("BadViews", "views must be square and equally sized");
  if (patch < 1 || res % patch != 0)
    throw Error("BadViews", "view resolution must be divisible by the patch size");
  const int block = res / patch;
  Eigen::MatrixXd out(4, patch * patch * 3);
  for (int v = 0; v < 4; ++v)
    for (int py = 0; py < patch; ++py)
      for (int px = 0; px < patch; ++px)
        for (int c = 0; c < 3; ++c) {
          double sum = 0.0;
          for (int y = 0; y < block; ++y)
            for (int x = 0; x < block; ++x)
              sum += views[static_cast<size_t>(v)].px(px * block + x, py * block + y)[c];
          out(v, (py * patch + px) * 3 + c) = sum / (255.0 * block * block);
        }
  return out;
}

Eigen::MatrixXd cloud_aux_channels(const GaussianCloud& cloud) {
  Eigen::MatrixXd aux(cloud.size(), 7);
  aux.leftCols<3>() = cloud.scales;
  aux.middleCols<3>(3) = cloud.colors;
  aux.col(6) = cloud.opacities;
  return aux;
}

EncoderInputs make_encoder_inputs(const GaussianCloud& cloud, const EncoderStackConfig& cfg) {
  EncoderInputs in;
  in.means = cloud.means;
  in.centered = centered_positions(cloud.means);
  in.graph = knn_graph(cloud.means, cfg.point.k_graph);
  in.aux = cloud_aux_channels(cloud);
  auto views = render_canonical_views(cloud, cfg.view_res);
  in.views_flat =
      flatten_views(std::vector<Image>(views.begin(), views.end()), cfg.view.patch);
  return in;
}

nlohmann::json encoder_cfg_to_json(const EncoderStackConfig& cfg) {
  return {{"k_graph", cfg.point.k_graph},
          {"hidden", cfg.point.hidden},
          {"d_geo", cfg.point.d_geo},
          {"use_aux", cfg.point.use_aux},
          {"d_app", cfg.view.d_app},
          {"patch", cfg.view.patch},
          {"view_res", cfg.view_res}};
}

EncoderStackConfig encoder_cfg_from_json(const nlohmann::json& j) {
  EncoderStackConfig cfg;
  cfg.point.k_graph = j.at("k_graph").get<int>();
  cfg.point.hidden = j.at("hidden").get<int>();
  cfg.point.d_geo = j.at("d_geo").get<int>();
  cfg.point.use_aux = j.at("use_aux").get<bool>();
  cfg.view.d_app = j.at("d_app").get<int>();
  cfg.view.patch = j.at("patch").get<int>();
  cfg.view_res = j.at("view_res").get<int>();
  return cfg;
}

GaussianCloud subsample_cloud(const GaussianCloud& cloud, int max_points, uint64_t seed) {
  const int n = cloud.size();
  if (max_points <= 0 || n <= max_points) return cloud;
  // Partial Fisher-Yates, then sorted so the subset keeps the original order.
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  for (int i = 0; i < max_points; ++i) {
    int j = i + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(max_points));
  std::sort(idx.begin(), idx.end());

  GaussianCloud out;
  out.means.resize(max_points, 3);
  out.scales.resize(max_points, 3);
  out.colors.resize(max_points, 3);
  out.opacities.resize(max_points);
  out.orientations.resize(static_cast<size_t>(max_points));
  for (int i = 0; i < max_points; ++i) {
    int s = idx[static_cast<size_t>(i)];
    out.means.row(i) = cloud.means.row(s);
    out.scales.row(i) = cloud.scales.row(s);
    out.colors.row(i) = cloud.colors.row(s);
    out.opacities(i) = cloud.opacities(s);
    out.orientations[static_cast<size_t>(i)] = cloud.orientations[static_cast<size_t>(s)];
  }
  return out;
}

}  // namespace gsrig
