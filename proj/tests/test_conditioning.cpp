#include "gsrig/conditioning.hpp"

#include "gsrig/normalize.hpp"
#include "gsrig/synthetic.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

using namespace gsrig;
using namespace gsrig::testing;

TEST_SUITE_BEGIN("conditioning");

namespace {

Eigen::MatrixXd random_features(Rng& rng, int n, int d) {
  Eigen::MatrixXd f(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) f(i, j) = rng.normal();
  return f;
}

std::vector<Image> solid_views(int res, unsigned char v) {
  std::vector<Image> out;
  for (int i = 0; i < 4; ++i) {
    Image img(res, res);
    std::fill(img.data.begin(), img.data.end(), v);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

TEST_CASE("knn_interpolate: coincident query snaps to that point's feature") {
  Rng rng(21);
  Mat3X means = random_points(rng, 30, -1.0, 1.0);
  Eigen::MatrixXd feats = random_features(rng, 30, 5);
  Mat3X q(1, 3);
  q.row(0) = means.row(17);
  Eigen::MatrixXd out = knn_interpolate(q, means, feats, 4);
  CHECK(out.row(0) == feats.row(17));
}

TEST_CASE("knn_interpolate: distances 1 and 2 blend 2/3 to 1/3") {
  Mat3X means(2, 3);
  means << 1, 0, 0, -2, 0, 0;
  Eigen::MatrixXd feats(2, 2);
  feats << 3.0, -1.0, 9.0, 5.0;
  Mat3X q = Mat3X::Zero(1, 3);
  Eigen::MatrixXd out = knn_interpolate(q, means, feats, 2);
  CHECK(out(0, 0) == doctest::Approx((2.0 / 3.0) * 3.0 + (1.0 / 3.0) * 9.0).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx((2.0 / 3.0) * -1.0 + (1.0 / 3.0) * 5.0).epsilon(1e-12));
}

TEST_CASE("knn_interpolate: k=1 returns the nearest feature verbatim") {
  Rng rng(22);
  Mat3X means = random_points(rng, 12, -1.0, 1.0);
  Eigen::MatrixXd feats = random_features(rng, 12, 3);
  Mat3X q(1, 3);
  q << 5, 5, 5;
  KdTree tree(means);
  int nearest = tree.nearest(q.row(0).transpose());
  Eigen::MatrixXd out = knn_interpolate(q, means, feats, 1);
  CHECK(out.row(0) == feats.row(nearest));
}

TEST_CASE("knn_interpolate outputs stay within neighbor bounds and ignore point order") {
  Rng rng(23);
  Mat3X means = random_points(rng, 40, -1.0, 1.0);
  Eigen::MatrixXd feats = random_features(rng, 40, 4);
  Mat3X q = random_points(rng, 10, -1.0, 1.0);
  Eigen::MatrixXd out = knn_interpolate(q, means, feats, 6);

  KdTree tree(means);
  for (int i = 0; i < 10; ++i) {
    auto nb = tree.knn(q.row(i).transpose(), 6);
    for (int c = 0; c < 4; ++c) {
      double lo = 1e300, hi = -1e300;
      for (const auto& h : nb) {
        lo = std::min(lo, feats(h.index, c));
        hi = std::max(hi, feats(h.index, c));
      }
      CHECK(out(i, c) >= lo - 1e-12);
      CHECK(out(i, c) <= hi + 1e-12);
    }
  }

  // Reorder the point set: same queries, bit-identical answers.
  std::vector<int> perm(40);
  for (int i = 0; i < 40; ++i) perm[static_cast<size_t>(i)] = (i * 17 + 5) % 40;
  Mat3X means_p(40, 3);
  Eigen::MatrixXd feats_p(40, 4);
  for (int i = 0; i < 40; ++i) {
    means_p.row(i) = means.row(perm[static_cast<size_t>(i)]);
    feats_p.row(i) = feats.row(perm[static_cast<size_t>(i)]);
  }
  Eigen::MatrixXd out_p = knn_interpolate(q, means_p, feats_p, 6);
  CHECK(out_p == out);
}

TEST_CASE("knn_graph includes self and rejects undersized clouds") {
  Rng rng(24);
  Mat3X means = random_points(rng, 20, -1.0, 1.0);
  auto graph = knn_graph(means, 5);
  for (int i = 0; i < 20; ++i) CHECK(graph(i, 0) == i);  // self at distance zero
  CHECK_THROWS_WITH_AS(knn_graph(means, 21), doctest::Contains("TooFewPoints"), Error);
}

TEST_CASE("encode_points is bit-exactly permutation equivariant") {
  Rng rng(25);
  nn::ParamStore<float> store;
  PointEncoderConfig cfg;
  cfg.k_graph = 8;
  cfg.hidden = 32;
  cfg.d_geo = 24;
  auto enc = PointEncoder<float>::init(store, cfg, rng);

  Mat3X means = random_points(rng, 50, -1.0, 1.0);
  Mat3X centered = centered_positions(means);
  auto f = enc.forward(centered.cast<float>(), knn_graph(means, cfg.k_graph), {});

  std::vector<int> perm(50);
  for (int i = 0; i < 50; ++i) perm[static_cast<size_t>(i)] = (i * 13 + 7) % 50;
  Mat3X means_p(50, 3);
  for (int i = 0; i < 50; ++i) means_p.row(i) = means.row(perm[static_cast<size_t>(i)]);
  auto fp = enc.forward(centered_positions(means_p).cast<float>(), knn_graph(means_p, cfg.k_graph),
                        {});
  for (int i = 0; i < 50; ++i)
    for (int c = 0; c < cfg.d_geo; ++c)
      REQUIRE(fp->value(i, c) == f->value(perm[static_cast<size_t>(i)], c));
}

TEST_CASE("encode_points is translation invariant through centering") {
  Rng rng(26);
  nn::ParamStore<double> store;
  PointEncoderConfig cfg;
  cfg.k_graph = 6;
  cfg.hidden = 16;
  cfg.d_geo = 8;
  auto enc = PointEncoder<double>::init(store, cfg, rng);

  Mat3X means = random_points(rng, 30, -1.0, 1.0);
  Vec3 t(12.5, -3.25, 7.75);
  Mat3X moved = means.rowwise() + t.transpose();

  auto f0 = enc.forward(centered_positions(means), knn_graph(means, cfg.k_graph), {});
  auto f1 = enc.forward(centered_positions(moved), knn_graph(moved, cfg.k_graph), {});
  CHECK((f1->value - f0->value).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("encode_points gradient checks out, including aux channels") {
  Rng rng(27);
  nn::ParamStore<double> store;
  PointEncoderConfig cfg;
  cfg.k_graph = 4;
  cfg.hidden = 6;
  cfg.d_geo = 5;
  cfg.use_aux = true;
  auto enc = PointEncoder<double>::init(store, cfg, rng);

  CharacterSpec spec;
  spec.seed = 30;
  spec.points_per_unit_area = 40;
  auto sample = generate_character(spec);
  normalize_character(sample.cloud, sample.skeleton);
  Mat3X sub = sample.cloud.means.topRows(12);
  GaussianCloud small = sample.cloud;
  small.means = sub;
  small.scales = sample.cloud.scales.topRows(12);
  small.colors = sample.cloud.colors.topRows(12);
  small.opacities = sample.cloud.opacities.head(12);
  small.orientations.resize(12);

  Mat3X centered = centered_positions(sub);
  auto graph = knn_graph(sub, cfg.k_graph);
  Eigen::MatrixXd aux = cloud_aux_channels(small);
  Eigen::MatrixXd target = random_features(rng, 12, cfg.d_geo);
  auto f = [&]() { return nn::mse(enc.forward(centered, graph, aux), target); };
  auto res = nn::grad_check(f, store.items, {.max_coords_per_param = 24});
  CAPTURE(res.worst_param);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("flatten_views validates shape and downsamples by area") {
  CHECK_THROWS_WITH_AS(flatten_views(std::vector<Image>(3, Image(64, 64))),
                       doctest::Contains("BadViews"), Error);
  std::vector<Image> mixed(4, Image(64, 64));
  mixed[2] = Image(32, 32);
  CHECK_THROWS_WITH_AS(flatten_views(mixed), doctest::Contains("BadViews"), Error);

  auto white = solid_views(64, 255);
  Eigen::MatrixXd flat = flatten_views(white);
  CHECK(flat.rows() == 4);
  CHECK(flat.cols() == 768);
  CHECK((flat.array() - 1.0).abs().maxCoeff() < 1e-12);

  // A half-dark image averages to the block mean.
  Image img(32, 32);
  std::fill(img.data.begin(), img.data.end(), static_cast<unsigned char>(0));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img.px(x, y)[c] = 255;
  std::vector<Image> views(4, img);
  Eigen::MatrixXd f2 = flatten_views(views, 16);
  CHECK(f2(0, 0) == doctest::Approx(1.0));            // left half fully bright
  CHECK(f2(0, (0 * 16 + 15) * 3) == doctest::Approx(0.0));  // right half dark
}

TEST_CASE("view encoder: black inputs with zero bias reduce to the per-view embeddings") {
  Rng rng(28);
  nn::ParamStore<float> store;
  ViewEncoderConfig cfg;
  auto enc = ViewEncoder<float>::init(store, cfg, rng);
  Eigen::MatrixXd black = flatten_views(solid_views(64, 0));
  auto tokens = enc.forward(black.cast<float>());
  CHECK(tokens->value == enc.embed->value);  // bias initializes to zero

  // Swapping front/back images swaps rows 0 and 1 and leaves 2, 3 alone.
  Eigen::MatrixXd flat(4, 768);
  for (int v = 0; v < 4; ++v)
    for (int j = 0; j < 768; ++j) flat(v, j) = rng.uniform();
  Eigen::MatrixXd swapped = flat;
  swapped.row(0) = flat.row(1);
  swapped.row(1) = flat.row(0);
  auto t1 = enc.forward(flat.cast<float>());
  auto t2 = enc.forward(swapped.cast<float>());
  CHECK(t2->value.row(2) == t1->value.row(2));
  CHECK(t2->value.row(3) == t1->value.row(3));
  CHECK(t2->value.row(0) != t1->value.row(0));
}

TEST_CASE("make_encoder_inputs assembles consistent shapes deterministically") {
  CharacterSpec spec;
  spec.seed = 31;
  spec.points_per_unit_area = 120;
  auto sample = generate_character(spec);
  normalize_character(sample.cloud, sample.skeleton);

  EncoderStackConfig cfg;
  auto in1 = make_encoder_inputs(sample.cloud, cfg);
  auto in2 = make_encoder_inputs(sample.cloud, cfg);
  CHECK(in1.centered == in2.centered);
  CHECK(in1.views_flat == in2.views_flat);
  CHECK(in1.graph == in2.graph);
  CHECK(in1.centered.rows() == sample.cloud.size());
  CHECK(in1.graph.cols() == cfg.point.k_graph);
  CHECK(in1.views_flat.rows() == 4);
  CHECK(in1.aux.cols() == 7);
}

TEST_SUITE_END();
