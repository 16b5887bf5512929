#include "gsrig/synthetic.hpp"

#include "gsrig/normalize.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace gsrig;
using namespace gsrig::testing;

TEST_SUITE_BEGIN("synthetic");

namespace {

bool samples_equal(const CharacterSample& a, const CharacterSample& b) {
  return a.cloud.means == b.cloud.means && a.cloud.scales == b.cloud.scales &&
         a.cloud.colors == b.cloud.colors && a.cloud.opacities == b.cloud.opacities &&
         a.skeleton.joints == b.skeleton.joints && a.skeleton.parents == b.skeleton.parents &&
         a.skinning.weights == b.skinning.weights && a.joint_names == b.joint_names;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("biped_minimal has 13 body joints, biped_full 25") {
  CharacterSpec spec;
  spec.seed = 7;
  CharacterSample s = generate_character(spec);
  CHECK(s.skeleton.size() == 13);
  CHECK(s.skeleton.body_count() == 13);
  for (auto g : s.skeleton.groups) CHECK(g == JointGroup::Body);

  spec.body_template = BodyTemplate::BipedFull;
  CHECK(generate_character(spec).skeleton.size() == 25);
}

TEST_CASE("generated samples pass validate_rig") {
  CharacterSpec spec;
  spec.seed = 3;
  spec.appendages.push_back({AppendageKind::ChainHair, "head", 3, 0.08, 0.03});
  spec.appendages.push_back({AppendageKind::ChainTail, "root_hips", 4, 0.1, 0.025});
  CharacterSample s = generate_character(spec);
  CHECK(validate_rig(s.rig()).empty());
  CHECK(validate_rig(s.rig(), 13).empty());  // body count matches template
  CHECK(s.cloud.size() > 500);
}

TEST_CASE("appendage chain forms a path of other-group joints at the attach joint") {
  CharacterSpec spec;
  spec.seed = 11;
  spec.appendages.push_back({AppendageKind::ChainSkirtPanel, "root_hips", 3, 0.09, 0.03});
  CharacterSample s = generate_character(spec);

  REQUIRE(s.skeleton.size() == 16);
  int other = 0;
  for (auto g : s.skeleton.groups)
    if (g == JointGroup::Other) ++other;
  CHECK(other == 3);

  // Path: 13 <- root_hips(0), 14 <- 13, 15 <- 14.
  CHECK(s.skeleton.parents[13] == 0);
  CHECK(s.skeleton.parents[14] == 13);
  CHECK(s.skeleton.parents[15] == 14);
  CHECK(s.skeleton.groups[13] == JointGroup::Other);
  // Consecutive links are link_length apart.
  CHECK((s.skeleton.joints.row(14) - s.skeleton.joints.row(13)).norm() ==
        doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("generation is bit-identical across reruns") {
  CharacterSpec spec;
  spec.seed = 123456789;
  spec.appendages.push_back({AppendageKind::ChainHair, "head", 2, 0.07, 0.02});
  spec.noise_sigma = 0.002;
  CHECK(samples_equal(generate_character(spec), generate_character(spec)));

  CharacterSpec other = spec;
  other.seed = 42;
  CHECK_FALSE(samples_equal(generate_character(spec), generate_character(other)));
}

TEST_CASE("ground-truth skinning involves at most two joints, capped to the capsule") {
  CharacterSpec spec;
  spec.seed = 5;
  spec.appendages.push_back({AppendageKind::ChainTail, "root_hips", 3, 0.1, 0.03});
  CharacterSample s = generate_character(spec);

  std::set<std::pair<int, int>> bones;
  for (auto [p, c] : s.skeleton.bones()) bones.insert({p, c});

  for (int i = 0; i < s.skinning.points(); ++i) {
    std::vector<int> nz;
    for (int j = 0; j < s.skinning.joints(); ++j)
      if (s.skinning.weights(i, j) > 0.0) nz.push_back(j);
    REQUIRE(nz.size() >= 1);
    REQUIRE(nz.size() <= 2);
    if (nz.size() == 2) {
      // The two supports bound one bone.
      CHECK(bones.count({nz[0], nz[1]}) == 1);
    }
    CHECK(s.skinning.weights.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("invalid specs are rejected") {
  CharacterSpec spec;
  spec.appendages.push_back({AppendageKind::ChainHair, "head", 0, 0.08, 0.03});
  CHECK_THROWS_WITH_AS(generate_character(spec), doctest::Contains("InvalidSpec"), Error);

  spec.appendages[0] = {AppendageKind::ChainHair, "nonexistent_joint", 2, 0.08, 0.03};
  CHECK_THROWS_WITH_AS(generate_character(spec), doctest::Contains("InvalidSpec"), Error);

  spec.appendages.clear();
  spec.points_per_unit_area = 0.0;
  CHECK_THROWS_AS(generate_character(spec), Error);
}

TEST_CASE("characters normalize cleanly") {
  CharacterSpec spec;
  spec.seed = 21;
  CharacterSample s = generate_character(spec);
  auto t = normalize_character(s.cloud, s.skeleton);
  CHECK(t.scale > 0.0);
  // Longest bbox side is 1 after normalization.
  Vec3 lo = s.cloud.means.colwise().minCoeff().transpose();
  Vec3 hi = s.cloud.means.colwise().maxCoeff().transpose();
  CHECK((hi - lo).maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((hi + lo).cwiseAbs().maxCoeff() < 1e-9);  // centered
}

TEST_CASE("dataset generation: manifest, determinism, appendage variation") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "gsrig_ds_test";
  fs::remove_all(dir);

  DatasetConfig config;
  config.count = 6;
  config.seed = 1;
  config.out_dir = (dir / "a").string();
  config.dist.appendage_count_min = 0;
  config.dist.appendage_count_max = 3;
  config.dist.points_per_unit_area = 150;  // keep the test fast

  auto entries = generate_dataset(config);
  REQUIRE(entries.size() == 6);

  // Re-generate into a second directory: byte-identical trees.
  config.out_dir = (dir / "b").string();
  generate_dataset(config);
  for (const auto& e : entries) {
    for (const char* file : {"cloud.ply", "rig.json", "spec.json"}) {
      auto a = slurp(dir / "a" / e.path / file);
      auto b = slurp(dir / "b" / e.path / file);
      CHECK(a == b);
      CHECK(!a.empty());
    }
  }
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));

  // Appendage counts vary across samples.
  std::set<int> other_counts;
  for (const auto& e : entries)
    other_counts.insert(e.joint_count - e.body_joint_count);
  CHECK(other_counts.size() > 1);

  // Manifest round trip + sample loading.
  auto loaded = load_manifest((dir / "a").string());
  REQUIRE(loaded.size() == 6);
  CHECK(loaded[2].path == entries[2].path);
  CHECK(loaded[2].seed == entries[2].seed);
  Rig rig = load_sample((dir / "a").string(), loaded[0]);
  CHECK(validate_rig(rig).empty());
  CHECK(rig.skeleton.size() == loaded[0].joint_count);

  // count=0 writes an empty manifest without error.
  DatasetConfig empty;
  empty.count = 0;
  empty.seed = 9;
  empty.out_dir = (dir / "empty").string();
  CHECK(generate_dataset(empty).empty());
  CHECK(load_manifest(empty.out_dir).empty());

  fs::remove_all(dir);
}

TEST_SUITE_END();
