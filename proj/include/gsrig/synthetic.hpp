#pragma once

#include "gsrig/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gsrig {

enum class BodyTemplate { BipedMinimal, BipedFull };
enum class AppendageKind { ChainHair, ChainSkirtPanel, ChainTail };

const char* to_string(BodyTemplate t);
const char* to_string(AppendageKind k);
BodyTemplate body_template_from_string(const std::string& s);
AppendageKind appendage_kind_from_string(const std::string& s);

// One kinematic chain of capsules hung off a body joint.
struct AppendageSpec {
  AppendageKind kind = AppendageKind::ChainHair;
  std::string attach_joint = "head";
  int link_count = 3;
  double link_length = 0.09;
  double radius = 0.03;
};

struct CharacterSpec {
  uint64_t seed = 0;
  BodyTemplate body_template = BodyTemplate::BipedMinimal;
  std::vector<AppendageSpec> appendages;
  double points_per_unit_area = 600.0;
  double noise_sigma = 0.0;
};

struct CharacterSample {
  GaussianCloud cloud;
  Skeleton skeleton;
  SkinningMatrix skinning;
  std::vector<std::string> joint_names;
  CharacterSpec spec;

  Rig rig() const { return {cloud, skeleton, skinning, joint_names}; }
};

// Fixed rest-pose template: joints, parents, names, and the radius of the
// capsule running from each joint's parent to the joint (root entry unused).
struct BodyTemplateDef {
  Mat3X joints;
  std::vector<int> parents;
  std::vector<std::string> names;
  std::vector<double> bone_radius;
};

const BodyTemplateDef& body_template_def(BodyTemplate t);

// Builds the character deterministically from the spec: body + appendage
// capsules, area-weighted surface sampling, analytic two-joint skinning.
// Throws InvalidSpec on a malformed spec.
CharacterSample generate_character(const CharacterSpec& spec);

// How generate_dataset draws per-sample specs.
struct SpecDistribution {
  BodyTemplate body_template = BodyTemplate::BipedMinimal;
  int appendage_count_min = 0;
  int appendage_count_max = 3;
  int link_count_min = 2;
  int link_count_max = 4;
  double link_length_min = 0.06;
  double link_length_max = 0.12;
  double radius_min = 0.02;
  double radius_max = 0.04;
  double points_per_unit_area = 600.0;
  double noise_sigma = 0.0;
};

struct DatasetConfig {
  int count = 0;
  SpecDistribution dist;
  std::string out_dir;
  uint64_t seed = 0;
};

struct ManifestEntry {
  std::string path;  // sample directory, relative to the dataset dir
  uint64_t seed = 0;
  int joint_count = 0;
  int body_joint_count = 0;
};

// Draws the spec for dataset sample `index` (pure in (seed, index)).
CharacterSpec sample_spec(const SpecDistribution& dist, uint64_t master_seed, int index);

// Writes count samples + manifest.json under out_dir. Per-sample seeds
// derive from the master seed by the documented split rule, so reruns and
// parallel generation are byte-identical.
std::vector<ManifestEntry> generate_dataset(const DatasetConfig& config);

std::vector<ManifestEntry> load_manifest(const std::string& dir);
Rig load_sample(const std::string& dir, const ManifestEntry& entry);

}  // namespace gsrig
