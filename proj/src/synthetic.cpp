#include "gsrig/synthetic.hpp"

#include "gsrig/io.hpp"
#include "gsrig/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace gsrig {

namespace {

using nlohmann::json;

BodyTemplateDef make_minimal() {
  BodyTemplateDef d;
  // 13 joints: root/hips, spine, head, shoulder/elbow/hand per arm,
  // knee/foot per leg (legs attach directly at the hips).
  struct J { const char* name; double x, y, z; int parent; double r; };
  const J js[] = {
      {"root_hips", 0, 0, 0.95, kNoParent, 0},
      {"spine", 0, 0, 1.25, 0, 0.13},
      {"head", 0, 0, 1.55, 1, 0.09},
      {"shoulder_l", 0, 0.18, 1.40, 1, 0.055},
      {"elbow_l", 0, 0.43, 1.40, 3, 0.05},
      {"hand_l", 0, 0.65, 1.40, 4, 0.042},
      {"shoulder_r", 0, -0.18, 1.40, 1, 0.055},
      {"elbow_r", 0, -0.43, 1.40, 6, 0.05},
      {"hand_r", 0, -0.65, 1.40, 7, 0.042},
      {"knee_l", 0, 0.16, 0.50, 0, 0.075},
      {"foot_l", 0, 0.16, 0.05, 9, 0.055},
      {"knee_r", 0, -0.16, 0.50, 0, 0.075},
      {"foot_r", 0, -0.16, 0.05, 11, 0.055},
  };
  const int m = static_cast<int>(std::size(js));
  d.joints.resize(m, 3);
  for (int i = 0; i < m; ++i) {
    d.joints.row(i) << js[i].x, js[i].y, js[i].z;
    d.parents.push_back(js[i].parent);
    d.names.push_back(js[i].name);
    d.bone_radius.push_back(js[i].r);
  }
  return d;
}

BodyTemplateDef make_full() {
  BodyTemplateDef d;
  // 25 joints: segmented torso/neck/head plus clavicle-to-hand arms and
  // hip-to-toe legs.
  struct J { const char* name; double x, y, z; int parent; double r; };
  const J js[] = {
      {"root_hips", 0, 0, 0.95, kNoParent, 0},
      {"spine_lower", 0, 0, 1.08, 0, 0.13},
      {"spine_upper", 0, 0, 1.21, 1, 0.125},
      {"chest", 0, 0, 1.34, 2, 0.12},
      {"neck", 0, 0, 1.44, 3, 0.06},
      {"head", 0, 0, 1.52, 4, 0.08},
      {"head_top", 0, 0, 1.70, 5, 0.095},
      {"clavicle_l", 0, 0.07, 1.38, 3, 0.05},
      {"shoulder_l", 0, 0.20, 1.40, 7, 0.05},
      {"elbow_l", 0, 0.44, 1.40, 8, 0.045},
      {"wrist_l", 0, 0.62, 1.40, 9, 0.04},
      {"hand_l", 0, 0.74, 1.40, 10, 0.035},
      {"clavicle_r", 0, -0.07, 1.38, 3, 0.05},
      {"shoulder_r", 0, -0.20, 1.40, 12, 0.05},
      {"elbow_r", 0, -0.44, 1.40, 13, 0.045},
      {"wrist_r", 0, -0.62, 1.40, 14, 0.04},
      {"hand_r", 0, -0.74, 1.40, 15, 0.035},
      {"hip_l", 0, 0.10, 0.88, 0, 0.07},
      {"knee_l", 0, 0.11, 0.50, 17, 0.07},
      {"ankle_l", 0, 0.12, 0.08, 18, 0.055},
      {"toe_l", 0.12, 0.12, 0.03, 19, 0.04},
      {"hip_r", 0, -0.10, 0.88, 0, 0.07},
      {"knee_r", 0, -0.11, 0.50, 21, 0.07},
      {"ankle_r", 0, -0.12, 0.08, 22, 0.055},
      {"toe_r", 0.12, -0.12, 0.03, 23, 0.04},
  };
  const int m = static_cast<int>(std::size(js));
  d.joints.resize(m, 3);
  for (int i = 0; i < m; ++i) {
    d.joints.row(i) << js[i].x, js[i].y, js[i].z;
    d.parents.push_back(js[i].parent);
    d.names.push_back(js[i].name);
    d.bone_radius.push_back(js[i].r);
  }
  return d;
}

Vec3 hsv_to_rgb(double h, double s, double v) {
  double r = std::fabs(h * 6.0 - 3.0) - 1.0;
  double g = 2.0 - std::fabs(h * 6.0 - 2.0);
  double b = 2.0 - std::fabs(h * 6.0 - 4.0);
  Vec3 rgb(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0), std::clamp(b, 0.0, 1.0));
  return ((rgb.array() - 1.0) * s + 1.0) * v;
}

struct Capsule {
  int parent_joint = 0;
  int child_joint = 0;
  double radius = 0.0;
};

// Deterministic orthonormal frame around the capsule axis.
void axis_frame(const Vec3& axis, Vec3& e1, Vec3& e2) {
  Vec3 ref = std::abs(axis.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  e1 = ref.cross(axis).normalized();
  e2 = axis.cross(e1);
}

struct SampledPoint {
  Vec3 pos;
  double t = 0.0;  // axial coordinate of the pre-noise position, clamped to [0, L]
};

// Area-weighted stratified sampling of one capsule surface: the point
// budget is split between the cylinder side and the two hemispherical caps
// in proportion to area, then each part is sampled uniformly.
std::vector<SampledPoint> sample_capsule(const Vec3& c1, const Vec3& c2, double radius,
                                         double density, double noise_sigma, Rng& rng) {
  const Vec3 d = c2 - c1;
  const double len = d.norm();
  const Vec3 axis = d / len;
  Vec3 e1, e2;
  axis_frame(axis, e1, e2);

  const double area_cyl = 2.0 * M_PI * radius * len;
  const double area_caps = 4.0 * M_PI * radius * radius;
  const double area = area_cyl + area_caps;
  const int n = std::max(1, static_cast<int>(std::lround(density * area)));
  int n_cyl = static_cast<int>(std::lround(n * area_cyl / area));
  int n_cap1 = (n - n_cyl) / 2;
  int n_cap2 = n - n_cyl - n_cap1;

  std::vector<SampledPoint> out;
  out.reserve(static_cast<size_t>(n));

  auto jitter = [&](Vec3 p) {
    if (noise_sigma > 0.0)
      p += noise_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    return p;
  };

  for (int i = 0; i < n_cyl; ++i) {
    double t = rng.uniform() * len;
    double theta = 2.0 * M_PI * rng.uniform();
    Vec3 p = c1 + axis * t + radius * (std::cos(theta) * e1 + std::sin(theta) * e2);
    out.push_back({jitter(p), t});
  }
  // Hemisphere caps: z uniform in [0,1] gives uniform area on the sphere.
  for (int cap = 0; cap < 2; ++cap) {
    const int n_cap = cap == 0 ? n_cap1 : n_cap2;
    const Vec3 center = cap == 0 ? c1 : c2;
    const double sign = cap == 0 ? -1.0 : 1.0;
    for (int i = 0; i < n_cap; ++i) {
      double z = rng.uniform();
      double theta = 2.0 * M_PI * rng.uniform();
      double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec3 p = center + radius * (rho * std::cos(theta) * e1 +
                                  rho * std::sin(theta) * e2 + sign * z * axis);
      out.push_back({jitter(p), cap == 0 ? 0.0 : len});
    }
  }
  return out;
}

void check_spec(const CharacterSpec& spec, const BodyTemplateDef& tmpl) {
  if (!(spec.points_per_unit_area > 0.0))
    throw Error("InvalidSpec", "points_per_unit_area must be > 0");
  if (spec.noise_sigma < 0.0) throw Error("InvalidSpec", "noise_sigma must be >= 0");
  for (const auto& a : spec.appendages) {
    if (a.link_count < 1) throw Error("InvalidSpec", "appendage link_count must be >= 1");
    if (!(a.link_length > 0.0)) throw Error("InvalidSpec", "appendage link_length must be > 0");
    if (!(a.radius > 0.0)) throw Error("InvalidSpec", "appendage radius must be > 0");
    if (std::find(tmpl.names.begin(), tmpl.names.end(), a.attach_joint) == tmpl.names.end())
      throw Error("InvalidSpec", "attach_joint '" + a.attach_joint +
                                     "' is not a joint of the body template");
  }
}

Vec3 appendage_direction(AppendageKind kind, Rng& rng) {
  double u = rng.uniform(), v = rng.uniform();
  switch (kind) {
    case AppendageKind::ChainHair:
      return Vec3(-0.3 + 0.15 * (u - 0.5), 0.3 * (v - 0.5), -1.0).normalized();
    case AppendageKind::ChainSkirtPanel: {
      double phi = 2.0 * M_PI * u;
      return Vec3(0.25 * std::cos(phi), 0.25 * std::sin(phi), -1.0).normalized();
    }
    case AppendageKind::ChainTail:
      return Vec3(-1.0 + 0.2 * (u - 0.5), 0.3 * (v - 0.5), -0.55).normalized();
  }
  throw Error("InvalidSpec", "unknown appendage kind");
}

const char* appendage_prefix(AppendageKind kind) {
  switch (kind) {
    case AppendageKind::ChainHair: return "hair";
    case AppendageKind::ChainSkirtPanel: return "skirt";
    case AppendageKind::ChainTail: return "tail";
  }
  return "chain";
}

}  // namespace

const char* to_string(BodyTemplate t) {
  return t == BodyTemplate::BipedMinimal ? "biped_minimal" : "biped_full";
}

const char* to_string(AppendageKind k) {
  switch (k) {
    case AppendageKind::ChainHair: return "chain_hair";
    case AppendageKind::ChainSkirtPanel: return "chain_skirt_panel";
    case AppendageKind::ChainTail: return "chain_tail";
  }
  return "?";
}

BodyTemplate body_template_from_string(const std::string& s) {
  if (s == "biped_minimal") return BodyTemplate::BipedMinimal;
  if (s == "biped_full") return BodyTemplate::BipedFull;
  throw Error("InvalidSpec", "unknown body template '" + s + "'");
}

AppendageKind appendage_kind_from_string(const std::string& s) {
  if (s == "chain_hair") return AppendageKind::ChainHair;
  if (s == "chain_skirt_panel") return AppendageKind::ChainSkirtPanel;
  if (s == "chain_tail") return AppendageKind::ChainTail;
  throw Error("InvalidSpec", "unknown appendage kind '" + s + "'");
}

const BodyTemplateDef& body_template_def(BodyTemplate t) {
  static const BodyTemplateDef minimal = make_minimal();
  static const BodyTemplateDef full = make_full();
  return t == BodyTemplate::BipedMinimal ? minimal : full;
}

CharacterSample generate_character(const CharacterSpec& spec) {
  const BodyTemplateDef& tmpl = body_template_def(spec.body_template);
  check_spec(spec, tmpl);

  CharacterSample sample;
  sample.spec = spec;
  sample.skeleton.joints = tmpl.joints;
  sample.skeleton.parents = tmpl.parents;
  sample.skeleton.groups.assign(tmpl.names.size(), JointGroup::Body);
  sample.joint_names = tmpl.names;

  std::vector<Capsule> capsules;
  for (int j = 0; j < static_cast<int>(tmpl.parents.size()); ++j)
    if (tmpl.parents[static_cast<size_t>(j)] != kNoParent)
      capsules.push_back({tmpl.parents[static_cast<size_t>(j)], j,
                          tmpl.bone_radius[static_cast<size_t>(j)]});

  // Appendage chains. Stream split(10 + i) drives appendage i's direction.
  Rng base(spec.seed);
  for (size_t ai = 0; ai < spec.appendages.size(); ++ai) {
    const AppendageSpec& a = spec.appendages[ai];
    Rng dir_rng = base.split(10 + ai);
    Vec3 dir = appendage_direction(a.kind, dir_rng);
    int attach = static_cast<int>(
        std::find(tmpl.names.begin(), tmpl.names.end(), a.attach_joint) - tmpl.names.begin());

    int prev = attach;
    Vec3 prev_pos = sample.skeleton.joints.row(attach).transpose();
    for (int k = 0; k < a.link_count; ++k) {
      Vec3 pos = prev_pos + dir * a.link_length;
      int idx = sample.skeleton.size();
      sample.skeleton.joints.conservativeResize(idx + 1, 3);
      sample.skeleton.joints.row(idx) = pos.transpose();
      sample.skeleton.parents.push_back(prev);
      sample.skeleton.groups.push_back(JointGroup::Other);
      sample.joint_names.push_back(std::string(appendage_prefix(a.kind)) +
                                   std::to_string(ai) + "_" + std::to_string(k));
      capsules.push_back({prev, idx, a.radius});
      prev = idx;
      prev_pos = pos;
    }
  }

  // Sample every capsule surface; stream split(1000 + ci) drives capsule ci.
  struct PointRec { Vec3 pos; int capsule; double t; };
  std::vector<PointRec> points;
  for (size_t ci = 0; ci < capsules.size(); ++ci) {
    const Capsule& c = capsules[ci];
    Rng rng = base.split(1000 + ci);
    Vec3 a = sample.skeleton.joints.row(c.parent_joint).transpose();
    Vec3 b = sample.skeleton.joints.row(c.child_joint).transpose();
    auto pts = sample_capsule(a, b, c.radius, spec.points_per_unit_area,
                              spec.noise_sigma, rng);
    for (const auto& p : pts) points.push_back({p.pos, static_cast<int>(ci), p.t});
  }

  const int n = static_cast<int>(points.size());
  const double sigma = 0.5 / std::sqrt(spec.points_per_unit_area);
  sample.cloud.means.resize(n, 3);
  sample.cloud.scales = Mat3X::Constant(n, 3, sigma);
  sample.cloud.orientations.assign(static_cast<size_t>(n), Quat::Identity());
  sample.cloud.colors.resize(n, 3);
  sample.cloud.opacities = Eigen::VectorXd::Ones(n);
  sample.skinning.weights = Eigen::MatrixXd::Zero(n, sample.skeleton.size());

  std::vector<Vec3> palette;
  for (size_t ci = 0; ci < capsules.size(); ++ci)
    palette.push_back(hsv_to_rgb(std::fmod(0.61803398875 * static_cast<double>(ci + 1), 1.0),
                                 0.5, 0.85));

  for (int i = 0; i < n; ++i) {
    const PointRec& p = points[static_cast<size_t>(i)];
    const Capsule& c = capsules[static_cast<size_t>(p.capsule)];
    sample.cloud.means.row(i) = p.pos.transpose();
    sample.cloud.colors.row(i) = palette[static_cast<size_t>(p.capsule)].transpose();

    // Inverse distance along the bone axis over the two bounding joints
    // reduces to linear interpolation in the axial coordinate.
    double len = (sample.skeleton.joints.row(c.child_joint) -
                  sample.skeleton.joints.row(c.parent_joint))
                     .norm();
    double w_child = std::clamp(p.t / len, 0.0, 1.0);
    sample.skinning.weights(i, c.parent_joint) += 1.0 - w_child;
    sample.skinning.weights(i, c.child_joint) += w_child;
  }
  return sample;
}

CharacterSpec sample_spec(const SpecDistribution& dist, uint64_t master_seed, int index) {
  if (dist.appendage_count_min < 0 || dist.appendage_count_max < dist.appendage_count_min ||
      dist.link_count_min < 1 || dist.link_count_max < dist.link_count_min)
    throw Error("InvalidSpec", "malformed spec distribution");

  uint64_t s = split_seed(master_seed, static_cast<uint64_t>(index));
  Rng rng(split_seed(s, 0));
  CharacterSpec spec;
  spec.seed = split_seed(s, 1);
  spec.body_template = dist.body_template;
  spec.points_per_unit_area = dist.points_per_unit_area;
  spec.noise_sigma = dist.noise_sigma;

  int count = dist.appendage_count_min +
              static_cast<int>(rng.uniform_index(
                  static_cast<uint64_t>(dist.appendage_count_max - dist.appendage_count_min + 1)));
  for (int i = 0; i < count; ++i) {
    AppendageSpec a;
    a.kind = static_cast<AppendageKind>(rng.uniform_index(3));
    a.attach_joint = a.kind == AppendageKind::ChainHair ? "head" : "root_hips";
    a.link_count = dist.link_count_min +
                   static_cast<int>(rng.uniform_index(
                       static_cast<uint64_t>(dist.link_count_max - dist.link_count_min + 1)));
    a.link_length = rng.uniform(dist.link_length_min, dist.link_length_max);
    a.radius = rng.uniform(dist.radius_min, dist.radius_max);
    spec.appendages.push_back(std::move(a));
  }
  return spec;
}

namespace {

json spec_to_json(const CharacterSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["body_template"] = to_string(spec.body_template);
  j["points_per_unit_area"] = spec.points_per_unit_area;
  j["noise_sigma"] = spec.noise_sigma;
  j["appendages"] = json::array();
  for (const auto& a : spec.appendages)
    j["appendages"].push_back({{"kind", to_string(a.kind)},
                               {"attach_joint", a.attach_joint},
                               {"link_count", a.link_count},
                               {"link_length", a.link_length},
                               {"radius", a.radius}});
  return j;
}

}  // namespace

std::vector<ManifestEntry> generate_dataset(const DatasetConfig& config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw Error("IoError", "cannot create dataset dir: " + config.out_dir);

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < config.count; ++i) {
    CharacterSpec spec = sample_spec(config.dist, config.seed, i);
    CharacterSample sample = generate_character(spec);

    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03d", i);
    fs::path dir = fs::path(config.out_dir) / name;
    fs::create_directories(dir, ec);
    if (ec) throw Error("IoError", "cannot create sample dir: " + dir.string());

    save_cloud_ply(sample.cloud, (dir / "cloud.ply").string());
    save_rig_json(sample.skeleton, sample.skinning, sample.joint_names,
                  (dir / "rig.json").string());
    {
      std::ofstream f(dir / "spec.json");
      f << spec_to_json(spec).dump(2) << "\n";
    }

    entries.push_back({name, spec.seed, sample.skeleton.size(),
                       sample.skeleton.body_count()});
  }

  json manifest;
  manifest["count"] = config.count;
  manifest["seed"] = config.seed;
  manifest["samples"] = json::array();
  for (const auto& e : entries)
    manifest["samples"].push_back({{"path", e.path},
                                   {"seed", e.seed},
                                   {"joint_count", e.joint_count},
                                   {"body_joint_count", e.body_joint_count}});
  std::ofstream f(fs::path(config.out_dir) / "manifest.json");
  if (!f) throw Error("IoError", "cannot write manifest in " + config.out_dir);
  f << manifest.dump(2) << "\n";
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::string& dir) {
  std::ifstream f(std::filesystem::path(dir) / "manifest.json");
  if (!f) throw Error("IoError", "cannot open manifest in " + dir);
  json manifest = json::parse(f, nullptr, /*allow_exceptions=*/true);
  std::vector<ManifestEntry> entries;
  for (const auto& e : manifest.at("samples"))
    entries.push_back({e.at("path").get<std::string>(), e.at("seed").get<uint64_t>(),
                       e.at("joint_count").get<int>(), e.at("body_joint_count").get<int>()});
  return entries;
}

Rig load_sample(const std::string& dir, const ManifestEntry& entry) {
  namespace fs = std::filesystem;
  fs::path base = fs::path(dir) / entry.path;
  Rig rig;
  rig.cloud = load_cloud_ply((base / "cloud.ply").string());
  RigData data = load_rig_json((base / "rig.json").string());
  rig.skeleton = std::move(data.skeleton);
  rig.skinning = std::move(data.skinning);
  rig.joint_names = std::move(data.joint_names);
  return rig;
}

}  // namespace gsrig
