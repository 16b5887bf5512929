#include "gsrig/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gsrig {

using nlohmann::json;

namespace {

void write_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(float));
}

float read_f32(std::istream& is) {
  float v = 0.f;
  is.read(reinterpret_cast<char*>(&v), sizeof(float));
  return v;
}

uint8_t to_u8(double c) {
  return static_cast<uint8_t>(std::clamp(std::lround(c * 255.0), 0l, 255l));
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("IoError", "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error("ParseError", path + ": " + e.what());
  }
  return j;
}

void save_json_file(const json& j, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("IoError", "cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

}  // namespace

void save_cloud_ply(const GaussianCloud& cloud, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("IoError", "cannot open " + path + " for writing");
  const int n = cloud.size();
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << n << "\n";
  for (const char* p : {"x", "y", "z", "scale_0", "scale_1", "scale_2",
                        "rot_0", "rot_1", "rot_2", "rot_3"})
    os << "property float " << p << "\n";
  for (const char* p : {"red", "green", "blue"}) os << "property uchar " << p << "\n";
  os << "property float opacity\n";
  os << "end_header\n";
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) write_f32(os, static_cast<float>(cloud.means(i, c)));
    for (int c = 0; c < 3; ++c) write_f32(os, static_cast<float>(cloud.scales(i, c)));
    const Quat& q = cloud.orientations[static_cast<size_t>(i)];
    write_f32(os, static_cast<float>(q.w()));
    write_f32(os, static_cast<float>(q.x()));
    write_f32(os, static_cast<float>(q.y()));
    write_f32(os, static_cast<float>(q.z()));
    for (int c = 0; c < 3; ++c) os.put(static_cast<char>(to_u8(cloud.colors(i, c))));
    write_f32(os, static_cast<float>(cloud.opacities[i]));
  }
  if (!os) throw Error("IoError", "write failed for " + path);
}

GaussianCloud load_cloud_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("IoError", "cannot open " + path);

  std::string line;
  std::getline(is, line);
  if (line != "ply") throw Error("ParseError", path + ": not a PLY file");
  int n = -1;
  std::vector<std::pair<std::string, std::string>> props;  // (type, name)
  bool binary_le = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string what;
      ls >> what >> n;
      if (what != "vertex") throw Error("ParseError", path + ": unexpected element " + what);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.emplace_back(type, name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw Error("ParseError", path + ": expected binary_little_endian");
  if (n < 0) throw Error("ParseError", path + ": missing vertex element");

  GaussianCloud cloud;
  cloud.means.resize(n, 3);
  cloud.scales.resize(n, 3);
  cloud.orientations.assign(static_cast<size_t>(n), Quat::Identity());
  cloud.colors.resize(n, 3);
  cloud.opacities.resize(n);
  cloud.scales.setOnes();
  cloud.colors.setZero();
  cloud.opacities.setOnes();

  for (int i = 0; i < n; ++i) {
    double rot[4] = {1, 0, 0, 0};
    for (const auto& [type, name] : props) {
      double v = 0.0;
      if (type == "float") {
        v = read_f32(is);
      } else if (type == "uchar") {
        v = static_cast<double>(static_cast<uint8_t>(is.get())) / 255.0;
      } else if (type == "double") {
        double d;
        is.read(reinterpret_cast<char*>(&d), sizeof(double));
        v = d;
      } else {
        throw Error("ParseError", path + ": unsupported property type " + type);
      }
      if (name == "x") cloud.means(i, 0) = v;
      else if (name == "y") cloud.means(i, 1) = v;
      else if (name == "z") cloud.means(i, 2) = v;
      else if (name == "scale_0") cloud.scales(i, 0) = v;
      else if (name == "scale_1") cloud.scales(i, 1) = v;
      else if (name == "scale_2") cloud.scales(i, 2) = v;
      else if (name == "rot_0") rot[0] = v;
      else if (name == "rot_1") rot[1] = v;
      else if (name == "rot_2") rot[2] = v;
      else if (name == "rot_3") rot[3] = v;
      else if (name == "red") cloud.colors(i, 0) = v;
      else if (name == "green") cloud.colors(i, 1) = v;
      else if (name == "blue") cloud.colors(i, 2) = v;
      else if (name == "opacity") cloud.opacities[i] = v;
      // unknown properties are read and dropped
    }
    cloud.orientations[static_cast<size_t>(i)] = Quat(rot[0], rot[1], rot[2], rot[3]).normalized();
  }
  if (!is) throw Error("ParseError", path + ": truncated vertex data");
  return cloud;
}

void save_rig_json(const Skeleton& skeleton, const SkinningMatrix& skinning,
                   const std::vector<std::string>& joint_names, const std::string& path,
                   const RigJsonOptions& options) {
  json j;
  const int m = skeleton.size();
  json joints = json::array();
  for (int i = 0; i < m; ++i)
    joints.push_back({skeleton.joints(i, 0), skeleton.joints(i, 1), skeleton.joints(i, 2)});
  j["joints"] = std::move(joints);
  j["parents"] = skeleton.parents;
  json groups = json::array();
  for (auto g : skeleton.groups) groups.push_back(to_string(g));
  j["groups"] = std::move(groups);
  if (!joint_names.empty()) j["names"] = joint_names;

  const int n = skinning.points();
  if (options.dense) {
    json values = json::array();
    for (int i = 0; i < n; ++i) {
      json row = json::array();
      for (int c = 0; c < skinning.joints(); ++c) row.push_back(skinning.weights(i, c));
      values.push_back(std::move(row));
    }
    j["skinning"] = {{"format", "dense"}, {"values", std::move(values)}};
  } else {
    int k = std::min(options.topk, skinning.joints());
    json indices = json::array();
    json values = json::array();
    std::vector<int> order(static_cast<size_t>(skinning.joints()));
    for (int i = 0; i < n; ++i) {
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        double wa = skinning.weights(i, a), wb = skinning.weights(i, b);
        return wa != wb ? wa > wb : a < b;
      });
      double sum = 0.0;
      for (int t = 0; t < k; ++t) sum += skinning.weights(i, order[static_cast<size_t>(t)]);
      if (sum <= 0.0) sum = 1.0;
      json idx_row = json::array();
      json val_row = json::array();
      for (int t = 0; t < k; ++t) {
        idx_row.push_back(order[static_cast<size_t>(t)]);
        val_row.push_back(skinning.weights(i, order[static_cast<size_t>(t)]) / sum);
      }
      indices.push_back(std::move(idx_row));
      values.push_back(std::move(val_row));
    }
    j["skinning"] = {{"format", "sparse_topk"},
                     {"k", k},
                     {"indices", std::move(indices)},
                     {"values", std::move(values)}};
  }
  save_json_file(j, path);
}

RigData load_rig_json(const std::string& path) {
  json j = load_json_file(path);
  RigData rig;
  const auto& joints = j.at("joints");
  const int m = static_cast<int>(joints.size());
  rig.skeleton.joints.resize(m, 3);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < 3; ++c) rig.skeleton.joints(i, c) = joints[i][c].get<double>();
  rig.skeleton.parents = j.at("parents").get<std::vector<int>>();
  for (const auto& g : j.at("groups"))
    rig.skeleton.groups.push_back(g.get<std::string>() == "body" ? JointGroup::Body
                                                                 : JointGroup::Other);
  if (j.contains("names")) rig.joint_names = j["names"].get<std::vector<std::string>>();

  const auto& sk = j.at("skinning");
  std::string format = sk.at("format").get<std::string>();
  if (format == "dense") {
    const auto& values = sk.at("values");
    const int n = static_cast<int>(values.size());
    rig.skinning.weights.resize(n, m);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < m; ++c) rig.skinning.weights(i, c) = values[i][c].get<double>();
  } else if (format == "sparse_topk") {
    const auto& indices = sk.at("indices");
    const auto& values = sk.at("values");
    const int n = static_cast<int>(indices.size());
    rig.skinning.weights = Eigen::MatrixXd::Zero(n, m);
    for (int i = 0; i < n; ++i)
      for (size_t t = 0; t < indices[i].size(); ++t)
        rig.skinning.weights(i, indices[i][t].get<int>()) += values[i][t].get<double>();
  } else {
    throw Error("ParseError", path + ": unknown skinning format " + format);
  }
  // Renormalize so reload always yields exact simplex rows.
  for (int i = 0; i < rig.skinning.points(); ++i) {
    double sum = rig.skinning.weights.row(i).sum();
    if (sum > 0.0) rig.skinning.weights.row(i) /= sum;
  }
  return rig;
}

void save_poses_json(const std::vector<Pose>& poses, const std::string& path) {
  json j = json::array();
  for (const auto& pose : poses) {
    json frame;
    frame["root_translation"] = {pose.root_translation[0], pose.root_translation[1],
                                 pose.root_translation[2]};
    json rots = json::array();
    for (const auto& q : pose.joint_rotations) rots.push_back({q.w(), q.x(), q.y(), q.z()});
    frame["rotations"] = std::move(rots);
    j.push_back(std::move(frame));
  }
  save_json_file(j, path);
}

std::vector<Pose> load_poses_json(const std::string& path) {
  json j = load_json_file(path);
  std::vector<Pose> poses;
  for (const auto& frame : j) {
    Pose pose;
    const auto& t = frame.at("root_translation");
    pose.root_translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    for (const auto& r : frame.at("rotations"))
      pose.joint_rotations.emplace_back(r[0].get<double>(), r[1].get<double>(),
                                        r[2].get<double>(), r[3].get<double>());
    poses.push_back(std::move(pose));
  }
  return poses;
}

}  // namespace gsrig
