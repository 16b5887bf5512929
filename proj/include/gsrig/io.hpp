#pragma once

#include "gsrig/types.hpp"

#include <string>
#include <vector>

namespace gsrig {

// Binary little-endian PLY with per-vertex x,y,z, scale_0..2, rot_0..3,
// red,green,blue, opacity. Positions/scales/rotations/opacity are float32,
// colors uchar, so generic splat/point tooling can open the files.
void save_cloud_ply(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_cloud_ply(const std::string& path);

// Rig JSON: joints, parents, groups, optional names, and the skinning
// block (sparse top-k by default, dense behind a flag). The cloud lives in
// its own PLY next to the rig file.
struct RigJsonOptions {
  int topk = 4;       // entries kept per row in sparse export
  bool dense = false; // export full rows instead
};

void save_rig_json(const Skeleton& skeleton, const SkinningMatrix& skinning,
                   const std::vector<std::string>& joint_names, const std::string& path,
                   const RigJsonOptions& options = {});

struct RigData {
  Skeleton skeleton;
  SkinningMatrix skinning;
  std::vector<std::string> joint_names;
};

RigData load_rig_json(const std::string& path);

// Pose files are JSON arrays of frames.
void save_poses_json(const std::vector<Pose>& poses, const std::string& path);
std::vector<Pose> load_poses_json(const std::string& path);

}  // namespace gsrig
