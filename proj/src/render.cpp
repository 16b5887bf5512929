#include "gsrig/render.hpp"

#include "gsrig/animation.hpp"
#include "gsrig/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace gsrig {

const char* to_string(View v) {
  switch (v) {
    case View::Front: return "front";
    case View::Back: return "back";
    case View::Left: return "left";
    case View::Right: return "right";
  }
  return "?";
}

OrthoCamera canonical_camera(View view, double half_extent, const Vec3& center) {
  OrthoCamera cam;
  cam.half_extent = half_extent;
  cam.center = center;
  cam.up = Vec3(0, 0, 1);
  switch (view) {
    case View::Front:  // camera on +x looking back at the face
      cam.forward = Vec3(-1, 0, 0);
      cam.right = Vec3(0, 1, 0);
      break;
    case View::Back:
      cam.forward = Vec3(1, 0, 0);
      cam.right = Vec3(0, -1, 0);
      break;
    case View::Left:  // camera on the character's left (+y)
      cam.forward = Vec3(0, -1, 0);
      cam.right = Vec3(-1, 0, 0);
      break;
    case View::Right:
      cam.forward = Vec3(0, 1, 0);
      cam.right = Vec3(1, 0, 0);
      break;
  }
  return cam;
}

Image render_orthographic(const GaussianCloud& cloud, const OrthoCamera& camera, int res) {
  if (res < 8) throw Error("BadResolution", "render resolution must be >= 8");
  const int n = cloud.size();

  // Pixel-center world coordinate along an axis: (i + 0.5 - res/2) * step.
  // This form negates exactly under i -> res-1-i, which is what makes
  // mirror views of mirror-symmetric clouds bit-equal.
  const double step = 2.0 * camera.half_extent / res;
  std::vector<double> coord(static_cast<size_t>(res));
  for (int i = 0; i < res; ++i)
    coord[static_cast<size_t>(i)] = (i + 0.5 - 0.5 * res) * step;

  struct Splat {
    double u, v, depth;
    double inv_a, inv_b, inv_c;  // inverse 2D covariance (a=uu, b=uv, c=vv)
    double ru, rv;               // footprint half-extents
    int index;
  };
  std::vector<Splat> splats;
  splats.reserve(static_cast<size_t>(n));

  for (int i = 0; i < n; ++i) {
    if (cloud.opacities[i] <= 0.0) continue;
    Vec3 p = cloud.means.row(i).transpose() - camera.center;
    Splat s;
    s.u = camera.right.dot(p);
    s.v = camera.up.dot(p);
    s.depth = camera.forward.dot(p);
    s.index = i;

    Eigen::Matrix3d sigma = cloud.covariance(i);
    double cuu = camera.right.dot(sigma * camera.right) + 1e-12;
    double cuv = camera.right.dot(sigma * camera.up);
    double cvv = camera.up.dot(sigma * camera.up) + 1e-12;
    double det = cuu * cvv - cuv * cuv;
    if (det <= 0.0) continue;  // numerically flat footprint: invisible
    s.inv_a = cvv / det;
    s.inv_b = -cuv / det;
    s.inv_c = cuu / det;
    s.ru = 3.5 * std::sqrt(cuu);
    s.rv = 3.5 * std::sqrt(cvv);
    splats.push_back(s);
  }

  // Painter's order: farthest (largest view depth) first, index ties
  // toward the smaller index.
  std::sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    if (a.depth != b.depth) return a.depth > b.depth;
    return a.index < b.index;
  });

  std::vector<double> buf(static_cast<size_t>(res) * res * 3, 1.0);  // white
  for (const Splat& s : splats) {
    // Contiguous pixel ranges covered by the footprint, found by symmetric
    // comparisons against the exact pixel-center coordinates.
    int c0 = res, c1 = -1, r0 = res, r1 = -1;
    for (int c = 0; c < res; ++c)
      if (std::abs(coord[static_cast<size_t>(c)] - s.u) <= s.ru) {
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    for (int r = 0; r < res; ++r)
      if (std::abs(coord[static_cast<size_t>(r)] - s.v) <= s.rv) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
      }
    if (c1 < c0 || r1 < r0) continue;

    const double cr = cloud.colors(s.index, 0);
    const double cg = cloud.colors(s.index, 1);
    const double cb = cloud.colors(s.index, 2);
    const double op = cloud.opacities[s.index];

    for (int r = r0; r <= r1; ++r) {
      // Row r is at v = coord[res-1-r]: top row has the largest v.
      double dv = coord[static_cast<size_t>(res - 1 - r)] - s.v;
      for (int c = c0; c <= c1; ++c) {
        double du = coord[static_cast<size_t>(c)] - s.u;
        double d2 = s.inv_a * du * du + 2.0 * s.inv_b * du * dv + s.inv_c * dv * dv;
        double alpha = op * std::exp(-0.5 * d2);
        if (alpha < 1.0 / 512.0) continue;
        double* px = &buf[(static_cast<size_t>(r) * res + c) * 3];
        px[0] = alpha * cr + (1.0 - alpha) * px[0];
        px[1] = alpha * cg + (1.0 - alpha) * px[1];
        px[2] = alpha * cb + (1.0 - alpha) * px[2];
      }
    }
  }

  Image img(res, res);
  for (size_t i = 0; i < buf.size(); ++i)
    img.data[i] = static_cast<unsigned char>(
        std::clamp(std::lround(buf[i] * 255.0), 0L, 255L));
  return img;
}

Image render_view(const GaussianCloud& cloud, View view, int res, double half_extent) {
  return render_orthographic(cloud, canonical_camera(view, half_extent), res);
}

std::array<Image, 4> render_canonical_views(const GaussianCloud& cloud, int res,
                                            double half_extent) {
  return {render_view(cloud, View::Front, res, half_extent),
          render_view(cloud, View::Back, res, half_extent),
          render_view(cloud, View::Left, res, half_extent),
          render_view(cloud, View::Right, res, half_extent)};
}

std::vector<std::string> export_animation(const Rig& rig, const std::vector<Pose>& poses,
                                          const std::string& out_dir,
                                          const AnimationOptions& options) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("IoError", "cannot create animation dir: " + out_dir);

  std::string ext = options.image_format;
  if (ext == "png" && !png_supported())
    throw Error("Unsupported", "png output requires zlib");

  std::vector<std::string> files;
  for (size_t f = 0; f < poses.size(); ++f) {
    auto transforms = forward_kinematics(rig.skeleton, poses[f]);
    GaussianCloud posed = lbs_deform(rig.cloud, rig.skinning, transforms, rig.skeleton.joints);

    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.%s", f, ext.c_str());
    Image img = render_view(posed, options.view, options.resolution, options.half_extent);
    save_image(img, (fs::path(out_dir) / name).string());
    files.emplace_back(name);

    if (options.write_ply) {
      char ply_name[32];
      std::snprintf(ply_name, sizeof(ply_name), "frame_%05zu.ply", f);
      save_cloud_ply(posed, (fs::path(out_dir) / ply_name).string());
      files.emplace_back(ply_name);
    }
  }

  nlohmann::json manifest;
  manifest["frame_count"] = poses.size();
  manifest["view"] = to_string(options.view);
  manifest["files"] = files;
  std::ofstream out(fs::path(out_dir) / "animation.json");
  if (!out) throw Error("IoError", "cannot write animation manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
  return files;
}

}  // namespace gsrig
