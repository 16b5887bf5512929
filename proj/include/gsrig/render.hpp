#pragma once

#include "gsrig/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace gsrig {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> data;  // RGB, row-major, top row first

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}

  unsigned char* px(int x, int y) {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const unsigned char* px(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// Canonical condition views. The character is modeled facing +x with z up,
// so Front looks along -x at the face.
enum class View { Front, Back, Left, Right };

const char* to_string(View v);

// Orthographic camera given by its view frame; pixels span
// [-half_extent, half_extent]^2 around `center` in the (right, up) plane.
struct OrthoCamera {
  Vec3 forward = Vec3(-1, 0, 0);
  Vec3 up = Vec3(0, 0, 1);
  Vec3 right = Vec3(0, 1, 0);
  Vec3 center = Vec3::Zero();
  double half_extent = 0.6;
};

OrthoCamera canonical_camera(View view, double half_extent = 0.6,
                             const Vec3& center = Vec3::Zero());

// Painter's-algorithm splatting: back-to-front by view depth (ties broken
// by index), each Gaussian composited as its projected elliptical
// footprint with alpha = opacity * exp(-0.5 * Mahalanobis^2) over a white
// background. Deterministic; res < 8 throws BadResolution.
Image render_orthographic(const GaussianCloud& cloud, const OrthoCamera& camera, int res);

Image render_view(const GaussianCloud& cloud, View view, int res,
                  double half_extent = 0.6);

// The four condition views in order front, back, left, right.
std::array<Image, 4> render_canonical_views(const GaussianCloud& cloud, int res = 64,
                                            double half_extent = 0.6);

void save_ppm(const Image& image, const std::string& path);
bool png_supported();
void save_png(const Image& image, const std::string& path);  // needs zlib
// Dispatches on the file extension (.ppm / .png).
void save_image(const Image& image, const std::string& path);
Image load_ppm(const std::string& path);

struct AnimationOptions {
  View view = View::Front;
  int resolution = 256;
  double half_extent = 0.8;
  bool write_ply = false;       // also dump the deformed cloud per frame
  std::string image_format = "ppm";
};

// Renders one frame per pose (frame_%05d.<ext>), writes an animation.json
// manifest, and returns the manifest's relative file names.
std::vector<std::string> export_animation(const Rig& rig, const std::vector<Pose>& poses,
                                          const std::string& out_dir,
                                          const AnimationOptions& options = {});

}  // namespace gsrig
