#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "drt/math.hpp"
#include "drt/trace.hpp"

namespace drt {

// Pinhole camera. Camera space looks down -z with y up; the transform maps
// camera space to world space and must be rigid.
struct Camera {
  Mat4 c2w = Mat4::identity();
  double fov_x = degrees_to_radians(60.0);
  int width = 128;
  int height = 128;
};

inline void check_camera(const Camera& cam) {
  check_config(cam.width > 0 && cam.height > 0, "camera resolution must be positive");
  check_config(cam.fov_x > 0.0 && cam.fov_x < kPi, "camera fov must lie in (0, pi)");
  check_config(rotation_orthonormality_error(cam.c2w) < 1e-5,
               "camera rotation block is not orthonormal");
}

inline double focal_pixels(const Camera& cam) {
  return 0.5 * cam.width / std::tan(0.5 * cam.fov_x);
}

// Pixel rectangle plus optional per-pixel sub-pixel offsets (row-major over
// the crop; empty means pixel centers).
struct CropSample {
  int u0 = 0, v0 = 0;
  int width = 0, height = 0;
  std::vector<std::array<double, 2>> jitter;

  size_t pixel_count() const { return size_t(width) * size_t(height); }
};

inline CropSample full_frame(const Camera& cam) {
  CropSample crop;
  crop.width = cam.width;
  crop.height = cam.height;
  return crop;
}

inline void check_crop(const Camera& cam, const CropSample& crop) {
  check_config(crop.width > 0 && crop.height > 0, "crop must be non-empty");
  check_config(crop.u0 >= 0 && crop.v0 >= 0 && crop.u0 + crop.width <= cam.width &&
                   crop.v0 + crop.height <= cam.height,
               "crop exceeds the image bounds");
  check_config(crop.jitter.empty() || crop.jitter.size() == crop.pixel_count(),
               "jitter table size does not match the crop");
}

// World-space ray through one pixel of the crop (row-major index i).
inline Ray pixel_ray(const Camera& cam, const CropSample& crop, size_t i) {
  int u = crop.u0 + int(i % size_t(crop.width));
  int v = crop.v0 + int(i / size_t(crop.width));
  double jx = 0.5, jy = 0.5;
  if (!crop.jitter.empty()) {
    jx = crop.jitter[i][0];
    jy = crop.jitter[i][1];
  }
  double f = focal_pixels(cam);
  Vec3d dir_cam{double(u) + jx - 0.5 * cam.width,
                0.5 * cam.height - (double(v) + jy),
                -f};
  Ray ray;
  ray.o = cam.c2w.translation();
  ray.d = cam.c2w.rotate(normalize(dir_cam));
  return ray;
}

inline std::vector<Ray> generate_rays(const Camera& cam, const CropSample& crop) {
  check_camera(cam);
  check_crop(cam, crop);
  std::vector<Ray> rays(crop.pixel_count());
  for (size_t i = 0; i < rays.size(); ++i) rays[i] = pixel_ray(cam, crop, i);
  return rays;
}

// Projects a world point to continuous pixel coordinates; false if the point
// is not in front of the camera.
inline bool project_point(const Camera& cam, const Vec3d& x, double& u, double& v) {
  Vec3d p = cam.c2w.rigid_inverse().transform(x);
  if (p.z >= -1e-12) return false;
  double f = focal_pixels(cam);
  u = f * (p.x / -p.z) + 0.5 * cam.width;
  v = 0.5 * cam.height - f * (p.y / -p.z);
  return true;
}

// Camera placed on a sphere around `target`, looking at it, y up where
// possible.
inline Camera look_at_camera(const Vec3d& eye, const Vec3d& target, double fov_x, int width,
                             int height, const Vec3d& up = {0, 1, 0}) {
  Vec3d forward = normalize(target - eye);  // camera -z
  Vec3d right = cross(forward, up);
  double rl = length(right);
  if (rl < 1e-8) {
    right = cross(forward, Vec3d{1, 0, 0});
    rl = length(right);
  }
  right = right / rl;
  Vec3d true_up = cross(right, forward);
  Camera cam;
  cam.fov_x = fov_x;
  cam.width = width;
  cam.height = height;
  for (int r = 0; r < 3; ++r) {
    cam.c2w(r, 0) = right[r];
    cam.c2w(r, 1) = true_up[r];
    cam.c2w(r, 2) = -forward[r];
    cam.c2w(r, 3) = eye[r];
  }
  return cam;
}

}  // namespace drt
