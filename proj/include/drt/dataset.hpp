#pragma once

#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "drt/camera.hpp"
#include "drt/image.hpp"
#include "drt/integrator.hpp"
#include "drt/json_util.hpp"
#include "drt/light.hpp"
#include "drt/png_io.hpp"
#include "drt/scene.hpp"
#include "drt/threading.hpp"

namespace drt {

// One posed view: linear-RGB image, binary mask, camera, and which entry of
// the dataset's light list illuminated it.
struct Frame {
  Image image;  // width x height x 3, linear RGB
  Image mask;   // width x height x 1, values in {0, 1}
  Camera camera;
  int light_index = 0;
  std::string file_path;  // image location relative to the dataset root
};

struct Dataset {
  std::vector<Frame> frames;
  std::vector<PointLight> lights;  // empty when lighting must be learned
  bool has_light_metadata = false;
  Vec3d center{0.0, 0.0, 0.0};  // auto-fit scene bounding sphere
  double radius = 1.0;
  double fov_x = 0.0;
  int width = 0;
  int height = 0;
};

namespace detail {

inline Vec3d solve3x3(const double a[3][3], const Vec3d& b, bool& ok) {
  double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
               a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
               a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  if (std::abs(det) < 1e-12) {
    ok = false;
    return {0, 0, 0};
  }
  ok = true;
  auto det3 = [](double m00, double m01, double m02, double m10, double m11, double m12,
                 double m20, double m21, double m22) {
    return m00 * (m11 * m22 - m12 * m21) - m01 * (m10 * m22 - m12 * m20) +
           m02 * (m10 * m21 - m11 * m20);
  };
  double x = det3(b.x, a[0][1], a[0][2], b.y, a[1][1], a[1][2], b.z, a[2][1], a[2][2]);
  double y = det3(a[0][0], b.x, a[0][2], a[1][0], b.y, a[1][2], a[2][0], b.z, a[2][2]);
  double z = det3(a[0][0], a[0][1], b.x, a[1][0], a[1][1], b.y, a[2][0], a[2][1], b.z);
  return Vec3d{x, y, z} / det;
}

}  // namespace detail

// Least-squares intersection of the cameras' principal rays: the point that
// minimizes summed squared distance to every optical axis. Falls back to a
// step along the mean axis when the rays are (near-)parallel.
inline Vec3d look_at_centroid(const std::vector<Camera>& cams) {
  check_config(!cams.empty(), "look_at_centroid needs at least one camera");
  double a[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  Vec3d b{0, 0, 0};
  Vec3d mean_o{0, 0, 0};
  Vec3d mean_d{0, 0, 0};
  for (const Camera& cam : cams) {
    Vec3d o = cam.c2w.translation();
    Vec3d d = cam.c2w.rotate({0.0, 0.0, -1.0});
    double dv[3] = {d.x, d.y, d.z};
    double ov[3] = {o.x, o.y, o.z};
    double bb[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        double p = (r == c ? 1.0 : 0.0) - dv[r] * dv[c];
        a[r][c] += p;
        bb[r] += p * ov[c];
      }
    }
    b += Vec3d{bb[0], bb[1], bb[2]};
    mean_o += o;
    mean_d += d;
  }
  bool ok = false;
  Vec3d x = detail::solve3x3(a, b, ok);
  if (ok) return x;
  mean_o = mean_o / double(cams.size());
  double len = length(mean_d);
  return len > 1e-9 ? mean_o + mean_d / len : mean_o;
}

// Approximate minimum enclosing sphere (iterative recentering toward the
// farthest point). The returned radius always covers every input point.
inline void enclosing_sphere(const std::vector<Vec3d>& pts, Vec3d& center, double& radius) {
  check_config(!pts.empty(), "enclosing_sphere needs at least one point");
  center = {0, 0, 0};
  for (const Vec3d& p : pts) center += p;
  center = center / double(pts.size());
  for (int k = 1; k <= 2000; ++k) {
    double best = -1.0;
    Vec3d far_pt = center;
    for (const Vec3d& p : pts) {
      double d2 = length_sq(p - center);
      if (d2 > best) {
        best = d2;
        far_pt = p;
      }
    }
    center += (far_pt - center) * (1.0 / double(k + 1));
  }
  radius = 0.0;
  for (const Vec3d& p : pts) radius = std::max(radius, length(p - center));
}

// Scene bounds from the capture rig alone: camera positions pulled halfway
// toward the shared look-at point, then wrapped in a sphere.
inline void fit_bounding_sphere(const std::vector<Camera>& cams, Vec3d& center,
                                double& radius) {
  Vec3d target = look_at_centroid(cams);
  std::vector<Vec3d> pulled;
  pulled.reserve(cams.size());
  for (const Camera& cam : cams)
    pulled.push_back(target + (cam.c2w.translation() - target) * 0.5);
  enclosing_sphere(pulled, center, radius);
  if (radius < 1e-6) radius = 1.0;
}

namespace detail {

inline Mat4 parse_transform(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4)
    throw ParseError(where + ": must be a 4x4 row-major array");
  Mat4 m = Mat4::identity();
  for (int r = 0; r < 4; ++r) {
    const nlohmann::json& row = v[size_t(r)];
    if (!row.is_array() || row.size() != 4)
      throw ParseError(where + "[" + std::to_string(r) + "]: must hold 4 numbers");
    for (int c = 0; c < 4; ++c) {
      if (!row[size_t(c)].is_number())
        throw ParseError(where + "[" + std::to_string(r) + "]: must hold 4 numbers");
      m(r, c) = row[size_t(c)].get<double>();
    }
  }
  return m;
}

}  // namespace detail

// Reads the per-frame light metadata file: a JSON array of
// {light_position: [x,y,z], intensity: [r,g,b]} entries.
inline std::vector<PointLight> load_lights_file(const std::filesystem::path& path) {
  nlohmann::json j = detail::load_json_file(path);
  if (!j.is_array()) throw ParseError(path.string() + ": expected a JSON array");
  std::vector<PointLight> lights;
  for (size_t i = 0; i < j.size(); ++i) {
    std::string where = path.filename().string() + "[" + std::to_string(i) + "]";
    PointLight l;
    l.position = detail::require_vec3(j[i], "light_position", where);
    l.intensity = detail::require_vec3(j[i], "intensity", where);
    check_config(l.intensity.x >= 0 && l.intensity.y >= 0 && l.intensity.z >= 0,
                 where + ": intensity must be non-negative");
    lights.push_back(l);
  }
  return lights;
}

// Loads a posed multi-view dataset from `root`:
//   transforms.json  manifest {fov_x, z_forward?, frames: [{file_path,
//                    transform_matrix (4x4 row-major camera-to-world),
//                    light_index?}]}
//   lights.json      optional light metadata; absent => learned lighting
//   <file_path>      PNG images, sRGB; alpha doubles as the mask
//   masks/<file_path> optional explicit masks (take priority over alpha)
inline Dataset load_dataset(const std::string& root, int workers = 1) {
  namespace fs = std::filesystem;
  fs::path rootp(root);
  fs::path manifest_path = rootp / "transforms.json";
  nlohmann::json j = detail::load_json_file(manifest_path);
  const std::string where = "transforms.json";

  Dataset ds;
  ds.fov_x = detail::require_number(j, "fov_x", where);
  check_config(ds.fov_x > 0.0 && ds.fov_x < kPi, where + ": fov_x out of range");
  bool z_forward = false;
  if (j.contains("z_forward")) {
    if (!j.at("z_forward").is_boolean())
      throw ParseError(where + ": field 'z_forward' must be a boolean");
    z_forward = j.at("z_forward").get<bool>();
  }

  const nlohmann::json& frames = detail::require_field(j, "frames", where);
  if (!frames.is_array() || frames.empty())
    throw ParseError(where + ": field 'frames' must be a non-empty array");

  fs::path lights_path = rootp / "lights.json";
  if (fs::exists(lights_path)) {
    ds.lights = load_lights_file(lights_path);
    ds.has_light_metadata = true;
  }

  ds.frames.resize(frames.size());
  for (size_t i = 0; i < frames.size(); ++i) {
    std::string fw = where + ": frames[" + std::to_string(i) + "]";
    const nlohmann::json& fj = frames[i];
    Frame& frame = ds.frames[i];

    const nlohmann::json& fp = detail::require_field(fj, "file_path", fw);
    if (!fp.is_string()) throw ParseError(fw + ": field 'file_path' must be a string");
    frame.file_path = fp.get<std::string>();

    Mat4 c2w = detail::parse_transform(
        detail::require_field(fj, "transform_matrix", fw), fw + ".transform_matrix");
    if (z_forward) {
      // Stored convention looks down +z with y down; flip both axes to reach
      // the internal -z-forward / y-up frame.
      for (int r = 0; r < 3; ++r) {
        c2w(r, 1) = -c2w(r, 1);
        c2w(r, 2) = -c2w(r, 2);
      }
    }
    double rot_err = rotation_orthonormality_error(c2w);
    check_config(rot_err <= 1e-5,
                 fw + ": transform_matrix rotation block is not orthonormal (error " +
                     std::to_string(rot_err) + ")");
    frame.camera.c2w = c2w;
    frame.camera.fov_x = ds.fov_x;

    if (fj.contains("light_index")) {
      const nlohmann::json& li = fj.at("light_index");
      if (!li.is_number_integer())
        throw ParseError(fw + ": field 'light_index' must be an integer");
      frame.light_index = li.get<int>();
      check_config(ds.has_light_metadata,
                   fw + ": light_index given but lights.json is absent");
      check_config(frame.light_index >= 0 && frame.light_index < int(ds.lights.size()),
                   fw + ": light_index out of range");
    }
  }

  // Decode frames in parallel; each frame is independent, errors are
  // collected and the first one rethrown.
  std::vector<std::exception_ptr> errors(size_t(std::max(workers, 1)));
  parallel_for_workers(int64_t(ds.frames.size()), workers,
                       [&](int worker, int64_t begin, int64_t end) {
    try {
      for (int64_t fi = begin; fi < end; ++fi) {
        Frame& frame = ds.frames[size_t(fi)];
        Image raw = read_png((rootp / frame.file_path).string());

        frame.image = Image(raw.width, raw.height, 3);
        for (int p = 0; p < raw.width * raw.height; ++p)
          for (int c = 0; c < 3; ++c)
            frame.image.data[size_t(p) * 3 + c] = srgb_decode(
                raw.data[size_t(p) * size_t(raw.channels) +
                         size_t(raw.channels >= 3 ? c : 0)]);

        fs::path mask_path = rootp / "masks" / frame.file_path;
        frame.mask = Image(raw.width, raw.height, 1);
        if (fs::exists(mask_path)) {
          Image m = read_png(mask_path.string());
          check_config(m.width == raw.width && m.height == raw.height,
                       mask_path.string() + ": mask size differs from its image");
          for (int p = 0; p < m.width * m.height; ++p)
            frame.mask.data[size_t(p)] =
                m.data[size_t(p) * size_t(m.channels)] > 0.5 ? 1.0 : 0.0;
        } else if (raw.channels == 4 || raw.channels == 2) {
          int ac = raw.channels - 1;
          for (int p = 0; p < raw.width * raw.height; ++p)
            frame.mask.data[size_t(p)] =
                raw.data[size_t(p) * size_t(raw.channels) + size_t(ac)] > 0.5 ? 1.0 : 0.0;
        } else {
          throw ConfigError(frame.file_path +
                            ": no mask file and the image has no alpha channel");
        }
      }
    } catch (...) {
      errors[size_t(worker)] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ds.width = ds.frames[0].image.width;
  ds.height = ds.frames[0].image.height;
  std::vector<Camera> cams;
  for (Frame& frame : ds.frames) {
    check_config(frame.image.width == ds.width && frame.image.height == ds.height,
                 frame.file_path + ": frame resolution differs from the rest");
    frame.camera.width = ds.width;
    frame.camera.height = ds.height;
    check_camera(frame.camera);
    cams.push_back(frame.camera);
  }
  fit_bounding_sphere(cams, ds.center, ds.radius);
  return ds;
}

// Generation settings for save_synthetic. `light_index` assigns one light per
// camera (empty means light 0 everywhere).
struct SynthConfig {
  RenderConfig render;  // defaults: direct integrator, hard shadows
  std::vector<int> light_index;
  std::string image_dir = "train";
  bool write_lights = true;  // off: withhold the light metadata from the dataset
};

// Renders ground-truth frames for the given cameras and writes a loadable
// dataset: RGBA PNGs (alpha = coverage), explicit binary masks, the pose
// manifest, and light metadata. Deterministic for fixed inputs.
inline void save_synthetic(Scene& scene, const std::vector<Camera>& cams,
                           const std::vector<PointLight>& lights, const std::string& root,
                           const SynthConfig& synth = {}) {
  namespace fs = std::filesystem;
  check_config(!cams.empty(), "save_synthetic needs at least one camera");
  check_config(!lights.empty(), "save_synthetic needs at least one light");
  check_config(synth.light_index.empty() || synth.light_index.size() == cams.size(),
               "light_index list must match the camera list");
  for (int li : synth.light_index)
    check_config(li >= 0 && li < int(lights.size()), "light_index out of range");
  for (const Camera& cam : cams) {
    check_camera(cam);
    check_config(cam.width == cams[0].width && cam.height == cams[0].height &&
                     cam.fov_x == cams[0].fov_x,
                 "all synthetic cameras must share resolution and field of view");
  }

  fs::path rootp(root);
  std::error_code ec;
  fs::create_directories(rootp / synth.image_dir, ec);
  fs::create_directories(rootp / "masks" / synth.image_dir, ec);

  scene.lights = lights;
  nlohmann::json manifest;
  manifest["fov_x"] = cams[0].fov_x;
  manifest["frames"] = nlohmann::json::array();

  for (size_t i = 0; i < cams.size(); ++i) {
    RenderConfig cfg = synth.render;
    cfg.light_index = synth.light_index.empty() ? 0 : synth.light_index[i];
    Image rgba = render_image(scene, cams[i], cfg);

    Image mask(rgba.width, rgba.height, 1);
    for (int p = 0; p < rgba.width * rgba.height; ++p)
      mask.data[size_t(p)] = rgba.data[size_t(p) * 4 + 3] > 0.5 ? 1.0 : 0.0;

    std::string rel =
        synth.image_dir + "/r_" + std::to_string(i) + ".png";
    write_png((rootp / rel).string(), rgba, /*encode_srgb=*/true);
    write_png((rootp / "masks" / rel).string(), mask, /*encode_srgb=*/false);

    nlohmann::json fj;
    fj["file_path"] = rel;
    fj["light_index"] = cfg.light_index;
    auto rows = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      auto row = nlohmann::json::array();
      for (int c = 0; c < 4; ++c) row.push_back(cams[i].c2w(r, c));
      rows.push_back(row);
    }
    fj["transform_matrix"] = rows;
    manifest["frames"].push_back(fj);
  }

  nlohmann::json lj = nlohmann::json::array();
  for (const PointLight& l : lights) {
    nlohmann::json e;
    e["light_position"] = {l.position.x, l.position.y, l.position.z};
    e["intensity"] = {l.intensity.x, l.intensity.y, l.intensity.z};
    lj.push_back(e);
  }

  auto write_text = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  };
  write_text(rootp / "transforms.json", manifest.dump(2) + "\n");
  if (synth.write_lights) write_text(rootp / "lights.json", lj.dump(2) + "\n");
}

// Cameras on a constant-elevation ring around `target`, all looking inward.
// Elevation is measured toward +z (the up direction of the toy scenes).
inline std::vector<Camera> make_ring_cameras(int count, double ring_radius,
                                             double elevation, const Vec3d& target,
                                             double fov_x, int width, int height,
                                             double azimuth_offset = 0.0) {
  check_config(count >= 1, "ring needs at least one camera");
  check_config(ring_radius > 0.0, "ring radius must be positive");
  std::vector<Camera> cams;
  cams.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    double az = azimuth_offset + 2.0 * kPi * double(i) / double(count);
    Vec3d eye = target + Vec3d{std::cos(az) * std::cos(elevation),
                               std::sin(az) * std::cos(elevation),
                               std::sin(elevation)} *
                             ring_radius;
    cams.push_back(look_at_camera(eye, target, fov_x, width, height, {0.0, 0.0, 1.0}));
  }
  return cams;
}

}  // namespace drt
