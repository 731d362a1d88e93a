#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "drt/bsdf.hpp"
#include "drt/light.hpp"
#include "drt/sdf.hpp"

namespace drt {

enum class LightingMode { Known, Learned };

struct SceneConfig {
  SdfModelConfig sdf;
  ReflectanceConfig reflectance;
  LearnedLightConfig light_field;
  OcclusionConfig occlusion;
  LightingMode lighting = LightingMode::Known;
  Vec3d center{0.0, 0.0, 0.0};
  double radius = 1.5;
};

// Everything a render or training step needs: one parameter store holding the
// geometry, reflectance, light-field, and occlusion segments (always all
// built, so checkpoints share one layout; unused parts stay frozen), plus the
// non-learned scene state (point lights, optional analytic BSDF override).
struct Scene {
  SceneConfig cfg;
  ParamStore store;
  SdfModel sdf;
  ReflectanceModel reflectance;
  LearnedLightField light_field;
  OcclusionField occlusion;

  std::vector<PointLight> lights;         // known-lighting mode, indexed per frame
  std::optional<AnalyticBsdf> analytic;   // when set, shades instead of the mixture

  // Editing hook: returns true and fills `out` when a spatial edit replaces
  // the BSDF at x; shading falls back to the scene's own model otherwise.
  std::function<bool(const Vec3d& x, const Vec3d& n, const Vec3d& wi, const Vec3d& wo,
                     Vec3d& out)>
      bsdf_override;

  void build(const SceneConfig& c) {
    cfg = c;
    sdf.build(store, c.sdf, "sdf");
    reflectance.build(store, c.reflectance, "bsdf");
    light_field.build(store, c.light_field, "light.field");
    occlusion.build(store, c.occlusion, "light.occlusion");
    set_frame(c.center, c.radius);
  }

  void init(Rng& rng) {
    sdf.init(store, rng);
    reflectance.init(store, rng);
    light_field.init(store, rng);
    occlusion.init(store, rng);
  }

  void set_frame(const Vec3d& center, double radius) {
    cfg.center = center;
    cfg.radius = radius;
    sdf.set_scene_frame(center, radius);
    reflectance.set_scene_frame(center, radius);
    light_field.set_scene_frame(center, radius);
    occlusion.set_scene_frame(center, radius);
  }

  const PointLight& light(int index) const {
    check_usage(!lights.empty(), "scene has no point lights");
    check_usage(index >= 0 && size_t(index) < lights.size(), "light index out of range");
    return lights[size_t(index)];
  }
};

// Writes an exact sphere into the sketch: center, radius, identity transform.
inline void set_sketch_sphere(Scene& scene, int i, const Vec3d& c, double r) {
  const auto& sk = scene.sdf.sketch();
  for (int j = 0; j < 3; ++j) scene.store[sk.centers_offset() + 3 * i + j] = c[j];
  scene.store[sk.radii_offset() + i] = softplus_inverse(r);
  for (int j = 0; j < 9; ++j)
    scene.store[sk.transforms_offset() + 9 * i + j] = (j % 4 == 0) ? 1.0 : 0.0;
}

// Analytic sphere list mirroring a reference scene; oracles intersect these
// exactly instead of marching the SDF.
struct AnalyticSphere {
  Vec3d center;
  double radius;
};

struct ReferenceScene {
  Scene scene;
  std::vector<AnalyticSphere> spheres;
};

// Named ground-truth scenes used for synthesis and closed-form oracles. The
// geometry is written straight into the sketch so the renderer and the
// analytic description agree up to the smooth-min blend.
inline ReferenceScene make_reference_scene(const std::string& name) {
  ReferenceScene ref;
  SceneConfig cfg;
  cfg.reflectance.basis_count = 4;
  cfg.reflectance.basis = {{3, 16, 3}, Activation::Softplus, 0, false};
  cfg.reflectance.weights = {{3, 16, 4}, Activation::Softplus, 2, false};
  cfg.light_field.mlp = {{3, 32, 32, 6}, Activation::Softplus, 2, false};
  cfg.occlusion.mlp = {{6, 32, 1}, Activation::Softplus, 0, false};
  cfg.sdf.residual = {{3, 32, 32, 1}, Activation::Softplus, 4, true};

  if (name == "sphere") {
    cfg.sdf.sphere_count = 1;
    cfg.center = {0, 0, 0};
    cfg.radius = 1.3;
    ref.scene.build(cfg);
    set_sketch_sphere(ref.scene, 0, {0, 0, 0}, 1.0);
    ref.spheres = {{{0, 0, 0}, 1.0}};
    ref.scene.analytic = AnalyticBsdf::lambertian({0.8, 0.8, 0.8});
    ref.scene.lights = {{{0.0, 0.0, 2.0}, {10.0, 10.0, 10.0}}};
  } else if (name == "two_spheres") {
    cfg.sdf.sphere_count = 2;
    cfg.sdf.smoothing = 32.0;
    cfg.center = {0, 0, 0};
    cfg.radius = 1.4;
    ref.scene.build(cfg);
    set_sketch_sphere(ref.scene, 0, {-0.45, 0.0, 0.0}, 0.55);
    set_sketch_sphere(ref.scene, 1, {0.5, 0.08, 0.05}, 0.42);
    ref.spheres = {{{-0.45, 0.0, 0.0}, 0.55}, {{0.5, 0.08, 0.05}, 0.42}};
    ref.scene.analytic = AnalyticBsdf::lambertian({0.65, 0.45, 0.3});
    ref.scene.lights = {{{1.5, 2.0, 2.5}, {40.0, 40.0, 40.0}}};
  } else if (name == "sphere_plane") {
    // A floor approximated by a huge sphere whose top is the plane z = -0.6.
    cfg.sdf.sphere_count = 2;
    cfg.sdf.smoothing = 2000.0;
    cfg.center = {0, 0, 0};
    cfg.radius = 2.0;
    ref.scene.build(cfg);
    set_sketch_sphere(ref.scene, 0, {0, 0, 0}, 0.5);
    set_sketch_sphere(ref.scene, 1, {0.0, 0.0, -40.6}, 40.0);
    ref.spheres = {{{0, 0, 0}, 0.5}, {{0.0, 0.0, -40.6}, 40.0}};
    ref.scene.analytic = AnalyticBsdf::lambertian({0.7, 0.7, 0.7});
    ref.scene.lights = {{{1.2, 0.6, 2.0}, {30.0, 30.0, 30.0}}};
  } else {
    throw ConfigError("unknown reference scene '" + name + "'");
  }
  ref.scene.sdf.sketch().set_smoothing(ref.scene.store, cfg.sdf.smoothing);
  return ref;
}

// Exact ray intersection against the analytic sphere list: nearest positive
// root across spheres, with the outward normal.
inline bool intersect_spheres(const std::vector<AnalyticSphere>& spheres, const Ray& ray,
                              double& t_out, Vec3d& n_out) {
  double best = kInf;
  Vec3d n{0, 0, 0};
  for (const auto& s : spheres) {
    Vec3d oc = ray.o - s.center;
    double b = dot(oc, ray.d);
    double c = length_sq(oc) - s.radius * s.radius;
    double disc = b * b - c;
    if (disc < 0.0) continue;
    double sq = std::sqrt(disc);
    for (double t : {-b - sq, -b + sq}) {
      if (t > ray.t_near && t < std::min(best, ray.t_far)) {
        best = t;
        n = normalize(ray.o + ray.d * t - s.center);
        break;
      }
    }
  }
  if (!std::isfinite(best)) return false;
  t_out = best;
  n_out = n;
  return true;
}

// True when the open segment from x toward the light is blocked by a sphere.
inline bool segment_occluded(const std::vector<AnalyticSphere>& spheres, const Vec3d& x,
                             const Vec3d& light_pos, double eps = 1e-6) {
  Vec3d to = light_pos - x;
  double d = length(to);
  Ray ray;
  ray.o = x;
  ray.d = to / d;
  ray.t_near = eps;
  ray.t_far = d - eps;
  double t;
  Vec3d n;
  return intersect_spheres(spheres, ray, t, n);
}

}  // namespace drt
