#pragma once

#include <cstdint>

#include "drt/camera.hpp"
#include "drt/image.hpp"
#include "drt/scene.hpp"
#include "drt/threading.hpp"

namespace drt {

enum class IntegratorKind { Direct, Path, Normals, LightDirection, Silhouette };
enum class VisibilityMode { None, Hard, Learned };

struct RenderConfig {
  IntegratorKind integrator = IntegratorKind::Direct;
  VisibilityMode visibility = VisibilityMode::Hard;
  int path_depth = 1;
  int path_spp = 1;
  int light_index = 0;
  Vec3d background{0.0, 0.0, 0.0};
  double clamp_beta = 40.0;  // smooth clamp sharpness for the cosine factor
  TraceConfig trace;
  SilhouetteConfig silhouette;
  uint64_t seed = 0;
  bool jitter = false;  // sub-pixel jitter on primary rays
  int workers = 1;

  void validate() const {
    check_config(path_depth >= 1 && path_spp >= 1, "path depth and spp must be at least 1");
    check_config(clamp_beta > 0.0, "cosine clamp sharpness must be positive");
    check_config(workers >= 1, "worker count must be at least 1");
  }
};

// Single-sample direct-lighting term, generic over the scalar so training can
// differentiate through it: V * f * L_i * softclamp(w_i . n). The smooth
// clamp keeps below-horizon light at ~0 while leaving gradients alive at the
// shadow boundary. Degenerate half-vector configurations contribute nothing.
template <class S>
Vec3<S> shade_term(const Vec3<S>& f, const RusinkAnglesT<S>& angles,
                   const LightSampleT<S>& light, const Vec3<S>& n, const S& visibility,
                   double clamp_beta) {
  if (angles.degenerate_half) return {S(0.0), S(0.0), S(0.0)};
  S cl = softclamp(dot(light.wi, n), clamp_beta) * visibility;
  return {f.x * light.radiance.x * cl, f.y * light.radiance.y * cl,
          f.z * light.radiance.z * cl};
}

// Incident-light sample for the scene's lighting mode (double path).
inline LightSample sample_scene_light(const Scene& scene, const double* params,
                                      const Vec3d& x, int light_index) {
  if (scene.cfg.lighting == LightingMode::Learned)
    return scene.light_field.sample<double>(params, nullptr, x);
  return sample_point_light<double>(scene.light(light_index), x);
}

template <class Model>
double visibility_factor(const Scene& scene, const Model& model, const double* params,
                         const typename Model::EvalCache& cache, const Vec3d& x,
                         const Vec3d& n, const LightSample& light,
                         const RenderConfig& cfg) {
  switch (cfg.visibility) {
    case VisibilityMode::None:
      return 1.0;
    case VisibilityMode::Hard:
      return hard_visibility(model, params, cache, x, n, light.wi, light.distance,
                             cfg.trace);
    case VisibilityMode::Learned:
      return scene.occlusion.evaluate<double>(params, nullptr, x, light.wi);
  }
  return 1.0;
}

inline Vec3d eval_scene_bsdf(const Scene& scene, const double* params, const Vec3d& x,
                             const Vec3d& n, const Vec3d& wi, const Vec3d& wo,
                             const RusinkAngles& angles) {
  if (scene.bsdf_override) {
    Vec3d out;
    if (scene.bsdf_override(x, n, wi, wo, out)) return out;
  }
  if (scene.analytic) return eval_analytic(*scene.analytic, n, wi, wo);
  return scene.reflectance.eval<double>(params, nullptr, x, angles);
}

// One-bounce direct lighting at a converged hit.
template <class Model>
Vec3d shade_direct(const Scene& scene, const Model& model, const double* params,
                   const typename Model::EvalCache& cache, const Hit& hit, const Vec3d& wo,
                   const RenderConfig& cfg) {
  LightSample light = sample_scene_light(scene, params, hit.x, cfg.light_index);
  double V = visibility_factor(scene, model, params, cache, hit.x, hit.n, light, cfg);
  if (V == 0.0) return {0.0, 0.0, 0.0};
  auto angles = rusink_angles<double>(hit.n, light.wi, wo);
  Vec3d f = eval_scene_bsdf(scene, params, hit.x, hit.n, light.wi, wo, angles);
  return shade_term<double>(f, angles, light, hit.n, V, cfg.clamp_beta);
}

inline Vec3d shade_direct(const Scene& scene, const double* params,
                          const SdfModel::EvalCache& cache, const Hit& hit, const Vec3d& wo,
                          const RenderConfig& cfg) {
  return shade_direct(scene, scene.sdf, params, cache, hit, wo, cfg);
}

// Caps a ray to the scene's (doubled) bounding sphere; false means the ray
// cannot touch the scene at all.
inline bool clip_to_scene(const Scene& scene, Ray& ray) {
  return clip_to_sphere(scene.cfg.center, 2.0 * scene.cfg.radius, ray);
}

// Monte Carlo path trace with next-event estimation at every bounce and
// cosine-weighted continuation. Depth 1 reduces exactly to shade_direct.
template <class Model>
Vec3d trace_path(const Scene& scene, const Model& model, const double* params,
                 const typename Model::EvalCache& cache, Ray ray, int depth, Rng& rng,
                 const RenderConfig& cfg) {
  Vec3d L{0, 0, 0};
  Vec3d throughput{1, 1, 1};
  for (int bounce = 0; bounce < depth; ++bounce) {
    Ray clipped = ray;
    if (!clip_to_scene(scene, clipped)) break;
    auto res = sphere_trace(model, params, cache, clipped, cfg.trace);
    if (!res.hit || !res.h.valid_normal) break;
    Vec3d wo = ray.d * -1.0;
    Vec3d direct = shade_direct(scene, model, params, cache, res.h, wo, cfg);
    L += Vec3d{throughput.x * direct.x, throughput.y * direct.y, throughput.z * direct.z};
    if (bounce + 1 == depth) break;

    auto s = sample_cosine_hemisphere(rng, res.h.n);
    auto angles = rusink_angles<double>(res.h.n, s.dir, wo);
    if (angles.degenerate_half) break;
    Vec3d f = eval_scene_bsdf(scene, params, res.h.x, res.h.n, s.dir, wo, angles);
    double w = softclamp(dot(s.dir, res.h.n), cfg.clamp_beta) / s.pdf;
    throughput = {throughput.x * f.x * w, throughput.y * f.y * w, throughput.z * f.z * w};
    ray.o = res.h.x + res.h.n * (10.0 * cfg.trace.hit_eps);
    ray.d = s.dir;
    ray.t_near = 0.0;
    ray.t_far = kInf;
  }
  return L;
}

inline Vec3d trace_path(const Scene& scene, const double* params,
                        const SdfModel::EvalCache& cache, Ray ray, int depth, Rng& rng,
                        const RenderConfig& cfg) {
  return trace_path(scene, scene.sdf, params, cache, ray, depth, rng, cfg);
}

namespace detail {

// Stable per-pixel stream: keyed by the pixel's position in the full image so
// crops and full frames agree.
inline Rng pixel_rng(const RenderConfig& cfg, const Camera& cam, const CropSample& crop,
                     size_t i, uint64_t lane) {
  uint64_t u = uint64_t(crop.u0 + int(i % size_t(crop.width)));
  uint64_t v = uint64_t(crop.v0 + int(i / size_t(crop.width)));
  return Rng(cfg.seed, v * uint64_t(cam.width) + u, lane);
}

}  // namespace detail

// Renders a crop (or the full frame) to RGBA; alpha carries hit coverage, or
// the soft silhouette for the silhouette integrator. Misses keep the
// configured background with alpha 0.
template <class Model>
Image render_image(const Scene& scene, const Model& model, const Camera& cam,
                   const RenderConfig& cfg, const CropSample* crop_in = nullptr) {
  cfg.validate();
  check_camera(cam);
  CropSample crop = crop_in ? *crop_in : full_frame(cam);
  check_crop(cam, crop);

  const double* params = scene.store.values();
  typename Model::EvalCache cache = model.prepare(params);
  Image img(crop.width, crop.height, 4);

  parallel_for_workers(int64_t(crop.pixel_count()), cfg.workers,
                       [&](int, int64_t begin, int64_t end) {
    for (int64_t idx = begin; idx < end; ++idx) {
      size_t i = size_t(idx);
      int px = int(i % size_t(crop.width));
      int py = int(i / size_t(crop.width));

      CropSample one;
      one.u0 = crop.u0 + px;
      one.v0 = crop.v0 + py;
      one.width = one.height = 1;
      if (cfg.jitter) {
        Rng jr = detail::pixel_rng(cfg, cam, crop, i, 0);
        one.jitter.push_back({jr.next_double(), jr.next_double()});
      } else if (!crop.jitter.empty()) {
        one.jitter.push_back(crop.jitter[i]);
      }
      Ray ray = pixel_ray(cam, one, 0);

      Vec3d rgb = cfg.background;
      double alpha = 0.0;

      if (cfg.integrator == IntegratorKind::Silhouette) {
        Ray seg = ray;
        double value = 0.0;
        if (clip_to_scene(scene, seg))
          value = silhouette_estimate(model, params, cache, seg, cfg.silhouette);
        rgb = {value, value, value};
        alpha = value;
      } else if (cfg.integrator == IntegratorKind::Path) {
        Ray clipped = ray;
        if (clip_to_scene(scene, clipped)) {
          auto first = sphere_trace(model, params, cache, clipped, cfg.trace);
          alpha = first.hit ? 1.0 : 0.0;
        }
        Vec3d acc{0, 0, 0};
        for (int s = 0; s < cfg.path_spp; ++s) {
          Rng rng = detail::pixel_rng(cfg, cam, crop, i, uint64_t(s) + 1);
          acc += trace_path(scene, model, params, cache, ray, cfg.path_depth, rng, cfg);
        }
        acc = acc / double(cfg.path_spp);
        if (alpha > 0.0) rgb = acc;
      } else {
        Ray clipped = ray;
        if (clip_to_scene(scene, clipped)) {
          auto res = sphere_trace(model, params, cache, clipped, cfg.trace);
          if (res.hit && res.h.valid_normal) {
            alpha = 1.0;
            switch (cfg.integrator) {
              case IntegratorKind::Direct:
                rgb = shade_direct(scene, model, params, cache, res.h, ray.d * -1.0, cfg);
                break;
              case IntegratorKind::Normals:
                rgb = (res.h.n + Vec3d{1, 1, 1}) * 0.5;
                break;
              case IntegratorKind::LightDirection: {
                LightSample ls = sample_scene_light(scene, params, res.h.x, cfg.light_index);
                rgb = (ls.wi + Vec3d{1, 1, 1}) * 0.5;
                break;
              }
              default:
                break;
            }
          }
        }
      }

      img.at(px, py, 0) = rgb.x;
      img.at(px, py, 1) = rgb.y;
      img.at(px, py, 2) = rgb.z;
      img.at(px, py, 3) = alpha;
    }
  });
  return img;
}

inline Image render_image(const Scene& scene, const Camera& cam, const RenderConfig& cfg,
                          const CropSample* crop_in = nullptr) {
  return render_image(scene, scene.sdf, cam, cfg, crop_in);
}

}  // namespace drt
