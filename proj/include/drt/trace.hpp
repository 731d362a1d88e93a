#pragma once

#include <cstdint>

#include "drt/rng.hpp"
#include "drt/sdf.hpp"

namespace drt {

struct Ray {
  Vec3d o;
  Vec3d d;  // unit length
  double t_near = 0.0;
  double t_far = kInf;
};

inline void check_ray(const Ray& r) {
  check_usage(std::fabs(length(r.d) - 1.0) <= 1e-6, "ray direction must be unit length");
  check_usage(r.t_near >= 0.0 && r.t_near < r.t_far, "ray needs 0 <= t_near < t_far");
}

struct Hit {
  double t = 0.0;
  Vec3d x{};
  Vec3d n{};
  bool valid_normal = false;
};

struct TraceResult {
  bool hit = false;
  bool converged = true;  // false when the step budget ran out
  Hit h{};
  int iterations = 0;
};

struct TraceConfig {
  double hit_eps = 1e-4;
  int max_iters = 128;
  double step_scale = 0.9;
  int refine_iters = 3;
};

// Sphere tracing with steps scaled by the sketch's Lipschitz bound, halved
// again when the learned residual is active (it carries no distance
// certificate). Sign changes are bracketed and bisected, so overshoot
// degrades into a slower, not a wrong, answer. Generic over the field model
// so edited (wrapped) fields trace through the same code.
template <class Model>
TraceResult sphere_trace(const Model& model, const double* params,
                         const typename Model::EvalCache& cache, const Ray& ray,
                         const TraceConfig& cfg = {}) {
  check_ray(ray);
  TraceResult res;
  double scale = cfg.step_scale / cache.lipschitz;
  if (model.residual_gate() != 0.0) scale *= 0.5;

  auto eval = [&](double t) { return model.evaluate_cached(cache, params, ray.o + ray.d * t); };

  auto finish = [&](double t) {
    res.hit = true;
    res.h.t = t;
    res.h.x = ray.o + ray.d * t;
    Vec3d n;
    res.h.valid_normal = model.normal(params, nullptr, res.h.x, n);
    if (res.h.valid_normal) res.h.n = n;
  };

  double t = ray.t_near;
  double t_prev = t;
  for (int it = 0; it < cfg.max_iters; ++it) {
    ++res.iterations;
    double s = eval(t);
    if (std::fabs(s) <= cfg.hit_eps) {
      for (int r = 0; r < cfg.refine_iters; ++r) {
        double sr = eval(t);
        if (std::fabs(sr) <= cfg.hit_eps * 0.25) break;
        t += sr * scale;
      }
      finish(t);
      // A surface needs an interior behind it. Fields that only graze the
      // epsilon band without ever going negative (a solid subtracted from
      // itself leaves such a shell) are stepped over instead of hit.
      if (res.h.valid_normal) {
        double probe = model.evaluate_cached(
            cache, params, res.h.x - res.h.n * (4.0 * cfg.hit_eps));
        if (probe > 0.0) {
          double along = std::max(0.05, std::fabs(dot(ray.d, res.h.n)));
          res.hit = false;
          res.h = Hit{};
          t += 8.0 * cfg.hit_eps / along;
          t_prev = t;
          if (t > ray.t_far) return res;
          continue;
        }
      }
      return res;
    }
    if (s < 0.0) {
      // Overshot into the interior: bisect the bracketing interval.
      double lo = t_prev, hi = t;
      for (int b = 0; b < 48; ++b) {
        double mid = 0.5 * (lo + hi);
        double sm = eval(mid);
        if (std::fabs(sm) <= cfg.hit_eps) {
          finish(mid);
          return res;
        }
        (sm > 0.0 ? lo : hi) = mid;
      }
      finish(0.5 * (lo + hi));
      return res;
    }
    t_prev = t;
    t += s * scale;
    if (t > ray.t_far) return res;  // clean miss
  }
  res.converged = false;  // budget exhausted: reported as a miss
  return res;
}

// ---------------------------------------------------------------------------
// Silhouette estimate: squashed minimum SDF along the ray. Evaluation uses
// the hard minimum over stratified samples; training uses a soft minimum so
// gradients reach every near-minimal sample.
// ---------------------------------------------------------------------------
struct SilhouetteConfig {
  int samples = 64;
  double alpha = 50.0;   // squash sharpness on the min value
  double beta = 100.0;   // soft-min temperature (training path)
  bool jitter = false;   // stratified jitter; off = midpoint rule
};

inline double silhouette_sample_t(const Ray& ray, const SilhouetteConfig& cfg, int j,
                                  Rng* rng) {
  double xi = (cfg.jitter && rng) ? rng->next_double() : 0.5;
  return ray.t_near + (ray.t_far - ray.t_near) * ((j + xi) / cfg.samples);
}

template <class Model>
double silhouette_estimate(const Model& model, const double* params,
                           const typename Model::EvalCache& cache, const Ray& ray,
                           const SilhouetteConfig& cfg = {}, Rng* rng = nullptr) {
  check_ray(ray);
  check_usage(std::isfinite(ray.t_far), "silhouette sampling needs a finite ray segment");
  double m = kInf;
  for (int j = 0; j < cfg.samples; ++j) {
    double t = silhouette_sample_t(ray, cfg, j, rng);
    m = std::min(m, model.evaluate_cached(cache, params, ray.o + ray.d * t));
  }
  return sigmoid(-cfg.alpha * m);
}

// Double-precision twin of silhouette_soft below: identical sample positions
// and soft-min arithmetic, so a recorded estimate and the tape's value agree
// bit-for-bit. Used to seed per-pixel backward passes consistently.
template <class Model>
double silhouette_soft_value(const Model& model, const double* params,
                             const typename Model::EvalCache& cache, const Ray& ray,
                             const SilhouetteConfig& cfg = {}, Rng* rng = nullptr) {
  check_ray(ray);
  check_usage(std::isfinite(ray.t_far), "silhouette sampling needs a finite ray segment");
  std::vector<double> v(size_t(cfg.samples));
  double m0 = kInf;
  for (int j = 0; j < cfg.samples; ++j) {
    double t = silhouette_sample_t(ray, cfg, j, rng);
    v[size_t(j)] = model.evaluate_cached(cache, params, ray.o + ray.d * t);
    m0 = std::min(m0, v[size_t(j)]);
  }
  double sum = 0.0;
  for (double vj : v) sum += std::exp((m0 - vj) * cfg.beta);
  double msoft = m0 - std::log(sum) * (1.0 / cfg.beta);
  return sigmoid(msoft * (-cfg.alpha));
}

// Soft-min variant recorded on the tape. Sample positions must match the ones
// the caller used for any cached evaluation (same jitter stream).
inline Var silhouette_soft(const SdfModel& model, const double* params, Tape* tape,
                           const Ray& ray, const SilhouetteConfig& cfg, Rng* rng = nullptr) {
  check_ray(ray);
  check_usage(std::isfinite(ray.t_far), "silhouette sampling needs a finite ray segment");
  auto loaded = model.load<Var>(params, tape);
  std::vector<Var> v(size_t(cfg.samples));
  double m0 = kInf;
  for (int j = 0; j < cfg.samples; ++j) {
    double t = silhouette_sample_t(ray, cfg, j, rng);
    Vec3<Var> x{Var(ray.o.x + ray.d.x * t), Var(ray.o.y + ray.d.y * t),
                Var(ray.o.z + ray.d.z * t)};
    v[size_t(j)] = model.evaluate_loaded(loaded, params, tape, x);
    m0 = std::min(m0, v[size_t(j)].val);
  }
  Var sum(0.0);
  for (const Var& vj : v) sum = sum + exp((Var(m0) - vj) * cfg.beta);
  Var msoft = Var(m0) - log(sum) * (1.0 / cfg.beta);
  return sigmoid(msoft * (-cfg.alpha));
}

// Intersects a ray with a ball; returns false when the ray misses. Used to
// clip silhouette sampling to the scene's bounding sphere.
inline bool clip_to_sphere(const Vec3d& center, double radius, Ray& ray) {
  Vec3d oc = ray.o - center;
  double b = dot(oc, ray.d);
  double c = dot(oc, oc) - radius * radius;
  double disc = b * b - c;
  if (disc <= 0.0) return false;
  double root = std::sqrt(disc);
  double t0 = -b - root, t1 = -b + root;
  if (t1 <= ray.t_near || t0 >= ray.t_far) return false;
  ray.t_near = std::max(ray.t_near, t0);
  ray.t_far = std::min(ray.t_far, t1);
  return ray.t_near < ray.t_far;
}

}  // namespace drt
