#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drt/mlp.hpp"
#include "drt/scalar.hpp"
#include "drt/trace.hpp"

namespace drt {

// Incident-light sample at a shading point: direction toward the light,
// incident radiance already attenuated, and the distance to the emitter
// (infinite for the learned field, which has no explicit source).
template <class S>
struct LightSampleT {
  Vec3<S> wi;
  Vec3<S> radiance;
  double distance = kInf;
};

using LightSample = LightSampleT<double>;

struct PointLight {
  Vec3d position{0.0, 0.0, 2.0};
  Vec3d intensity{1.0, 1.0, 1.0};  // radiant intensity, per steradian
};

template <class S>
LightSampleT<S> sample_point_light(const PointLight& light, const Vec3<S>& x) {
  Vec3<S> to_light = Vec3<S>(light.position) - x;
  S d2 = length_sq(to_light);
  double d = std::sqrt(value_of(d2));
  check_usage(d >= 1e-6, "shading point coincides with the light");
  LightSampleT<S> out;
  out.wi = to_light / sqrt(d2);
  out.radiance = Vec3<S>(light.intensity) / d2;
  out.distance = d;
  return out;
}

// ---------------------------------------------------------------------------
// Learned light field: position -> one dominant incident direction plus RGB
// intensity. Direction comes from normalized logits with a fixed fallback
// when they vanish; intensity is squared raw output, so a zero MLP emits
// exactly nothing.
// ---------------------------------------------------------------------------
struct LearnedLightConfig {
  MlpConfig mlp = {{3, 64, 64, 6}, Activation::Softplus, 4, false};
};

class LearnedLightField {
 public:
  void build(ParamStore& store, const LearnedLightConfig& cfg,
             const std::string& name = "light.field") {
    check_config(cfg.mlp.layers.front() == 3 && cfg.mlp.layers.back() == 6,
                 "light-field MLP must map position to direction logits + RGB");
    cfg_ = cfg;
    mlp_.build(store, name, cfg.mlp);
  }
  void init(ParamStore& store, Rng& rng) { mlp_.init(store, rng); }

  void set_scene_frame(const Vec3d& center, double radius) {
    check_config(radius > 0.0, "scene radius must be positive");
    center_ = center;
    radius_ = radius;
  }

  const Mlp& mlp() const { return mlp_; }

  template <class S>
  LightSampleT<S> sample(const double* params, Tape* tape, const Vec3<S>& x) const {
    S in[3] = {(x.x - center_.x) * (1.0 / radius_), (x.y - center_.y) * (1.0 / radius_),
               (x.z - center_.z) * (1.0 / radius_)};
    S out[6];
    if constexpr (std::is_same_v<S, double>) {
      mlp_.forward(params, in, out);
    } else {
      mlp_.forward(params, in, out, tape);
    }
    LightSampleT<S> s;
    Vec3<S> logits{out[0], out[1], out[2]};
    double len = std::sqrt(value_of(length_sq(logits)));
    if (len < 1e-9) {
      s.wi = Vec3<S>(Vec3d{0.0, 0.0, 1.0});  // declared fallback
    } else {
      s.wi = normalize(logits);
    }
    s.radiance = {out[3] * out[3], out[4] * out[4], out[5] * out[5]};
    s.distance = kInf;
    return s;
  }

 private:
  LearnedLightConfig cfg_;
  Mlp mlp_;
  Vec3d center_{0.0, 0.0, 0.0};
  double radius_ = 1.0;
};

// ---------------------------------------------------------------------------
// Visibility.
// ---------------------------------------------------------------------------

// Hard binary visibility by shadow ray. The origin steps off the surface
// along the normal to escape the hit tolerance band.
template <class Model>
double hard_visibility(const Model& model, const double* params,
                       const typename Model::EvalCache& cache, const Vec3d& x,
                       const Vec3d& n, const Vec3d& wi, double distance,
                       const TraceConfig& cfg = {}) {
  double offset = 10.0 * cfg.hit_eps;
  Ray shadow;
  shadow.o = x + n * offset;
  shadow.d = wi;
  shadow.t_near = 0.0;
  shadow.t_far = std::isfinite(distance) ? std::max(distance - 2.0 * offset, 1e-9)
                                         : 2.0 * (model.scene_radius() + length(x)) + 10.0;
  auto res = sphere_trace(model, params, cache, shadow, cfg);
  return res.hit ? 0.0 : 1.0;
}

// Learned soft visibility: sigmoid MLP over (normalized position, direction).
struct OcclusionConfig {
  MlpConfig mlp = {{6, 64, 64, 1}, Activation::Softplus, 0, false};
};

class OcclusionField {
 public:
  void build(ParamStore& store, const OcclusionConfig& cfg,
             const std::string& name = "light.occlusion") {
    check_config(cfg.mlp.layers.front() == 6 && cfg.mlp.layers.back() == 1,
                 "occlusion MLP must map (position, direction) to one logit");
    cfg_ = cfg;
    mlp_.build(store, name, cfg.mlp);
  }
  void init(ParamStore& store, Rng& rng) { mlp_.init(store, rng); }

  void set_scene_frame(const Vec3d& center, double radius) {
    check_config(radius > 0.0, "scene radius must be positive");
    center_ = center;
    radius_ = radius;
  }

  const Mlp& mlp() const { return mlp_; }

  template <class S>
  S evaluate(const double* params, Tape* tape, const Vec3<S>& x, const Vec3<S>& wi) const {
    S in[6] = {(x.x - center_.x) * (1.0 / radius_), (x.y - center_.y) * (1.0 / radius_),
               (x.z - center_.z) * (1.0 / radius_), wi.x, wi.y, wi.z};
    S out;
    if constexpr (std::is_same_v<S, double>) {
      mlp_.forward(params, in, &out);
    } else {
      mlp_.forward(params, in, &out, tape);
    }
    return sigmoid(out);
  }

 private:
  OcclusionConfig cfg_;
  Mlp mlp_;
  Vec3d center_{0.0, 0.0, 0.0};
  double radius_ = 1.0;
};

}  // namespace drt
