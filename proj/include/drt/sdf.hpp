#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drt/mlp.hpp"
#include "drt/param.hpp"
#include "drt/rng.hpp"
#include "drt/scalar.hpp"

namespace drt {

// ---------------------------------------------------------------------------
// Sphere sketch: N transformed spheres blended by a smooth minimum.
//   per-sphere distance  s_i(x) = ||A_i x - c_i|| - r_i
//   blend                m - (1/k) ln sum_i exp(-k (s_i - m)),  m = min_i s_i
// Radii and the smoothing sharpness k are stored through softplus so they
// stay positive under unconstrained optimization.
// ---------------------------------------------------------------------------
class SphereSketch {
 public:
  template <class S>
  struct Params {
    std::vector<Vec3<S>> c;
    std::vector<S> r;
    std::vector<Mat3<S>> A;
    S k;
  };

  void build(ParamStore& store, const std::string& name, int sphere_count) {
    check_config(sphere_count >= 1, "sphere sketch needs at least one sphere");
    n_ = sphere_count;
    c_ = store.add_segment(name + ".c", {sphere_count, 3});
    r_raw_ = store.add_segment(name + ".r_raw", {sphere_count});
    a_ = store.add_segment(name + ".A", {sphere_count, 3, 3});
    k_raw_ = store.add_segment(name + ".k_raw", {1});
  }

  // Centers uniform in the scene bounding ball, radii near init_radius,
  // transforms at identity.
  void init(ParamStore& store, Rng& rng, const Vec3d& center, double radius,
            double init_radius) {
    for (int i = 0; i < n_; ++i) {
      Vec3d u;
      do {
        u = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      } while (length_sq(u) > 1.0);
      Vec3d p = center + u * radius;
      store[c_ + 3 * i + 0] = p.x;
      store[c_ + 3 * i + 1] = p.y;
      store[c_ + 3 * i + 2] = p.z;
      store[r_raw_ + i] = softplus_inverse(init_radius);
      for (int j = 0; j < 9; ++j) store[a_ + 9 * i + j] = (j % 4 == 0) ? 1.0 : 0.0;
    }
    store[k_raw_] = softplus_inverse(smoothing_default_);
  }

  void set_smoothing(ParamStore& store, double k) const {
    check_config(k > 0.0, "smoothing sharpness must be positive");
    store[k_raw_] = softplus_inverse(k);
  }

  int sphere_count() const { return n_; }
  int64_t centers_offset() const { return c_; }
  int64_t radii_offset() const { return r_raw_; }
  int64_t transforms_offset() const { return a_; }
  int64_t smoothing_offset() const { return k_raw_; }

  template <class S>
  Params<S> load(const double* params, Tape* tape = nullptr) const {
    Params<S> out;
    out.c.resize(size_t(n_));
    out.r.resize(size_t(n_));
    out.A.resize(size_t(n_));
    for (int i = 0; i < n_; ++i) {
      out.c[size_t(i)] = param_vec3_as<S>(params, tape, c_ + 3 * i);
      out.r[size_t(i)] = softplus(param_as<S>(params, tape, r_raw_ + i));
      for (int j = 0; j < 9; ++j)
        out.A[size_t(i)].m[size_t(j)] = param_as<S>(params, tape, a_ + 9 * i + j);
    }
    out.k = softplus(param_as<S>(params, tape, k_raw_));
    return out;
  }

  // Largest ||A_i||_2 over spheres: the Lipschitz bound of the sketch along
  // any ray, used to scale marching steps conservatively.
  double max_transform_norm(const double* params) const {
    double best = 0.0;
    for (int i = 0; i < n_; ++i) {
      Mat3d A;
      for (int j = 0; j < 9; ++j) A.m[size_t(j)] = params[a_ + 9 * i + j];
      best = std::max(best, spectral_norm(A));
    }
    return best;
  }

 private:
  int n_ = 0;
  int64_t c_ = -1, r_raw_ = -1, a_ = -1, k_raw_ = -1;
  double smoothing_default_ = 32.0;
};

template <class S>
S sketch_sdf(const SphereSketch::Params<S>& P, const Vec3<S>& x) {
  const size_t n = P.c.size();
  std::vector<S> s(n);
  size_t arg = 0;
  for (size_t i = 0; i < n; ++i) {
    Vec3<S> q = mul(P.A[i], x) - P.c[i];
    s[i] = length(q) - P.r[i];
    if (value_of(s[i]) < value_of(s[arg])) arg = i;
  }
  if (n == 1) return s[0];
  S m = s[arg];
  S sum = S(0.0);
  for (size_t i = 0; i < n; ++i) sum = sum + exp((m - s[i]) * P.k);
  return m - log(sum) / P.k;
}

// ---------------------------------------------------------------------------
// Full signed distance model: sketch plus a gated MLP residual evaluated in
// normalized scene coordinates. Gate 0 bypasses the residual entirely, so the
// model equals the sketch bit-for-bit.
// ---------------------------------------------------------------------------
struct SdfModelConfig {
  int sphere_count = 64;
  double smoothing = 32.0;
  bool learn_smoothing = false;
  MlpConfig residual = {{3, 128, 128, 128, 1}, Activation::Softplus, 6, true};
  double init_sphere_radius = 0.1;
};

class SdfModel {
 public:
  void build(ParamStore& store, const SdfModelConfig& cfg, const std::string& name = "sdf") {
    cfg_ = cfg;
    sketch_.build(store, name + ".sketch", cfg.sphere_count);
    check_config(cfg.residual.layers.front() == 3 && cfg.residual.layers.back() == 1,
                 "SDF residual MLP must map 3 inputs to 1 output");
    residual_.build(store, name + ".residual", cfg.residual);
    if (!cfg.learn_smoothing) store.set_frozen(name + ".sketch.k_raw", true);
  }

  void init(ParamStore& store, Rng& rng) {
    sketch_.init(store, rng, center_, radius_, cfg_.init_sphere_radius * radius_);
    sketch_.set_smoothing(store, cfg_.smoothing);
    residual_.init(store, rng);
  }

  // Scene frame used both for sphere initialization and for normalizing the
  // residual's positional input.
  void set_scene_frame(const Vec3d& center, double radius) {
    check_config(radius > 0.0, "scene radius must be positive");
    center_ = center;
    radius_ = radius;
  }
  const Vec3d& scene_center() const { return center_; }
  double scene_radius() const { return radius_; }

  void set_residual_gate(double g) {
    check_config(g >= 0.0, "residual gate must be non-negative");
    gate_ = g;
  }
  double residual_gate() const { return gate_; }

  const SphereSketch& sketch() const { return sketch_; }
  const Mlp& residual() const { return residual_; }

  // Cached per-parameter-state data for tight marching loops.
  struct EvalCache {
    SphereSketch::Params<double> sketch;
    double lipschitz = 1.0;
  };

  EvalCache prepare(const double* params) const {
    EvalCache cache;
    cache.sketch = sketch_.load<double>(params);
    cache.lipschitz = std::max(1e-6, sketch_.max_transform_norm(params));
    return cache;
  }

  double evaluate_cached(const EvalCache& cache, const double* params, const Vec3d& x) const {
    double v = sketch_sdf(cache.sketch, x);
    if (gate_ != 0.0) v += gate_ * residual_value(params, nullptr, x);
    return v;
  }

  // Sketch parameters bridged once per tape so repeated evaluations (ray
  // sampling, hit refinement, normals) share the same leaves.
  template <class S>
  struct Loaded {
    SphereSketch::Params<S> sketch;
  };

  template <class S>
  Loaded<S> load(const double* params, Tape* tape) const {
    return {sketch_.load<S>(params, tape)};
  }

  template <class S>
  S evaluate_loaded(const Loaded<S>& loaded, const double* params, Tape* tape,
                    const Vec3<S>& x) const {
    S v = sketch_sdf(loaded.sketch, x);
    if (gate_ != 0.0) v = v + residual_value(params, tape, x) * gate_;
    return v;
  }

  template <class S>
  S evaluate(const double* params, Tape* tape, const Vec3<S>& x) const {
    auto loaded = load<S>(params, tape);
    return evaluate_loaded(loaded, params, tape, x);
  }

  // Normal as the normalized spatial gradient. Returns false (and leaves
  // `out` untouched) when the gradient degenerates.
  template <class T>
  bool normal(const double* params, Tape* tape, const Vec3<T>& x, Vec3<T>& out) const {
    auto xd = seed_position(x);
    Dual3<T> v = evaluate(params, tape, xd);
    Vec3<T> g = gradient_of(v);
    double len = std::sqrt(value_of(g.x) * value_of(g.x) + value_of(g.y) * value_of(g.y) +
                           value_of(g.z) * value_of(g.z));
    if (!(len > 1e-9)) return false;
    out = normalize(g);
    return true;
  }

 private:
  template <class S>
  S residual_value(const double* params, Tape* tape, const Vec3<S>& x) const {
    S in[3] = {(x.x - center_.x) * (1.0 / radius_), (x.y - center_.y) * (1.0 / radius_),
               (x.z - center_.z) * (1.0 / radius_)};
    S out;
    if constexpr (std::is_same_v<S, double>) {
      residual_.forward(params, in, &out);
    } else {
      residual_.forward(params, in, &out, tape);
    }
    return out;
  }

  SdfModelConfig cfg_;
  SphereSketch sketch_;
  Mlp residual_;
  Vec3d center_{0.0, 0.0, 0.0};
  double radius_ = 1.0;
  double gate_ = 0.0;
};

}  // namespace drt
