#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drt/mlp.hpp"
#include "drt/rng.hpp"
#include "drt/scalar.hpp"

namespace drt {

// Rusinkiewicz half/difference parameterization, reduced to the three cosines
// an isotropic BSDF consumes. Degenerate configurations (antipodal wi/wo, or
// a direction parallel to the half vector) fall back to cos_phi_d = 1 and are
// flagged rather than thrown, so shading can decide what to do per-sample.
template <class S>
struct RusinkAnglesT {
  S cos_theta_h{}, cos_theta_d{}, cos_phi_d{};
  bool degenerate_half = false;
  bool below_horizon = false;
};

using RusinkAngles = RusinkAnglesT<double>;

template <class S>
RusinkAnglesT<S> rusink_angles(const Vec3<S>& n, const Vec3<S>& wi, const Vec3<S>& wo) {
  RusinkAnglesT<S> out;
  Vec3<S> h_un = wi + wo;
  double h_len = std::sqrt(value_of(length_sq(h_un)));
  if (h_len < 1e-6) {
    out.degenerate_half = true;
    out.cos_theta_h = S(1.0);
    out.cos_theta_d = S(0.0);
    out.cos_phi_d = S(1.0);
    return out;
  }
  Vec3<S> h = normalize(h_un);
  out.cos_theta_h = dot(n, h);
  out.cos_theta_d = dot(wi, h);
  out.below_horizon =
      value_of(dot(n, wi)) < 0.0 || value_of(dot(n, wo)) < 0.0;

  // Difference azimuth: angle between n and wi after rejecting h.
  Vec3<S> a = n - h * dot(n, h);
  Vec3<S> b = wi - h * dot(wi, h);
  double la = std::sqrt(value_of(length_sq(a)));
  double lb = std::sqrt(value_of(length_sq(b)));
  if (la < 1e-6 || lb < 1e-6) {
    out.cos_phi_d = S(1.0);
  } else {
    S c = dot(a, b) / (length(a) * length(b));
    out.cos_phi_d = vmax(vmin(c, S(1.0)), S(-1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatially-varying mixture of learned basis BSDFs:
//   f(x, angles) = sum_i softmax(weight_mlp(x))_i * basis_i(angles)
// Each basis maps the three Rusinkiewicz cosines to RGB through a sigmoid
// scaled by a learnable positive gain, keeping outputs non-negative with
// unbounded reach.
// ---------------------------------------------------------------------------
struct ReflectanceConfig {
  int basis_count = 8;
  MlpConfig basis = {{3, 64, 64, 3}, Activation::Softplus, 0, false};
  MlpConfig weights = {{3, 64, 64, 8}, Activation::Softplus, 6, false};
};

class ReflectanceModel {
 public:
  void build(ParamStore& store, const ReflectanceConfig& cfg, const std::string& name = "bsdf") {
    check_config(cfg.basis_count >= 1, "mixture needs at least one basis");
    check_config(cfg.basis.layers.front() == 3 && cfg.basis.layers.back() == 3,
                 "basis MLP must map the 3 angle cosines to RGB");
    check_config(cfg.weights.layers.front() == 3, "weight MLP input must be a position");
    check_config(cfg.weights.layers.back() == cfg.basis_count,
                 "weight MLP output width must equal the basis count");
    cfg_ = cfg;
    bases_.resize(size_t(cfg.basis_count));
    gain_raw_.resize(size_t(cfg.basis_count));
    for (int i = 0; i < cfg.basis_count; ++i) {
      std::string base = name + ".basis" + std::to_string(i);
      bases_[size_t(i)].build(store, base, cfg.basis);
      gain_raw_[size_t(i)] = store.add_segment(base + ".gain_raw", {3});
    }
    weight_mlp_.build(store, name + ".weights", cfg.weights);
  }

  void init(ParamStore& store, Rng& rng) {
    for (size_t i = 0; i < bases_.size(); ++i) {
      bases_[i].init(store, rng);
      for (int c = 0; c < 3; ++c)
        store[gain_raw_[i] + c] = softplus_inverse(1.0);
    }
    weight_mlp_.init(store, rng);
  }

  void set_scene_frame(const Vec3d& center, double radius) {
    check_config(radius > 0.0, "scene radius must be positive");
    center_ = center;
    radius_ = radius;
  }

  int basis_count() const { return cfg_.basis_count; }
  const Mlp& weight_mlp() const { return weight_mlp_; }
  const Mlp& basis_mlp(int i) const { return bases_.at(size_t(i)); }
  int64_t gain_offset(int i) const { return gain_raw_.at(size_t(i)); }

  // Mixture weights at x (softmax over the weight MLP logits).
  template <class S>
  std::vector<S> weights_at(const double* params, Tape* tape, const Vec3<S>& x) const {
    S in[3] = {(x.x - center_.x) * (1.0 / radius_), (x.y - center_.y) * (1.0 / radius_),
               (x.z - center_.z) * (1.0 / radius_)};
    std::vector<S> logits(size_t(cfg_.basis_count));
    forward_any(weight_mlp_, params, in, logits.data(), tape);
    double m = value_of(logits[0]);
    for (const S& l : logits) m = std::max(m, value_of(l));
    std::vector<S> w(logits.size());
    S sum(0.0);
    for (size_t i = 0; i < logits.size(); ++i) {
      w[i] = exp(logits[i] - m);
      sum = sum + w[i];
    }
    for (auto& wi : w) wi = wi / sum;
    return w;
  }

  // One basis evaluated at the given angles.
  template <class S>
  Vec3<S> basis_value(const double* params, Tape* tape, int i,
                      const RusinkAnglesT<S>& angles) const {
    S in[3] = {angles.cos_theta_h, angles.cos_theta_d, angles.cos_phi_d};
    S raw[3];
    forward_any(bases_[size_t(i)], params, in, raw, tape);
    Vec3<S> out;
    for (int c = 0; c < 3; ++c) {
      S gain = softplus(param_as<S>(params, tape, gain_raw_[size_t(i)] + c));
      out[c] = sigmoid(raw[c]) * gain;
    }
    return out;
  }

  template <class S>
  Vec3<S> eval(const double* params, Tape* tape, const Vec3<S>& x,
               const RusinkAnglesT<S>& angles) const {
    auto w = weights_at(params, tape, x);
    Vec3<S> acc{S(0.0), S(0.0), S(0.0)};
    for (int i = 0; i < cfg_.basis_count; ++i) {
      Vec3<S> b = basis_value(params, tape, i, angles);
      acc += b * w[size_t(i)];
    }
    return acc;
  }

 private:
  template <class S>
  static void forward_any(const Mlp& mlp, const double* params, const S* in, S* out,
                          Tape* tape) {
    if constexpr (std::is_same_v<S, double>) {
      mlp.forward(params, in, out);
    } else {
      mlp.forward(params, in, out, tape);
    }
  }

  ReflectanceConfig cfg_;
  std::vector<Mlp> bases_;
  std::vector<int64_t> gain_raw_;
  Mlp weight_mlp_;
  Vec3d center_{0.0, 0.0, 0.0};
  double radius_ = 1.0;
};

// ---------------------------------------------------------------------------
// Analytic BSDFs for synthesis, oracles, and editing.
// ---------------------------------------------------------------------------
struct AnalyticBsdf {
  enum class Kind { Lambertian, Phong };
  Kind kind = Kind::Lambertian;
  Vec3d albedo{0.8, 0.8, 0.8};    // lambertian, and phong diffuse
  Vec3d specular{0.0, 0.0, 0.0};  // phong only
  double exponent = 32.0;         // phong only

  static AnalyticBsdf lambertian(const Vec3d& a) {
    AnalyticBsdf b;
    b.kind = Kind::Lambertian;
    b.albedo = a;
    return b;
  }
  static AnalyticBsdf phong(const Vec3d& diffuse, const Vec3d& spec, double exp_) {
    AnalyticBsdf b;
    b.kind = Kind::Phong;
    b.albedo = diffuse;
    b.specular = spec;
    b.exponent = exp_;
    return b;
  }
};

inline Vec3d reflect_about(const Vec3d& v, const Vec3d& n) {
  return n * (2.0 * dot(n, v)) - v;
}

inline Vec3d eval_analytic(const AnalyticBsdf& b, const Vec3d& n, const Vec3d& wi,
                           const Vec3d& wo) {
  Vec3d diffuse = b.albedo * (1.0 / kPi);
  if (b.kind == AnalyticBsdf::Kind::Lambertian) return diffuse;
  double c = std::max(0.0, dot(reflect_about(wi, n), wo));
  double lobe = c > 0.0 ? std::pow(c, b.exponent) : 0.0;
  return diffuse + b.specular * lobe;
}

// Cosine-weighted hemisphere sample about n; pdf = (n.w)/pi.
struct DirectionSample {
  Vec3d dir;
  double pdf;
};

inline DirectionSample sample_cosine_hemisphere(Rng& rng, const Vec3d& n) {
  double u1 = rng.next_double();
  double u2 = rng.next_double();
  double r = std::sqrt(u1);
  double phi = 2.0 * kPi * u2;
  double z = std::sqrt(1.0 - u1);
  Vec3d t, b;
  build_onb(n, t, b);
  Vec3d dir = t * (r * std::cos(phi)) + b * (r * std::sin(phi)) + n * z;
  return {normalize(dir), z / kPi};
}

}  // namespace drt
