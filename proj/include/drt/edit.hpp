#pragma once

#include <json.hpp>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "drt/bsdf.hpp"
#include "drt/json_util.hpp"
#include "drt/scene.hpp"
#include "drt/sdf.hpp"

namespace drt {

// Spatial predicate used by region-restricted edits.
struct EditRegion {
  enum class Kind { Halfspace, Ball };
  Kind kind = Kind::Halfspace;
  Vec3d normal{0, 0, 1};  // halfspace contains x with dot(normal, x) > offset
  double offset = 0.0;
  Vec3d center{0, 0, 0};  // ball
  double radius = 1.0;

  bool contains(const Vec3d& x) const {
    if (kind == Kind::Halfspace) return dot(normal, x) > offset;
    return length_sq(x - center) < radius * radius;
  }
};

// One step of an ordered SDF edit chain. Each edit wraps the field produced
// by the edits before it; `inner` holds the nested chain of a region edit.
struct SdfEdit {
  enum class Kind { Translate, Twist, Intersect, Subtract, Flatten, Region };
  enum class Other { Self, Sphere };

  Kind kind = Kind::Translate;

  Vec3d delta{0, 0, 0};  // translate

  Vec3d axis{0, 0, 1};  // twist axis (unit)
  double rate = 0.0;    // twist, radians per unit of height along the axis

  Other other = Other::Self;           // intersect / subtract operand
  AnalyticSphere sphere{{0, 0, 0}, 1.0};
  Vec3d other_offset{0, 0, 0};  // operand is evaluated at x - other_offset

  Vec3d plane_normal{0, 0, 1};  // flatten
  double plane_offset = 0.0;
  double plane_clamp = kInf;

  EditRegion region;           // region restriction
  std::vector<SdfEdit> inner;  // edits active inside the region

  // Worst-case gradient growth this edit adds, used to keep sphere tracing
  // conservative. `radius` is the scene bounding radius.
  double inflation(double radius) const {
    double f = kind == Kind::Twist ? 1.0 + std::abs(rate) * radius : 1.0;
    if (kind == Kind::Region)
      for (const SdfEdit& e : inner) f *= e.inflation(radius);
    return f;
  }

  static SdfEdit translate(const Vec3d& d) {
    SdfEdit e;
    e.kind = Kind::Translate;
    e.delta = d;
    return e;
  }
  static SdfEdit twist(const Vec3d& axis_, double rate_) {
    SdfEdit e;
    e.kind = Kind::Twist;
    e.axis = normalize(axis_);
    e.rate = rate_;
    return e;
  }
  static SdfEdit intersect_sphere(const AnalyticSphere& s) {
    SdfEdit e;
    e.kind = Kind::Intersect;
    e.other = Other::Sphere;
    e.sphere = s;
    return e;
  }
  static SdfEdit subtract_sphere(const AnalyticSphere& s) {
    SdfEdit e;
    e.kind = Kind::Subtract;
    e.other = Other::Sphere;
    e.sphere = s;
    return e;
  }
  static SdfEdit subtract_self(const Vec3d& offset = {0, 0, 0}) {
    SdfEdit e;
    e.kind = Kind::Subtract;
    e.other = Other::Self;
    e.other_offset = offset;
    return e;
  }
  static SdfEdit intersect_self(const Vec3d& offset = {0, 0, 0}) {
    SdfEdit e;
    e.kind = Kind::Intersect;
    e.other = Other::Self;
    e.other_offset = offset;
    return e;
  }
  static SdfEdit flatten(const Vec3d& n, double offset, double clamp = kInf) {
    SdfEdit e;
    e.kind = Kind::Flatten;
    e.plane_normal = normalize(n);
    e.plane_offset = offset;
    e.plane_clamp = clamp;
    return e;
  }
  static SdfEdit restrict_to(const EditRegion& r, std::vector<SdfEdit> inner_) {
    SdfEdit e;
    e.kind = Kind::Region;
    e.region = r;
    e.inner = std::move(inner_);
    return e;
  }
};

namespace detail {

inline Vec3d rotate_about(const Vec3d& v, const Vec3d& axis, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  return v * c + cross(axis, v) * s + axis * (dot(axis, v) * (1.0 - c));
}

}  // namespace detail

// Pure view over a trained SDF with an ordered edit chain applied. Satisfies
// the same evaluator interface the tracer templates over; parameters are
// never touched, and the cached Lipschitz bound absorbs each edit's declared
// inflation so conservative stepping still cannot overshoot.
class EditedSdfModel {
 public:
  EditedSdfModel(const SdfModel& base, std::vector<SdfEdit> edits)
      : base_(&base), edits_(std::move(edits)) {}

  struct EvalCache {
    SdfModel::EvalCache base;
    double lipschitz = 1.0;
  };

  EvalCache prepare(const double* params) const {
    EvalCache cache;
    cache.base = base_->prepare(params);
    cache.lipschitz = cache.base.lipschitz;
    for (const SdfEdit& e : edits_) {
      cache.lipschitz *= e.inflation(base_->scene_radius());
      // max-combinations can only bring in the (1-Lipschitz) operand field.
      cache.lipschitz = std::max(cache.lipschitz, 1.0);
    }
    return cache;
  }

  double evaluate_cached(const EvalCache& cache, const double* params, const Vec3d& x) const {
    return eval_chain(edits_, cache, params, x);
  }

  double residual_gate() const { return base_->residual_gate(); }
  double scene_radius() const { return base_->scene_radius(); }
  const Vec3d& scene_center() const { return base_->scene_center(); }
  const SdfModel& base() const { return *base_; }
  const std::vector<SdfEdit>& edits() const { return edits_; }

  // Central-difference normal of the edited field. Edits compose arbitrary
  // max/rotation chains, so the forward-mode path of the base model does not
  // apply; finite differences keep the wrapper fully generic. An empty chain
  // delegates so a no-op wrapper is indistinguishable from the base model.
  bool normal(const double* params, Tape* tape, const Vec3d& x, Vec3d& out) const {
    if (edits_.empty()) return base_->normal(params, tape, x, out);
    EvalCache cache = prepare(params);
    const double h = 1e-5;
    Vec3d g;
    for (int a = 0; a < 3; ++a) {
      Vec3d hi = x, lo = x;
      (&hi.x)[a] += h;
      (&lo.x)[a] -= h;
      (&g.x)[a] =
          (evaluate_cached(cache, params, hi) - evaluate_cached(cache, params, lo)) /
          (2.0 * h);
    }
    double len = length(g);
    if (!(len > 1e-9)) return false;
    out = g / len;
    return true;
  }

 private:
  double eval_base(const EvalCache& cache, const double* params, const Vec3d& x) const {
    return base_->evaluate_cached(cache.base, params, x);
  }

  double eval_other(const SdfEdit& e, const EvalCache& cache, const double* params,
                    const Vec3d& x) const {
    Vec3d q = x - e.other_offset;
    if (e.other == SdfEdit::Other::Sphere) return length(q - e.sphere.center) - e.sphere.radius;
    return eval_base(cache, params, q);
  }

  double eval_chain(const std::vector<SdfEdit>& chain, const EvalCache& cache,
                    const double* params, const Vec3d& x) const {
    return eval_upto(chain, chain.size(), cache, params, x);
  }

  // Field after the first `count` edits of `chain`, evaluated at x.
  double eval_upto(const std::vector<SdfEdit>& chain, size_t count, const EvalCache& cache,
                   const double* params, const Vec3d& x) const {
    if (count == 0) return eval_base(cache, params, x);
    const SdfEdit& e = chain[count - 1];
    switch (e.kind) {
      case SdfEdit::Kind::Translate:
        return eval_upto(chain, count - 1, cache, params, x - e.delta);
      case SdfEdit::Kind::Twist: {
        double angle = e.rate * dot(e.axis, x);
        return eval_upto(chain, count - 1, cache, params,
                         detail::rotate_about(x, e.axis, angle));
      }
      case SdfEdit::Kind::Intersect:
        return std::max(eval_upto(chain, count - 1, cache, params, x),
                        eval_other(e, cache, params, x));
      case SdfEdit::Kind::Subtract:
        return std::max(eval_upto(chain, count - 1, cache, params, x),
                        -eval_other(e, cache, params, x));
      case SdfEdit::Kind::Flatten:
        return std::max(eval_upto(chain, count - 1, cache, params, x),
                        std::min(dot(e.plane_normal, x) - e.plane_offset, e.plane_clamp));
      case SdfEdit::Kind::Region: {
        double outside = eval_upto(chain, count - 1, cache, params, x);
        if (!e.region.contains(x)) return outside;
        // The inner chain continues from the field built so far.
        std::vector<SdfEdit> merged(chain.begin(), chain.begin() + long(count) - 1);
        merged.insert(merged.end(), e.inner.begin(), e.inner.end());
        return eval_chain(merged, cache, params, x);
      }
    }
    return eval_base(cache, params, x);
  }

  const SdfModel* base_;
  std::vector<SdfEdit> edits_;
};

inline EditedSdfModel apply_sdf_edit(const SdfModel& model, std::vector<SdfEdit> edits) {
  return EditedSdfModel(model, std::move(edits));
}

// Spatial BSDF remapping: the first edit whose region covers x supplies the
// reflectance; otherwise the scene's own model shades the point.
struct BsdfEdit {
  enum class Kind { Region, Band, Checkerboard };
  Kind kind = Kind::Region;

  EditRegion region;    // Region
  Vec3d axis{0, 0, 1};  // Band: stripes perpendicular to this axis
  double period = 1.0;  // Band: stripe thickness
  double cell = 1.0;    // Checkerboard cell size

  AnalyticBsdf replacement = AnalyticBsdf::lambertian({0.8, 0.2, 0.1});
  // Optional learned replacement; overrides `replacement` when set.
  const ReflectanceModel* learned = nullptr;
  const double* learned_params = nullptr;

  bool covers(const Vec3d& x) const {
    switch (kind) {
      case Kind::Region:
        return region.contains(x);
      case Kind::Band:
        return (int64_t(std::floor(dot(axis, x) / period)) & 1) == 0;
      case Kind::Checkerboard: {
        int64_t p = int64_t(std::floor(x.x / cell)) + int64_t(std::floor(x.y / cell)) +
                    int64_t(std::floor(x.z / cell));
        return (p & 1) == 0;
      }
    }
    return false;
  }
};

inline bool apply_bsdf_edit(const std::vector<BsdfEdit>& edits, const Vec3d& x,
                            const Vec3d& n, const Vec3d& wi, const Vec3d& wo, Vec3d& out) {
  for (const BsdfEdit& e : edits) {
    if (!e.covers(x)) continue;
    if (e.learned) {
      auto angles = rusink_angles<double>(n, wi, wo);
      out = e.learned->eval<double>(e.learned_params, nullptr, x, angles);
    } else {
      out = eval_analytic(e.replacement, n, wi, wo);
    }
    return true;
  }
  return false;
}

// Routes the scene's shading through the edit list (first matching region
// wins, untouched points keep the trained model).
inline void install_bsdf_edits(Scene& scene, std::vector<BsdfEdit> edits) {
  if (edits.empty()) {
    scene.bsdf_override = nullptr;
    return;
  }
  scene.bsdf_override = [edits = std::move(edits)](const Vec3d& x, const Vec3d& n,
                                                   const Vec3d& wi, const Vec3d& wo,
                                                   Vec3d& out) {
    return apply_bsdf_edit(edits, x, n, wi, wo, out);
  };
}

// ---------------------------------------------------------------------------
// Declarative edit scripts: an ordered JSON list of {op, ...} objects mixing
// surface and reflectance edits. Example:
//   [
//     {"op": "translate", "delta": [0.2, 0, 0]},
//     {"op": "twist", "axis": [0, 0, 1], "rate": 0.8},
//     {"op": "subtract", "other": {"sphere": {"center": [0,0,0.8], "radius": 0.5}}},
//     {"op": "intersect", "other": "self", "offset": [0.3, 0, 0]},
//     {"op": "flatten", "normal": [0, 0, 1], "distance": 0.4},
//     {"op": "region", "halfspace": {"normal": [0,0,1], "offset": 0},
//      "edits": [{"op": "translate", "delta": [0.1, 0, 0]}]},
//     {"op": "bsdf_region", "ball": {"center": [0,0,0], "radius": 0.6},
//      "lambertian": [0.8, 0.2, 0.1]},
//     {"op": "bsdf_band", "axis": [0, 0, 1], "period": 0.25,
//      "phong": {"albedo": [0.7,0.3,0.1], "specular": [0.4,0.4,0.4], "exponent": 64}},
//     {"op": "bsdf_checkerboard", "cell": 0.5, "lambertian": [0.9, 0.5, 0.1]}
//   ]
// ---------------------------------------------------------------------------

struct EditScript {
  std::vector<SdfEdit> sdf;
  std::vector<BsdfEdit> bsdf;
};

namespace detail {

inline EditRegion parse_region(const nlohmann::json& j, const std::string& where) {
  EditRegion r;
  if (j.contains("halfspace")) {
    const nlohmann::json& h = j.at("halfspace");
    r.kind = EditRegion::Kind::Halfspace;
    r.normal = normalize(require_vec3(h, "normal", where + ".halfspace"));
    r.offset = require_number(h, "offset", where + ".halfspace");
  } else if (j.contains("ball")) {
    const nlohmann::json& b = j.at("ball");
    r.kind = EditRegion::Kind::Ball;
    r.center = require_vec3(b, "center", where + ".ball");
    r.radius = require_number(b, "radius", where + ".ball");
    check_config(r.radius > 0.0, where + ".ball: radius must be positive");
  } else {
    throw ParseError(where + ": needs a 'halfspace' or 'ball' region");
  }
  return r;
}

inline AnalyticBsdf parse_replacement(const nlohmann::json& j, const std::string& where) {
  if (j.contains("lambertian"))
    return AnalyticBsdf::lambertian(require_vec3(j, "lambertian", where));
  if (j.contains("phong")) {
    const nlohmann::json& p = j.at("phong");
    return AnalyticBsdf::phong(require_vec3(p, "albedo", where + ".phong"),
                               require_vec3(p, "specular", where + ".phong"),
                               require_number(p, "exponent", where + ".phong"));
  }
  throw ParseError(where + ": needs a 'lambertian' or 'phong' replacement");
}

inline void parse_other(SdfEdit& e, const nlohmann::json& j, const std::string& where) {
  const nlohmann::json& o = require_field(j, "other", where);
  if (o.is_string() && o.get<std::string>() == "self") {
    e.other = SdfEdit::Other::Self;
  } else if (o.is_object() && o.contains("sphere")) {
    const nlohmann::json& s = o.at("sphere");
    e.other = SdfEdit::Other::Sphere;
    e.sphere.center = require_vec3(s, "center", where + ".other.sphere");
    e.sphere.radius = require_number(s, "radius", where + ".other.sphere");
    check_config(e.sphere.radius > 0.0, where + ".other.sphere: radius must be positive");
  } else {
    throw ParseError(where + ": field 'other' must be \"self\" or {\"sphere\": ...}");
  }
  if (j.contains("offset")) e.other_offset = require_vec3(j, "offset", where);
}

inline std::vector<SdfEdit> parse_sdf_edits(const nlohmann::json& arr,
                                            const std::string& where);

inline SdfEdit parse_sdf_edit(const nlohmann::json& j, const std::string& where,
                              const std::string& op) {
  SdfEdit e;
  if (op == "translate") {
    e.kind = SdfEdit::Kind::Translate;
    e.delta = require_vec3(j, "delta", where);
  } else if (op == "twist") {
    e.kind = SdfEdit::Kind::Twist;
    Vec3d a = require_vec3(j, "axis", where);
    check_config(length(a) > 1e-9, where + ": twist axis must be non-zero");
    e.axis = normalize(a);
    e.rate = require_number(j, "rate", where);
  } else if (op == "intersect" || op == "subtract") {
    e.kind = op == "intersect" ? SdfEdit::Kind::Intersect : SdfEdit::Kind::Subtract;
    parse_other(e, j, where);
  } else if (op == "flatten") {
    e.kind = SdfEdit::Kind::Flatten;
    Vec3d n = require_vec3(j, "normal", where);
    check_config(length(n) > 1e-9, where + ": flatten normal must be non-zero");
    e.plane_normal = normalize(n);
    e.plane_offset = require_number(j, "distance", where);
    if (j.contains("clamp")) {
      e.plane_clamp = require_number(j, "clamp", where);
      check_config(e.plane_clamp > 0.0, where + ": clamp must be positive");
    }
  } else if (op == "region") {
    e.kind = SdfEdit::Kind::Region;
    e.region = parse_region(j, where);
    e.inner = parse_sdf_edits(require_field(j, "edits", where), where + ".edits");
  } else {
    throw ParseError(where + ": unknown op '" + op + "'");
  }
  return e;
}

inline std::vector<SdfEdit> parse_sdf_edits(const nlohmann::json& arr,
                                            const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + ": must be an array of edits");
  std::vector<SdfEdit> edits;
  for (size_t i = 0; i < arr.size(); ++i) {
    std::string w = where + "[" + std::to_string(i) + "]";
    const nlohmann::json& fp = require_field(arr[i], "op", w);
    if (!fp.is_string()) throw ParseError(w + ": field 'op' must be a string");
    edits.push_back(parse_sdf_edit(arr[i], w, fp.get<std::string>()));
  }
  return edits;
}

}  // namespace detail

inline EditScript parse_edit_script(const nlohmann::json& arr,
                                    const std::string& where = "edit script") {
  if (!arr.is_array()) throw ParseError(where + ": must be a JSON array");
  EditScript script;
  for (size_t i = 0; i < arr.size(); ++i) {
    std::string w = where + "[" + std::to_string(i) + "]";
    const nlohmann::json& j = arr[i];
    const nlohmann::json& opf = detail::require_field(j, "op", w);
    if (!opf.is_string()) throw ParseError(w + ": field 'op' must be a string");
    std::string op = opf.get<std::string>();

    if (op == "bsdf_region" || op == "bsdf_band" || op == "bsdf_checkerboard") {
      BsdfEdit e;
      if (op == "bsdf_region") {
        e.kind = BsdfEdit::Kind::Region;
        e.region = detail::parse_region(j, w);
      } else if (op == "bsdf_band") {
        e.kind = BsdfEdit::Kind::Band;
        Vec3d a = detail::require_vec3(j, "axis", w);
        check_config(length(a) > 1e-9, w + ": band axis must be non-zero");
        e.axis = normalize(a);
        e.period = detail::require_number(j, "period", w);
        check_config(e.period > 0.0, w + ": period must be positive");
      } else {
        e.kind = BsdfEdit::Kind::Checkerboard;
        e.cell = detail::require_number(j, "cell", w);
        check_config(e.cell > 0.0, w + ": cell must be positive");
      }
      e.replacement = detail::parse_replacement(j, w);
      script.bsdf.push_back(e);
    } else {
      script.sdf.push_back(detail::parse_sdf_edit(j, w, op));
    }
  }
  return script;
}

inline EditScript load_edit_script(const std::string& path) {
  return parse_edit_script(detail::load_json_file(path), path);
}

}  // namespace drt
