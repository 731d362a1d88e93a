#pragma once

#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "drt/dataset.hpp"
#include "drt/integrator.hpp"
#include "drt/scene.hpp"
#include "drt/train.hpp"

// One JSON document configures a whole run: the scene model, the training
// schedule, the renderer, and the data synthesizer. Command-line overrides
// address individual fields by dotted key. Unknown or ill-typed keys fail by
// name before anything touches disk, and the fully resolved document can be
// echoed back out so a run is reproducible from its artifacts alone.

namespace drt {

struct SynthSettings {
  std::string scene = "two_spheres";  // reference scene name
  int views = 16;
  int width = 128;
  int height = 128;
  double ring_radius = 2.6;
  double elevation = 0.45;       // radians above the horizontal plane
  double azimuth_offset = 0.0;   // rotates the camera ring; offsets make held-out sets
  double fov_x_degrees = 60.0;
  std::vector<PointLight> lights;  // empty: keep the reference scene's own lights
  std::vector<int> light_index;    // per-view light assignment (empty: all zero)
  bool light_metadata = true;      // write the light file next to the poses
};

struct RunConfig {
  SceneConfig scene;
  TrainConfig train;
  RenderConfig render;
  SynthSettings synth;
  uint64_t seed = 0;
  int threads = 0;  // 0: use the hardware concurrency

  // Copies the shared runtime knobs into the sections that consume them.
  void resolve_runtime() {
    int workers = threads > 0 ? threads : int(std::max(1u, std::thread::hardware_concurrency()));
    train.seed = seed;
    train.workers = workers;
    render.seed = seed;
    render.workers = workers;
  }
};

namespace cfg_detail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

inline double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "must be a number");
  return v.get<double>();
}

inline int64_t as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "must be an integer");
  return v.get<int64_t>();
}

inline int as_int(const json& v, const std::string& path) {
  return int(as_integer(v, path));
}

inline bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "must be a boolean");
  return v.get<bool>();
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "must be a string");
  return v.get<std::string>();
}

inline Vec3d as_vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) fail(path, "must be an array of 3 numbers");
  return {as_number(v[0], path), as_number(v[1], path), as_number(v[2], path)};
}

inline json vec3_json(const Vec3d& v) { return json::array({v.x, v.y, v.z}); }

// --- enum name tables ------------------------------------------------------

inline Activation parse_activation(const json& v, const std::string& path) {
  std::string s = as_string(v, path);
  if (s == "softplus") return Activation::Softplus;
  if (s == "relu") return Activation::Relu;
  if (s == "none") return Activation::None;
  fail(path, "must be one of softplus|relu|none");
}

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Softplus: return "softplus";
    case Activation::Relu: return "relu";
    case Activation::None: return "none";
  }
  return "softplus";
}

inline VisibilityMode parse_visibility(const json& v, const std::string& path) {
  std::string s = as_string(v, path);
  if (s == "none") return VisibilityMode::None;
  if (s == "hard") return VisibilityMode::Hard;
  if (s == "learned") return VisibilityMode::Learned;
  fail(path, "must be one of none|hard|learned");
}

inline const char* visibility_name(VisibilityMode m) {
  switch (m) {
    case VisibilityMode::None: return "none";
    case VisibilityMode::Hard: return "hard";
    case VisibilityMode::Learned: return "learned";
  }
  return "hard";
}

inline IntegratorKind parse_integrator(const json& v, const std::string& path) {
  std::string s = as_string(v, path);
  if (s == "direct") return IntegratorKind::Direct;
  if (s == "path") return IntegratorKind::Path;
  if (s == "normals") return IntegratorKind::Normals;
  if (s == "light") return IntegratorKind::LightDirection;
  if (s == "silhouette") return IntegratorKind::Silhouette;
  fail(path, "must be one of direct|path|normals|light|silhouette");
}

inline const char* integrator_name(IntegratorKind k) {
  switch (k) {
    case IntegratorKind::Direct: return "direct";
    case IntegratorKind::Path: return "path";
    case IntegratorKind::Normals: return "normals";
    case IntegratorKind::LightDirection: return "light";
    case IntegratorKind::Silhouette: return "silhouette";
  }
  return "direct";
}

inline LightingMode parse_lighting(const json& v, const std::string& path) {
  std::string s = as_string(v, path);
  if (s == "known") return LightingMode::Known;
  if (s == "learned") return LightingMode::Learned;
  fail(path, "must be one of known|learned");
}

inline const char* lighting_name(LightingMode m) {
  return m == LightingMode::Known ? "known" : "learned";
}

// --- per-struct mergers (each key updates one field; unknown keys throw) ---

inline void apply_mlp(const json& j, const std::string& path, MlpConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "layers") {
      if (!v.is_array() || v.size() < 2) fail(p, "must be an array of at least 2 layer sizes");
      std::vector<int> layers;
      for (const auto& e : v) {
        int n = as_int(e, p);
        if (n < 1) fail(p, "layer sizes must be positive");
        layers.push_back(n);
      }
      cfg.layers = std::move(layers);
    } else if (key == "activation") {
      cfg.activation = parse_activation(v, p);
    } else if (key == "freq_order") {
      cfg.freq_order = as_int(v, p);
      if (cfg.freq_order < 0) fail(p, "must be non-negative");
    } else if (key == "zero_init_last") {
      cfg.zero_init_last = as_bool(v, p);
    } else {
      fail(p, "unknown key");
    }
  }
}

inline json mlp_json(const MlpConfig& cfg) {
  return {{"layers", cfg.layers},
          {"activation", activation_name(cfg.activation)},
          {"freq_order", cfg.freq_order},
          {"zero_init_last", cfg.zero_init_last}};
}

inline void apply_sdf(const json& j, const std::string& path, SdfModelConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "sphere_count") cfg.sphere_count = as_int(v, p);
    else if (key == "smoothing") cfg.smoothing = as_number(v, p);
    else if (key == "learn_smoothing") cfg.learn_smoothing = as_bool(v, p);
    else if (key == "init_sphere_radius") cfg.init_sphere_radius = as_number(v, p);
    else if (key == "residual") apply_mlp(v, p, cfg.residual);
    else fail(p, "unknown key");
  }
}

inline void apply_reflectance(const json& j, const std::string& path, ReflectanceConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "basis_count") cfg.basis_count = as_int(v, p);
    else if (key == "basis") apply_mlp(v, p, cfg.basis);
    else if (key == "weights") apply_mlp(v, p, cfg.weights);
    else fail(p, "unknown key");
  }
}

inline void apply_scene(const json& j, const std::string& path, SceneConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "sdf") apply_sdf(v, p, cfg.sdf);
    else if (key == "reflectance") apply_reflectance(v, p, cfg.reflectance);
    else if (key == "light_field") apply_mlp(v, p, cfg.light_field.mlp);
    else if (key == "occlusion") apply_mlp(v, p, cfg.occlusion.mlp);
    else if (key == "lighting") cfg.lighting = parse_lighting(v, p);
    else if (key == "center") cfg.center = as_vec3(v, p);
    else if (key == "radius") cfg.radius = as_number(v, p);
    else fail(p, "unknown key");
  }
}

inline json scene_json(const SceneConfig& cfg) {
  return {{"sdf",
           {{"sphere_count", cfg.sdf.sphere_count},
            {"smoothing", cfg.sdf.smoothing},
            {"learn_smoothing", cfg.sdf.learn_smoothing},
            {"init_sphere_radius", cfg.sdf.init_sphere_radius},
            {"residual", mlp_json(cfg.sdf.residual)}}},
          {"reflectance",
           {{"basis_count", cfg.reflectance.basis_count},
            {"basis", mlp_json(cfg.reflectance.basis)},
            {"weights", mlp_json(cfg.reflectance.weights)}}},
          {"light_field", mlp_json(cfg.light_field.mlp)},
          {"occlusion", mlp_json(cfg.occlusion.mlp)},
          {"lighting", lighting_name(cfg.lighting)},
          {"center", vec3_json(cfg.center)},
          {"radius", cfg.radius}};
}

inline void apply_trace(const json& j, const std::string& path, TraceConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "hit_eps") cfg.hit_eps = as_number(v, p);
    else if (key == "max_iters") cfg.max_iters = as_int(v, p);
    else if (key == "step_scale") cfg.step_scale = as_number(v, p);
    else if (key == "refine_iters") cfg.refine_iters = as_int(v, p);
    else fail(p, "unknown key");
  }
}

inline json trace_json(const TraceConfig& cfg) {
  return {{"hit_eps", cfg.hit_eps},
          {"max_iters", cfg.max_iters},
          {"step_scale", cfg.step_scale},
          {"refine_iters", cfg.refine_iters}};
}

inline void apply_silhouette(const json& j, const std::string& path, SilhouetteConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "samples") cfg.samples = as_int(v, p);
    else if (key == "alpha") cfg.alpha = as_number(v, p);
    else if (key == "beta") cfg.beta = as_number(v, p);
    else if (key == "jitter") cfg.jitter = as_bool(v, p);
    else fail(p, "unknown key");
  }
}

inline json silhouette_json(const SilhouetteConfig& cfg) {
  return {{"samples", cfg.samples},
          {"alpha", cfg.alpha},
          {"beta", cfg.beta},
          {"jitter", cfg.jitter}};
}

inline void apply_loss(const json& j, const std::string& path, LossConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "photometric_weight") cfg.photometric_weight = as_number(v, p);
    else if (key == "silhouette_weight") cfg.silhouette_weight = as_number(v, p);
    else if (key == "distill_weight") cfg.distill_weight = as_number(v, p);
    else if (key == "eps_bce") cfg.eps_bce = as_number(v, p);
    else if (key == "eps_photo") cfg.eps_photo = as_number(v, p);
    else fail(p, "unknown key");
  }
}

inline void apply_optimizer(const json& j, const std::string& path, AdamWConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "lr") cfg.lr = as_number(v, p);
    else if (key == "beta1") cfg.beta1 = as_number(v, p);
    else if (key == "beta2") cfg.beta2 = as_number(v, p);
    else if (key == "eps") cfg.eps = as_number(v, p);
    else if (key == "weight_decay") cfg.weight_decay = as_number(v, p);
    else fail(p, "unknown key");
  }
}

inline void apply_train(const json& j, const std::string& path, TrainConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "loss") apply_loss(v, p, cfg.loss);
    else if (key == "optimizer") apply_optimizer(v, p, cfg.optimizer);
    else if (key == "crop") cfg.crop = as_int(v, p);
    else if (key == "visibility") cfg.visibility = parse_visibility(v, p);
    else if (key == "clamp_beta") cfg.clamp_beta = as_number(v, p);
    else if (key == "background") cfg.background = as_vec3(v, p);
    else if (key == "trace") apply_trace(v, p, cfg.trace);
    else if (key == "silhouette") apply_silhouette(v, p, cfg.silhouette);
    else if (key == "total_steps") cfg.total_steps = as_integer(v, p);
    else if (key == "stage1_steps") cfg.stage1_steps = as_integer(v, p);
    else if (key == "stage3_start") cfg.stage3_start = as_integer(v, p);
    else if (key == "residual_gate") cfg.residual_gate = as_number(v, p);
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_integer(v, p);
    else fail(p, "unknown key");
  }
}

inline json train_json(const TrainConfig& cfg) {
  return {{"loss",
           {{"photometric_weight", cfg.loss.photometric_weight},
            {"silhouette_weight", cfg.loss.silhouette_weight},
            {"distill_weight", cfg.loss.distill_weight},
            {"eps_bce", cfg.loss.eps_bce},
            {"eps_photo", cfg.loss.eps_photo}}},
          {"optimizer",
           {{"lr", cfg.optimizer.lr},
            {"beta1", cfg.optimizer.beta1},
            {"beta2", cfg.optimizer.beta2},
            {"eps", cfg.optimizer.eps},
            {"weight_decay", cfg.optimizer.weight_decay}}},
          {"crop", cfg.crop},
          {"visibility", visibility_name(cfg.visibility)},
          {"clamp_beta", cfg.clamp_beta},
          {"background", vec3_json(cfg.background)},
          {"trace", trace_json(cfg.trace)},
          {"silhouette", silhouette_json(cfg.silhouette)},
          {"total_steps", cfg.total_steps},
          {"stage1_steps", cfg.stage1_steps},
          {"stage3_start", cfg.stage3_start},
          {"residual_gate", cfg.residual_gate},
          {"checkpoint_every", cfg.checkpoint_every}};
}

inline void apply_render(const json& j, const std::string& path, RenderConfig& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "integrator") cfg.integrator = parse_integrator(v, p);
    else if (key == "visibility") cfg.visibility = parse_visibility(v, p);
    else if (key == "path_depth") cfg.path_depth = as_int(v, p);
    else if (key == "path_spp") cfg.path_spp = as_int(v, p);
    else if (key == "light_index") cfg.light_index = as_int(v, p);
    else if (key == "background") cfg.background = as_vec3(v, p);
    else if (key == "clamp_beta") cfg.clamp_beta = as_number(v, p);
    else if (key == "trace") apply_trace(v, p, cfg.trace);
    else if (key == "silhouette") apply_silhouette(v, p, cfg.silhouette);
    else if (key == "jitter") cfg.jitter = as_bool(v, p);
    else fail(p, "unknown key");
  }
}

inline json render_json(const RenderConfig& cfg) {
  return {{"integrator", integrator_name(cfg.integrator)},
          {"visibility", visibility_name(cfg.visibility)},
          {"path_depth", cfg.path_depth},
          {"path_spp", cfg.path_spp},
          {"light_index", cfg.light_index},
          {"background", vec3_json(cfg.background)},
          {"clamp_beta", cfg.clamp_beta},
          {"trace", trace_json(cfg.trace)},
          {"silhouette", silhouette_json(cfg.silhouette)},
          {"jitter", cfg.jitter}};
}

inline void apply_synth(const json& j, const std::string& path, SynthSettings& cfg) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, v] : j.items()) {
    std::string p = path + "." + key;
    if (key == "scene") cfg.scene = as_string(v, p);
    else if (key == "views") cfg.views = as_int(v, p);
    else if (key == "width") cfg.width = as_int(v, p);
    else if (key == "height") cfg.height = as_int(v, p);
    else if (key == "ring_radius") cfg.ring_radius = as_number(v, p);
    else if (key == "elevation") cfg.elevation = as_number(v, p);
    else if (key == "azimuth_offset") cfg.azimuth_offset = as_number(v, p);
    else if (key == "fov_x_degrees") cfg.fov_x_degrees = as_number(v, p);
    else if (key == "light_metadata") cfg.light_metadata = as_bool(v, p);
    else if (key == "lights") {
      if (!v.is_array()) fail(p, "must be an array of {position, intensity} objects");
      std::vector<PointLight> lights;
      for (size_t i = 0; i < v.size(); ++i) {
        std::string q = p + "[" + std::to_string(i) + "]";
        if (!v[i].is_object()) fail(q, "must be an object");
        PointLight l;
        for (const auto& [lk, lv] : v[i].items()) {
          if (lk == "position") l.position = as_vec3(lv, q + ".position");
          else if (lk == "intensity") l.intensity = as_vec3(lv, q + ".intensity");
          else fail(q + "." + lk, "unknown key");
        }
        lights.push_back(l);
      }
      cfg.lights = std::move(lights);
    } else if (key == "light_index") {
      if (!v.is_array()) fail(p, "must be an array of integers");
      std::vector<int> idx;
      for (const auto& e : v) idx.push_back(as_int(e, p));
      cfg.light_index = std::move(idx);
    } else {
      fail(p, "unknown key");
    }
  }
}

inline json synth_json(const SynthSettings& cfg) {
  json lights = json::array();
  for (const auto& l : cfg.lights)
    lights.push_back({{"position", vec3_json(l.position)},
                      {"intensity", vec3_json(l.intensity)}});
  return {{"scene", cfg.scene},
          {"views", cfg.views},
          {"width", cfg.width},
          {"height", cfg.height},
          {"ring_radius", cfg.ring_radius},
          {"elevation", cfg.elevation},
          {"azimuth_offset", cfg.azimuth_offset},
          {"fov_x_degrees", cfg.fov_x_degrees},
          {"lights", lights},
          {"light_index", cfg.light_index},
          {"light_metadata", cfg.light_metadata}};
}

}  // namespace cfg_detail

inline void apply_config_json(const nlohmann::json& j, RunConfig& cfg,
                              const std::string& path = "") {
  using namespace cfg_detail;
  std::string base = path.empty() ? "" : path + ".";
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    std::string p = base + key;
    if (key == "scene") apply_scene(v, p, cfg.scene);
    else if (key == "train") apply_train(v, p, cfg.train);
    else if (key == "render") apply_render(v, p, cfg.render);
    else if (key == "synth") apply_synth(v, p, cfg.synth);
    else if (key == "seed") {
      if (!v.is_number_integer() && !v.is_number_unsigned()) fail(p, "must be an integer");
      cfg.seed = v.get<uint64_t>();
    } else if (key == "threads") {
      cfg.threads = as_int(v, p);
      if (cfg.threads < 0) fail(p, "must be non-negative (0 uses all cores)");
    } else {
      fail(p, "unknown key");
    }
  }
}

inline nlohmann::json run_config_json(const RunConfig& cfg) {
  using namespace cfg_detail;
  return {{"scene", scene_json(cfg.scene)},
          {"train", train_json(cfg.train)},
          {"render", render_json(cfg.render)},
          {"synth", synth_json(cfg.synth)},
          {"seed", cfg.seed},
          {"threads", cfg.threads}};
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  RunConfig cfg;
  apply_config_json(j, cfg);
  return cfg;
}

// Applies one "dotted.key=value" assignment. The value is parsed as JSON when
// possible (numbers, booleans, arrays) and taken as a string otherwise, so
// --set train.optimizer.lr=1e-3 and --set synth.scene=sphere both work.
inline void apply_config_override(RunConfig& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);

  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  // Build the nested single-key document and merge it through the normal path
  // so type checks and unknown-key errors carry the full dotted name.
  nlohmann::json doc = value;
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t dot = key.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(key.substr(start));
      break;
    }
    parts.push_back(key.substr(start, dot - start));
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override '" + assignment + "' has an empty key part");
    doc = nlohmann::json{{*it, std::move(doc)}};
  }
  apply_config_json(doc, cfg);
}

}  // namespace drt
