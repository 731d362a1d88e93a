#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "drt/checkpoint.hpp"
#include "drt/dataset.hpp"
#include "drt/integrator.hpp"
#include "drt/loss.hpp"

namespace drt {

// Analysis-by-synthesis loop: sample (frame, crop), render the crop, compare
// against the reference, push gradients back through shading / silhouette /
// visibility, apply AdamW to whatever is unfrozen.
struct TrainConfig {
  LossConfig loss;
  AdamWConfig optimizer;
  int crop = 32;  // square crop edge, clamped to the frame
  uint64_t seed = 0;
  int workers = 1;

  VisibilityMode visibility = VisibilityMode::Learned;
  double clamp_beta = 40.0;
  Vec3d background{0.0, 0.0, 0.0};
  TraceConfig trace;
  SilhouetteConfig silhouette;

  // Schedule: stage 1 fits the sphere sketch to silhouettes alone; stage 2
  // turns on the SDF residual and the photometric terms; stage 3 additionally
  // lets the lighting networks move (which ones depends on the lighting and
  // visibility modes). stage3_start < 0 starts stage 3 together with stage 2.
  int64_t total_steps = 30000;
  int64_t stage1_steps = 1000;
  int64_t stage3_start = -1;
  double residual_gate = 1.0;

  int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string checkpoint_dir;    // empty: never write checkpoints
  std::string metrics_path;      // empty: no metrics log

  void validate() const {
    loss.validate();
    check_config(optimizer.lr > 0.0, "learning rate must be positive");
    check_config(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 &&
                     optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
                 "optimizer moment decays must lie in [0, 1)");
    check_config(optimizer.eps > 0.0 && optimizer.weight_decay >= 0.0,
                 "optimizer epsilon must be positive and weight decay non-negative");
    check_config(crop >= 1, "crop size must be at least 1");
    check_config(workers >= 1, "worker count must be at least 1");
    check_config(clamp_beta > 0.0, "cosine clamp sharpness must be positive");
    check_config(silhouette.samples >= 1 && silhouette.alpha > 0.0 && silhouette.beta > 0.0,
                 "silhouette sampling needs samples >= 1 and positive sharpness");
    check_config(total_steps >= 0 && stage1_steps >= 0 && checkpoint_every >= 0,
                 "step counts must be non-negative");
    check_config(residual_gate >= 0.0, "residual gate must be non-negative");
  }
};

struct StepMetrics {
  int64_t step = 0;
  double loss_total = 0.0;
  double loss_photo = 0.0;
  double loss_sil = 0.0;
  double loss_distill = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  int frame = 0;
  int crop_u0 = 0, crop_v0 = 0, crop_w = 0, crop_h = 0;
  bool aborted = false;   // non-finite loss or gradient; parameters untouched
  std::string note;
};

inline nlohmann::json metrics_record(const StepMetrics& m) {
  return {{"step", m.step},           {"loss_total", m.loss_total},
          {"loss_photo", m.loss_photo}, {"loss_sil", m.loss_sil},
          {"grad_norm", m.grad_norm}, {"wall_ms", m.wall_ms}};
}

struct TrainState {
  Scene* scene = nullptr;
  AdamWState opt;
  int64_t step = 0;
  uint64_t seed = 0;
  // Carried verbatim into every checkpoint header (model description, light
  // list, ...) so artifacts can be reopened without the original run context.
  nlohmann::json extra;
};

inline TrainState init_training(Scene& scene, const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.scene = &scene;
  state.seed = cfg.seed;
  state.opt.init(scene.store.size(), cfg.optimizer);
  return state;
}

inline void save_training_checkpoint(TrainState& state, const std::string& path) {
  check_usage(state.scene != nullptr, "training state has no scene");
  nlohmann::json extra = state.extra.is_object() ? state.extra : nlohmann::json::object();
  extra["step"] = state.step;
  extra["seed"] = state.seed;
  extra["residual_gate"] = state.scene->sdf.residual_gate();
  save_checkpoint(path, state.scene->store, &state.opt, extra);
}

// Restores parameters, optimizer moments, and the (step, seed) position of the
// run. Values were quantized to float32 at save time, so the first step after
// resuming is bit-identical to the step the original process would have taken.
inline TrainState resume_training(Scene& scene, const TrainConfig& cfg,
                                  const std::string& path) {
  cfg.validate();
  TrainState state;
  state.scene = &scene;
  state.opt.init(scene.store.size(), cfg.optimizer);
  nlohmann::json extra = load_checkpoint(path, scene.store, &state.opt);
  state.step = extra.value("step", int64_t(0));
  state.seed = extra.value("seed", cfg.seed);
  state.extra = std::move(extra);
  return state;
}

// Scale factors fit applies to the loss weights for the current stage.
struct StagePlan {
  int stage = 2;
  double photometric_scale = 1.0;
  double distill_scale = 1.0;
};

// Sets the residual gate and frozen-segment mask for the stage `step` falls
// in. Idempotent, so it can be reapplied every step and after a resume.
inline StagePlan apply_stage(Scene& scene, const TrainConfig& cfg, int64_t step) {
  int64_t stage3 = cfg.stage3_start >= 0 ? cfg.stage3_start : cfg.stage1_steps;
  StagePlan plan;
  bool warmup = step < cfg.stage1_steps;
  plan.stage = warmup ? 1 : (step >= stage3 ? 3 : 2);
  plan.photometric_scale = warmup ? 0.0 : 1.0;
  plan.distill_scale = warmup ? 0.0 : 1.0;

  scene.sdf.set_residual_gate(warmup ? 0.0 : cfg.residual_gate);
  ParamStore& store = scene.store;
  store.set_frozen("sdf.sketch", false);
  if (!scene.cfg.sdf.learn_smoothing) store.set_frozen("sdf.sketch.k_raw", true);
  store.set_frozen("sdf.residual", warmup);
  store.set_frozen("bsdf", warmup);
  bool light_on = plan.stage == 3 && scene.cfg.lighting == LightingMode::Learned;
  store.set_frozen("light.field", !light_on);
  bool occlusion_on = plan.stage == 3 && cfg.visibility == VisibilityMode::Learned;
  store.set_frozen("light.occlusion", !occlusion_on);
  return plan;
}

namespace detail {

// Frames are sampled through a file-path-sorted index so the loss trace does
// not depend on the order frames were listed in.
inline std::vector<int> frame_order(const Dataset& data) {
  std::vector<int> order(data.frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return data.frames[size_t(a)].file_path < data.frames[size_t(b)].file_path;
  });
  return order;
}

inline bool any_unfrozen(const ParamStore& store, const std::string& prefix) {
  for (const auto& s : store.segments())
    if (s.name.rfind(prefix, 0) == 0 && !s.frozen) return true;
  return false;
}

struct PixelRecord {
  Ray ray;             // primary ray (pixel center)
  Ray seg;             // the ray clipped to the scene bound
  bool clipped = false;
  bool hit = false;
  Hit h;
  double sil = 0.0;
  double vis = 1.0;       // visibility used by shading
  double vis_hard = 1.0;  // shadow-ray target for distillation
  double occ = 0.0;       // learned occlusion value at the hit
  Vec3d wi{0.0, 0.0, 0.0};
};

// Differentiable re-shading of one recorded hit. The marched distance is held
// fixed; the surface point is re-expressed as x - SDF(x) * n_detached so the
// geometry parameters receive photometric gradients, and the shading normal is
// re-derived on the tape.
inline Vec3<Var> shade_training(const Scene& scene, const double* params, Tape* tape,
                                const PixelRecord& rec, int light_index,
                                const TrainConfig& cfg) {
  Vec3<Var> x0{Var(rec.h.x.x), Var(rec.h.x.y), Var(rec.h.x.z)};
  Var s = scene.sdf.evaluate<Var>(params, tape, x0);
  Vec3<Var> xs{x0.x - s * rec.h.n.x, x0.y - s * rec.h.n.y, x0.z - s * rec.h.n.z};

  Vec3<Var> n;
  if (!scene.sdf.normal(params, tape, xs, n))
    n = {Var(rec.h.n.x), Var(rec.h.n.y), Var(rec.h.n.z)};

  LightSampleT<Var> light;
  if (scene.cfg.lighting == LightingMode::Learned) {
    light = scene.light_field.sample<Var>(params, tape, xs);
  } else {
    light = sample_point_light<Var>(scene.light(light_index), xs);
  }

  Var V(1.0);
  switch (cfg.visibility) {
    case VisibilityMode::None: break;
    case VisibilityMode::Hard: V = Var(rec.vis); break;  // binary, held fixed
    case VisibilityMode::Learned:
      V = scene.occlusion.evaluate<Var>(params, tape, xs, light.wi);
      break;
  }

  Vec3d wo_d = rec.ray.d * -1.0;
  Vec3<Var> wo{Var(wo_d.x), Var(wo_d.y), Var(wo_d.z)};
  auto angles = rusink_angles<Var>(n, light.wi, wo);
  Vec3<Var> f;
  if (scene.analytic) {
    Vec3d fd = eval_analytic(*scene.analytic, rec.h.n, rec.wi, wo_d);
    f = {Var(fd.x), Var(fd.y), Var(fd.z)};
  } else {
    f = scene.reflectance.eval<Var>(params, tape, xs, angles);
  }
  return shade_term<Var>(f, angles, light, n, V, cfg.clamp_beta);
}

}  // namespace detail

// One optimization step: renders the sampled crop in plain double precision,
// reduces the losses, then replays each contributing pixel on a per-worker
// tape seeded by the loss derivatives. Worker gradient buffers are summed in
// worker order, so a fixed worker count gives a reproducible trace. A
// non-finite loss or gradient aborts the step: parameters and optimizer stay
// untouched, and the step counter advances past the offending batch.
inline StepMetrics train_step(TrainState& state, const Dataset& data,
                              const TrainConfig& cfg) {
  auto t_start = std::chrono::steady_clock::now();
  check_usage(state.scene != nullptr, "training state has no scene");
  cfg.validate();
  check_config(!data.frames.empty(), "dataset has no frames");
  Scene& scene = *state.scene;

  StepMetrics m;
  m.step = state.step;

  // --- sample (frame, crop) -------------------------------------------------
  Rng rng(state.seed, uint64_t(state.step), 0x51u);
  std::vector<int> order = detail::frame_order(data);
  m.frame = order[size_t(rng.next_below(order.size()))];
  const Frame& fr = data.frames[size_t(m.frame)];
  const Camera& cam = fr.camera;
  check_config(fr.image.width == cam.width && fr.image.height == cam.height &&
                   fr.image.channels == 3,
               "frame image does not match its camera");
  check_config(fr.mask.width == cam.width && fr.mask.height == cam.height &&
                   fr.mask.channels == 1,
               "frame mask does not match its camera");

  CropSample crop;
  crop.width = std::min(cfg.crop, cam.width);
  crop.height = std::min(cfg.crop, cam.height);
  crop.u0 = int(rng.next_below(uint64_t(cam.width - crop.width + 1)));
  crop.v0 = int(rng.next_below(uint64_t(cam.height - crop.height + 1)));
  m.crop_u0 = crop.u0;
  m.crop_v0 = crop.v0;
  m.crop_w = crop.width;
  m.crop_h = crop.height;

  const double w_photo = cfg.loss.photometric_weight;
  const double w_sil = cfg.loss.silhouette_weight;
  const bool want_photo = w_photo > 0.0;
  const bool want_sil = w_sil > 0.0;
  const bool want_distill = cfg.loss.distill_weight > 0.0 &&
                            cfg.visibility == VisibilityMode::Learned &&
                            detail::any_unfrozen(scene.store, "light.occlusion");

  RenderConfig rc;
  rc.visibility = cfg.visibility;
  rc.light_index = fr.light_index;
  rc.clamp_beta = cfg.clamp_beta;
  rc.trace = cfg.trace;

  // --- pass A: plain render of the crop, recording per-pixel state ----------
  const int64_t pixels = int64_t(crop.pixel_count());
  const double* params = scene.store.values();
  SdfModel::EvalCache cache = scene.sdf.prepare(params);
  std::vector<detail::PixelRecord> rec(static_cast<size_t>(pixels));
  Image rendered(crop.width, crop.height, 3);
  Image sil_est(crop.width, crop.height, 1);
  Image ref(crop.width, crop.height, 3);
  Image mask(crop.width, crop.height, 1);
  for (int y = 0; y < crop.height; ++y) {
    for (int x = 0; x < crop.width; ++x) {
      for (int c = 0; c < 3; ++c) ref.at(x, y, c) = fr.image.at(crop.u0 + x, crop.v0 + y, c);
      mask.at(x, y, 0) = fr.mask.at(crop.u0 + x, crop.v0 + y, 0);
    }
  }

  std::vector<std::exception_ptr> errors(size_t(cfg.workers));
  parallel_for_workers(pixels, cfg.workers, [&](int w, int64_t begin, int64_t end) {
    try {
      for (int64_t i = begin; i < end; ++i) {
        detail::PixelRecord& r = rec[size_t(i)];
        int px = int(i % crop.width), py = int(i / crop.width);
        r.ray = pixel_ray(cam, crop, size_t(i));
        r.seg = r.ray;
        r.clipped = clip_to_scene(scene, r.seg);

        if (r.clipped && want_sil)
          r.sil = silhouette_soft_value(scene.sdf, params, cache, r.seg, cfg.silhouette);

        Vec3d rgb = cfg.background;
        if (r.clipped && (want_photo || want_distill)) {
          auto res = sphere_trace(scene.sdf, params, cache, r.seg, cfg.trace);
          if (res.hit && res.h.valid_normal) {
            r.hit = true;
            r.h = res.h;
            Vec3d wo = r.ray.d * -1.0;
            LightSample ls = sample_scene_light(scene, params, r.h.x, fr.light_index);
            r.wi = ls.wi;
            r.vis = visibility_factor(scene, scene.sdf, params, cache, r.h.x, r.h.n, ls, rc);
            auto angles = rusink_angles<double>(r.h.n, ls.wi, wo);
            Vec3d f = scene.analytic
                          ? eval_analytic(*scene.analytic, r.h.n, ls.wi, wo)
                          : scene.reflectance.eval<double>(params, nullptr, r.h.x, angles);
            rgb = shade_term<double>(f, angles, ls, r.h.n, r.vis, cfg.clamp_beta);
            if (want_distill) {
              r.vis_hard = cfg.visibility == VisibilityMode::Hard
                               ? r.vis
                               : hard_visibility(scene.sdf, params, cache, r.h.x, r.h.n,
                                                 ls.wi, ls.distance, cfg.trace);
              r.occ = scene.occlusion.evaluate<double>(params, nullptr, r.h.x, ls.wi);
            }
          }
        }
        rendered.at(px, py, 0) = rgb.x;
        rendered.at(px, py, 1) = rgb.y;
        rendered.at(px, py, 2) = rgb.z;
        sil_est.at(px, py, 0) = r.sil;
      }
    } catch (...) {
      errors[size_t(w)] = std::current_exception();
    }
  });
  for (auto& e : errors) if (e) std::rethrow_exception(e);

  // --- losses ---------------------------------------------------------------
  int64_t hit_count = 0;
  for (const auto& r : rec) hit_count += r.hit ? 1 : 0;
  m.loss_photo = want_photo ? photometric_loss(ref, rendered, cfg.loss.eps_photo) : 0.0;
  m.loss_sil = want_sil ? silhouette_loss(mask, sil_est, cfg.loss.eps_bce) : 0.0;
  if (want_distill && hit_count > 0) {
    double acc = 0.0;
    for (const auto& r : rec) {
      if (!r.hit) continue;
      double d = r.occ - r.vis_hard;
      acc += d * d;
    }
    m.loss_distill = acc / double(hit_count);
  }
  m.loss_total = w_photo * m.loss_photo + w_sil * m.loss_sil +
                 cfg.loss.distill_weight * m.loss_distill;

  auto abort_step = [&](const std::string& what) {
    m.aborted = true;
    m.note = what + "; frame " + std::to_string(m.frame) +
             (fr.file_path.empty() ? "" : " (" + fr.file_path + ")") + ", crop " +
             std::to_string(crop.width) + "x" + std::to_string(crop.height) + "+" +
             std::to_string(crop.u0) + "+" + std::to_string(crop.v0);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          t_start)
                    .count();
    ++state.step;  // skip the poisoned batch instead of resampling it forever
    return m;
  };
  if (!std::isfinite(m.loss_total)) return abort_step("non-finite loss");

  // --- pass B: per-pixel tapes into per-worker gradient buffers -------------
  Image seed_photo = want_photo ? photometric_seed(ref, rendered, cfg.loss.eps_photo)
                                : Image(1, 1, 1);
  Image seed_sil = want_sil ? silhouette_seed(mask, sil_est, cfg.loss.eps_bce)
                            : Image(1, 1, 1);
  double distill_scale =
      hit_count > 0 ? cfg.loss.distill_weight / double(hit_count) : 0.0;

  scene.store.zero_grad();
  std::vector<std::vector<double>> worker_grads(
      size_t(cfg.workers), std::vector<double>(size_t(scene.store.size()), 0.0));
  parallel_for_workers(pixels, cfg.workers, [&](int w, int64_t begin, int64_t end) {
    try {
      Tape tape;
      tape.bind(params, scene.store.size());
      for (int64_t i = begin; i < end; ++i) {
        const detail::PixelRecord& r = rec[size_t(i)];
        int px = int(i % crop.width), py = int(i / crop.width);
        tape.reset();
        Var objective(0.0);
        bool contributes = false;

        if (want_sil && r.clipped) {
          double seed = seed_sil.at(px, py, 0);
          if (seed != 0.0) {
            Var sil = silhouette_soft(scene.sdf, params, &tape, r.seg, cfg.silhouette);
            objective += sil * (w_sil * seed);
            contributes = true;
          }
        }
        if (want_photo && r.hit &&
            !(cfg.visibility == VisibilityMode::Hard && r.vis == 0.0)) {
          double s0 = seed_photo.at(px, py, 0);
          double s1 = seed_photo.at(px, py, 1);
          double s2 = seed_photo.at(px, py, 2);
          if (s0 != 0.0 || s1 != 0.0 || s2 != 0.0) {
            Vec3<Var> rgb =
                detail::shade_training(scene, params, &tape, r, fr.light_index, cfg);
            objective += rgb.x * (w_photo * s0) + rgb.y * (w_photo * s1) +
                         rgb.z * (w_photo * s2);
            contributes = true;
          }
        }
        if (want_distill && r.hit) {
          Vec3<Var> xc{Var(r.h.x.x), Var(r.h.x.y), Var(r.h.x.z)};
          Vec3<Var> wic{Var(r.wi.x), Var(r.wi.y), Var(r.wi.z)};
          Var occ = scene.occlusion.evaluate<Var>(params, &tape, xc, wic);
          Var diff = occ - Var(r.vis_hard);
          objective += diff * diff * distill_scale;
          contributes = true;
        }
        if (contributes) tape.backward(objective, worker_grads[size_t(w)], 1.0);
      }
    } catch (...) {
      errors[size_t(w)] = std::current_exception();
    }
  });
  for (auto& e : errors) if (e) std::rethrow_exception(e);

  double* grads = scene.store.grads();
  for (int w = 0; w < cfg.workers; ++w) {
    const std::vector<double>& g = worker_grads[size_t(w)];
    for (int64_t j = 0; j < scene.store.size(); ++j) grads[j] += g[size_t(j)];
  }
  double norm_sq = 0.0;
  for (int64_t j = 0; j < scene.store.size(); ++j) norm_sq += grads[j] * grads[j];
  m.grad_norm = std::sqrt(norm_sq);
  if (!std::isfinite(m.grad_norm)) return abort_step("non-finite gradient");

  state.opt.step(scene.store);
  ++state.step;
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                        t_start)
                  .count();
  return m;
}

struct FitResult {
  int64_t steps_run = 0;
  double final_loss = 0.0;
  std::string checkpoint;  // final checkpoint path, if one was written
};

namespace detail {

inline std::string checkpoint_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld.ckpt", static_cast<long long>(step));
  return buf;
}

}  // namespace detail

// Light metadata present means known lighting with the light network frozen;
// absent means the light field itself is optimized.
inline void resolve_lighting(Scene& scene, const Dataset& data) {
  if (data.has_light_metadata) {
    check_config(!data.lights.empty(), "light metadata is present but lists no lights");
    scene.cfg.lighting = LightingMode::Known;
    scene.lights = data.lights;
  } else {
    scene.cfg.lighting = LightingMode::Learned;
  }
}

// Runs the staged schedule from the state's current step to cfg.total_steps.
inline FitResult fit(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                     std::vector<StepMetrics>* trace = nullptr) {
  check_usage(state.scene != nullptr, "training state has no scene");
  cfg.validate();
  check_config(!data.frames.empty(), "dataset has no frames");
  Scene& scene = *state.scene;
  resolve_lighting(scene, data);

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    metrics.open(cfg.metrics_path,
                 state.step > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log: " + cfg.metrics_path);
  }
  if (!cfg.checkpoint_dir.empty())
    std::filesystem::create_directories(cfg.checkpoint_dir);

  FitResult out;
  while (state.step < cfg.total_steps) {
    StagePlan plan = apply_stage(scene, cfg, state.step);
    TrainConfig step_cfg = cfg;
    step_cfg.loss.photometric_weight *= plan.photometric_scale;
    step_cfg.loss.distill_weight *= plan.distill_scale;

    StepMetrics m = train_step(state, data, step_cfg);
    ++out.steps_run;
    out.final_loss = m.loss_total;
    if (metrics.is_open()) metrics << metrics_record(m).dump() << "\n";
    if (trace) trace->push_back(m);

    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        state.step % cfg.checkpoint_every == 0) {
      std::filesystem::path p =
          std::filesystem::path(cfg.checkpoint_dir) / detail::checkpoint_name(state.step);
      save_training_checkpoint(state, p.string());
    }
  }
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::path p = std::filesystem::path(cfg.checkpoint_dir) / "final.ckpt";
    save_training_checkpoint(state, p.string());
    out.checkpoint = p.string();
  }
  return out;
}

}  // namespace drt
