#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "drt/train.hpp"
#include "test_util.hpp"

using namespace drt;

namespace {

// Small-capacity scene used as the optimization target in these tests.
SceneConfig trainee_config() {
  SceneConfig cfg;
  cfg.sdf.sphere_count = 2;
  cfg.sdf.smoothing = 32.0;
  cfg.sdf.residual = {{3, 16, 16, 1}, Activation::Softplus, 2, true};
  cfg.sdf.init_sphere_radius = 0.25;
  cfg.reflectance.basis_count = 2;
  cfg.reflectance.basis = {{3, 8, 3}, Activation::Softplus, 0, false};
  cfg.reflectance.weights = {{3, 8, 2}, Activation::Softplus, 0, false};
  cfg.light_field.mlp = {{3, 16, 16, 6}, Activation::Softplus, 0, false};
  cfg.occlusion.mlp = {{6, 16, 1}, Activation::Softplus, 0, false};
  cfg.center = {0.0, 0.0, 0.0};
  cfg.radius = 1.4;
  return cfg;
}

Scene make_trainee(uint64_t init_seed) {
  Scene scene;
  scene.build(trainee_config());
  Rng rng(init_seed);
  scene.init(rng);
  return scene;
}

// Renders reference frames straight into an in-memory dataset: RGB from the
// color channels, mask from hard alpha coverage.
Dataset render_dataset(Scene& scene, const std::vector<Camera>& cams,
                       const RenderConfig& rc, bool light_metadata) {
  Dataset data;
  data.center = scene.cfg.center;
  data.radius = scene.cfg.radius;
  data.width = cams.front().width;
  data.height = cams.front().height;
  data.fov_x = cams.front().fov_x;
  for (size_t i = 0; i < cams.size(); ++i) {
    Image rgba = render_image(scene, cams[i], rc);
    Frame f;
    f.camera = cams[i];
    f.file_path = "r_" + std::to_string(i);
    f.image = Image(rgba.width, rgba.height, 3);
    f.mask = Image(rgba.width, rgba.height, 1);
    for (int y = 0; y < rgba.height; ++y) {
      for (int x = 0; x < rgba.width; ++x) {
        for (int c = 0; c < 3; ++c) f.image.at(x, y, c) = rgba.at(x, y, c);
        f.mask.at(x, y, 0) = rgba.at(x, y, 3) > 0.5 ? 1.0 : 0.0;
      }
    }
    data.frames.push_back(std::move(f));
  }
  if (light_metadata) {
    data.lights = scene.lights;
    data.has_light_metadata = true;
  }
  return data;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.optimizer.lr = 5e-3;
  cfg.crop = 16;
  cfg.silhouette.samples = 24;
  cfg.visibility = VisibilityMode::None;
  cfg.workers = 1;
  return cfg;
}

double segment_max_diff(const ParamStore& store, const std::vector<double>& before,
                        const std::string& prefix) {
  double worst = 0.0;
  for (const auto& seg : store.segments()) {
    if (seg.name.rfind(prefix, 0) != 0) continue;
    for (int64_t i = seg.offset; i < seg.offset + seg.size; ++i)
      worst = std::max(worst, std::fabs(store[i] - before[size_t(i)]));
  }
  return worst;
}

class TempTrainDir {
 public:
  TempTrainDir() {
    root_ = std::filesystem::temp_directory_path() /
            ("drt_train_" + std::to_string(Rng(uint64_t(size_t(this))).next_u64()));
    std::filesystem::create_directories(root_);
  }
  ~TempTrainDir() { std::filesystem::remove_all(root_); }
  std::string path(const std::string& name) const { return (root_ / name).string(); }

 private:
  std::filesystem::path root_;
};

TEST(SoftSilhouetteTest, RecordedValueMatchesTheTapeValue) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  const double* params = ref.scene.store.values();
  auto cache = ref.scene.sdf.prepare(params);
  SilhouetteConfig cfg;
  cfg.samples = 48;
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    Ray ray;
    ray.o = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 3.0};
    ray.d = normalize(Vec3d{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -1.0});
    if (!clip_to_scene(ref.scene, ray)) continue;
    double plain = silhouette_soft_value(ref.scene.sdf, params, cache, ray, cfg);
    Tape tape;
    tape.bind(params, ref.scene.store.size());
    Var taped = silhouette_soft(ref.scene.sdf, params, &tape, ray, cfg);
    EXPECT_EQ(plain, taped.val);
  }
}

TEST(TrainStepTest, FrozenEverythingLeavesParametersBitIdentical) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(2, 2.6, 0.4, {0, 0, 0}, degrees_to_radians(60.0), 24, 24);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  Scene scene = make_trainee(5);
  scene.cfg.lighting = LightingMode::Known;
  scene.lights = ref.scene.lights;
  scene.store.set_all_frozen(true);
  std::vector<double> before = scene.store.value_vec();

  TrainConfig cfg = quick_config();
  cfg.visibility = VisibilityMode::Learned;
  TrainState state = init_training(scene, cfg);
  StepMetrics m = train_step(state, data, cfg);

  EXPECT_FALSE(m.aborted);
  EXPECT_TRUE(std::isfinite(m.loss_total));
  EXPECT_EQ(state.step, 1);
  ASSERT_EQ(before.size(), scene.store.value_vec().size());
  for (size_t i = 0; i < before.size(); ++i)
    ASSERT_EQ(before[i], scene.store.value_vec()[i]) << "parameter " << i << " moved";
}

TEST(TrainStepTest, PartialFreezeProtectsExactlyTheFrozenSegments) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(3, 2.6, 0.4, {0, 0, 0}, degrees_to_radians(60.0), 32, 32);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  Scene scene = make_trainee(7);
  scene.cfg.lighting = LightingMode::Known;
  scene.lights = ref.scene.lights;
  // Start the sketch near the target so crops actually hit the surface.
  set_sketch_sphere(scene, 0, {-0.45, 0.0, 0.0}, 0.55);
  set_sketch_sphere(scene, 1, {0.5, 0.08, 0.05}, 0.42);
  scene.sdf.sketch().set_smoothing(scene.store, 32.0);
  scene.store.set_frozen("bsdf", true);
  scene.store.set_frozen("light", true);
  std::vector<double> before = scene.store.value_vec();

  TrainConfig cfg = quick_config();
  cfg.crop = 32;
  TrainState state = init_training(scene, cfg);
  for (int i = 0; i < 3; ++i) {
    StepMetrics m = train_step(state, data, cfg);
    ASSERT_FALSE(m.aborted);
  }

  EXPECT_EQ(segment_max_diff(scene.store, before, "bsdf"), 0.0);
  EXPECT_EQ(segment_max_diff(scene.store, before, "light"), 0.0);
  EXPECT_GT(segment_max_diff(scene.store, before, "sdf.sketch.c"), 0.0);
}

TEST(TrainStepTest, SeededRunsProduceIdenticalTraces) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(3, 2.6, 0.4, {0, 0, 0}, degrees_to_radians(60.0), 24, 24);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  TrainConfig cfg = quick_config();
  cfg.workers = 2;
  cfg.seed = 17;

  auto run = [&](std::vector<StepMetrics>& trace) {
    Scene scene = make_trainee(9);
    scene.cfg.lighting = LightingMode::Known;
    scene.lights = ref.scene.lights;
    TrainState state = init_training(scene, cfg);
    for (int i = 0; i < 6; ++i) trace.push_back(train_step(state, data, cfg));
    return scene.store.value_vec();
  };
  std::vector<StepMetrics> ta, tb;
  std::vector<double> pa = run(ta);
  std::vector<double> pb = run(tb);

  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(ta[size_t(i)].loss_total, tb[size_t(i)].loss_total);
    EXPECT_EQ(ta[size_t(i)].grad_norm, tb[size_t(i)].grad_norm);
  }
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) ASSERT_EQ(pa[i], pb[i]);
}

TEST(TrainStepTest, FrameOrderDoesNotChangeTheLossTrace) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(4, 2.6, 0.4, {0, 0, 0}, degrees_to_radians(60.0), 24, 24);
  Dataset data = render_dataset(ref.scene, cams, rc, true);
  Dataset shuffled = data;
  std::reverse(shuffled.frames.begin(), shuffled.frames.end());

  TrainConfig cfg = quick_config();
  cfg.seed = 23;

  auto run = [&](const Dataset& d, std::vector<StepMetrics>& trace) {
    Scene scene = make_trainee(9);
    scene.cfg.lighting = LightingMode::Known;
    scene.lights = ref.scene.lights;
    TrainState state = init_training(scene, cfg);
    for (int i = 0; i < 4; ++i) trace.push_back(train_step(state, d, cfg));
  };
  std::vector<StepMetrics> ta, tb;
  run(data, ta);
  run(shuffled, tb);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(ta[size_t(i)].loss_total, tb[size_t(i)].loss_total);
    EXPECT_EQ(ta[size_t(i)].grad_norm, tb[size_t(i)].grad_norm);
  }
}

TEST(TrainStepTest, NanPixelAbortsTheStepAndKeepsParameters) {
  ReferenceScene ref = make_reference_scene("sphere");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(1, 2.6, 0.3, {0, 0, 0}, degrees_to_radians(60.0), 16, 16);
  Dataset data = render_dataset(ref.scene, cams, rc, true);
  data.frames[0].file_path = "r_nan";
  data.frames[0].image.at(5, 5, 1) = std::numeric_limits<double>::quiet_NaN();

  Scene scene = make_trainee(11);
  scene.cfg.lighting = LightingMode::Known;
  scene.lights = ref.scene.lights;
  std::vector<double> before = scene.store.value_vec();

  TrainConfig cfg = quick_config();
  TrainState state = init_training(scene, cfg);
  StepMetrics m = train_step(state, data, cfg);

  EXPECT_TRUE(m.aborted);
  EXPECT_TRUE(std::isnan(m.loss_total));
  EXPECT_NE(m.note.find("r_nan"), std::string::npos);
  EXPECT_NE(m.note.find("frame 0"), std::string::npos);
  EXPECT_EQ(state.step, 1);    // the poisoned batch is skipped, not retried
  EXPECT_EQ(state.opt.t, 0);   // no optimizer update happened
  for (size_t i = 0; i < before.size(); ++i)
    ASSERT_EQ(before[i], scene.store.value_vec()[i]);
}

TEST(TrainStepTest, SilhouetteGradientMatchesFiniteDifferences) {
  ReferenceScene ref = make_reference_scene("sphere");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(1, 2.6, 0.3, {0, 0, 0}, degrees_to_radians(60.0), 8, 8);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  SceneConfig tc = trainee_config();
  tc.sdf.sphere_count = 1;
  Scene scene;
  scene.build(tc);
  set_sketch_sphere(scene, 0, {0.2, 0.1, 0.0}, 0.5);
  scene.sdf.sketch().set_smoothing(scene.store, 32.0);

  TrainConfig cfg = quick_config();
  cfg.loss.photometric_weight = 0.0;
  cfg.silhouette.samples = 16;
  cfg.crop = 8;
  cfg.workers = 2;
  std::vector<double> saved = scene.store.value_vec();

  TrainState state = init_training(scene, cfg);
  StepMetrics m = train_step(state, data, cfg);
  ASSERT_FALSE(m.aborted);
  std::vector<double> grad = scene.store.grad_vec();
  scene.store.value_vec() = saved;  // undo the optimizer update for the oracle

  const Camera& cam = data.frames[0].camera;
  auto loss_now = [&]() {
    const double* p = scene.store.values();
    auto cache = scene.sdf.prepare(p);
    CropSample full = full_frame(cam);
    Image est(cam.width, cam.height, 1);
    for (size_t i = 0; i < full.pixel_count(); ++i) {
      Ray seg = pixel_ray(cam, full, i);
      double v = 0.0;
      if (clip_to_scene(scene, seg))
        v = silhouette_soft_value(scene.sdf, p, cache, seg, cfg.silhouette);
      est.at(int(i) % cam.width, int(i) / cam.width, 0) = v;
    }
    return silhouette_loss(data.frames[0].mask, est, cfg.loss.eps_bce);
  };

  const auto& sk = scene.sdf.sketch();
  std::vector<int64_t> indices = {sk.centers_offset(), sk.centers_offset() + 1,
                                  sk.centers_offset() + 2, sk.radii_offset()};
  auto rep = testutil::fd_check(scene.store, loss_now, grad, indices, 1e-5);
  EXPECT_LT(rep.max_rel_err, 1e-4)
      << "worst index " << rep.worst_index << ": ad=" << rep.ad << " fd=" << rep.fd;
}

TEST(TrainStepTest, SilhouetteStepsPullTheSphereTowardTheTruth) {
  ReferenceScene ref = make_reference_scene("sphere");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(2, 2.6, 0.3, {0, 0, 0}, degrees_to_radians(60.0), 24, 24);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  SceneConfig tc = trainee_config();
  tc.sdf.sphere_count = 1;
  Scene scene;
  scene.build(tc);
  set_sketch_sphere(scene, 0, {0.3, 0.2, 0.0}, 0.55);
  scene.sdf.sketch().set_smoothing(scene.store, 32.0);

  TrainConfig cfg = quick_config();
  cfg.loss.photometric_weight = 0.0;
  cfg.optimizer.lr = 1e-2;
  cfg.crop = 24;
  TrainState state = init_training(scene, cfg);

  const auto& sk = scene.sdf.sketch();
  auto center_error = [&]() {
    Vec3d c{scene.store[sk.centers_offset()], scene.store[sk.centers_offset() + 1],
            scene.store[sk.centers_offset() + 2]};
    return length(c);  // the reference sphere sits at the origin
  };
  double initial = center_error();
  double first_loss = 0.0, last_loss = 0.0;
  for (int i = 0; i < 100; ++i) {
    StepMetrics m = train_step(state, data, cfg);
    ASSERT_FALSE(m.aborted);
    if (i == 0) first_loss = m.loss_total;
    last_loss = m.loss_total;
  }
  EXPECT_LT(center_error(), 0.6 * initial);
  EXPECT_LT(last_loss, first_loss);
}

TEST(FitTest, ToyTwoSphereLossDropsByHalf) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(6, 2.6, 0.45, {0, 0, 0}, degrees_to_radians(60.0), 48, 48);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  Scene scene = make_trainee(13);
  // Deliberately wrong start: a vertical pair against the horizontal target.
  set_sketch_sphere(scene, 0, {0.0, 0.3, 0.0}, 0.3);
  set_sketch_sphere(scene, 1, {0.0, -0.25, 0.0}, 0.35);
  scene.sdf.sketch().set_smoothing(scene.store, 32.0);

  TrainConfig cfg;
  cfg.optimizer.lr = 5e-3;
  cfg.crop = 24;
  cfg.seed = 11;
  cfg.visibility = VisibilityMode::None;
  cfg.silhouette.samples = 32;
  cfg.silhouette.alpha = 30.0;
  cfg.total_steps = 500;
  cfg.stage1_steps = 120;
  cfg.residual_gate = 0.15;

  TrainState state = init_training(scene, cfg);
  std::vector<StepMetrics> trace;
  FitResult result = fit(state, data, cfg, &trace);

  ASSERT_EQ(result.steps_run, 500);
  ASSERT_EQ(trace.size(), 500u);
  for (const auto& m : trace) ASSERT_FALSE(m.aborted) << "step " << m.step;
  double baseline = trace[10].loss_total;
  double tail = 0.0;
  for (size_t i = 490; i < 500; ++i) tail += trace[i].loss_total;
  tail /= 10.0;
  EXPECT_GT(baseline, 0.0);
  EXPECT_LE(tail, 0.5 * baseline)
      << "baseline " << baseline << " tail " << tail;
}

TEST(FitTest, ResumingFromACheckpointContinuesBitExactly) {
  ReferenceScene ref = make_reference_scene("sphere");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(2, 2.6, 0.3, {0, 0, 0}, degrees_to_radians(60.0), 16, 16);
  Dataset data = render_dataset(ref.scene, cams, rc, true);
  TempTrainDir dir;

  TrainConfig cfg = quick_config();
  cfg.crop = 12;
  cfg.silhouette.samples = 16;
  cfg.seed = 21;
  cfg.total_steps = 6;
  cfg.stage1_steps = 2;
  cfg.residual_gate = 0.2;
  cfg.checkpoint_every = 3;

  TrainConfig cfg_a = cfg;
  cfg_a.checkpoint_dir = dir.path("a");
  Scene scene_a = make_trainee(19);
  TrainState state_a = init_training(scene_a, cfg_a);
  std::vector<StepMetrics> trace_a;
  fit(state_a, data, cfg_a, &trace_a);
  ASSERT_EQ(trace_a.size(), 6u);

  TrainConfig cfg_b = cfg;
  cfg_b.checkpoint_dir = dir.path("b");
  Scene scene_b;
  scene_b.build(trainee_config());
  TrainState state_b = resume_training(scene_b, cfg_b,
                                       dir.path("a") + "/step_000003.ckpt");
  EXPECT_EQ(state_b.step, 3);
  EXPECT_EQ(state_b.seed, 21u);
  std::vector<StepMetrics> trace_b;
  fit(state_b, data, cfg_b, &trace_b);

  ASSERT_EQ(trace_b.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(trace_b[i].step, trace_a[i + 3].step);
    EXPECT_EQ(trace_b[i].loss_total, trace_a[i + 3].loss_total);
    EXPECT_EQ(trace_b[i].grad_norm, trace_a[i + 3].grad_norm);
  }
  ASSERT_EQ(scene_a.store.value_vec().size(), scene_b.store.value_vec().size());
  for (size_t i = 0; i < scene_a.store.value_vec().size(); ++i)
    ASSERT_EQ(scene_a.store.value_vec()[i], scene_b.store.value_vec()[i]);
}

TEST(FitTest, MetricsLogHasExactlyTheDeclaredFields) {
  ReferenceScene ref = make_reference_scene("sphere");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(1, 2.6, 0.3, {0, 0, 0}, degrees_to_radians(60.0), 16, 16);
  Dataset data = render_dataset(ref.scene, cams, rc, true);
  TempTrainDir dir;

  TrainConfig cfg = quick_config();
  cfg.crop = 12;
  cfg.silhouette.samples = 16;
  cfg.total_steps = 2;
  cfg.stage1_steps = 0;
  cfg.metrics_path = dir.path("metrics.jsonl");

  Scene scene = make_trainee(25);
  TrainState state = init_training(scene, cfg);
  fit(state, data, cfg);

  std::ifstream in(cfg.metrics_path);
  ASSERT_TRUE(in.good());
  std::string line;
  int64_t step = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.size(), 6u);
    for (const char* key :
         {"step", "loss_total", "loss_photo", "loss_sil", "grad_norm", "wall_ms"})
      EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["step"].get<int64_t>(), step);
    EXPECT_TRUE(std::isfinite(j["loss_total"].get<double>()));
    ++step;
  }
  EXPECT_EQ(step, 2);
}

TEST(FitTest, LightMetadataControlsWhatTheLightNetworksDo) {
  ReferenceScene ref = make_reference_scene("two_spheres");
  RenderConfig rc;
  rc.visibility = VisibilityMode::None;
  auto cams = make_ring_cameras(2, 2.6, 0.4, {0, 0, 0}, degrees_to_radians(60.0), 48, 48);
  Dataset with_lights = render_dataset(ref.scene, cams, rc, true);
  Dataset without_lights = render_dataset(ref.scene, cams, rc, false);

  TrainConfig cfg = quick_config();
  cfg.crop = 48;
  cfg.total_steps = 2;
  cfg.stage1_steps = 0;

  auto near_truth = [&](Scene& scene) {
    set_sketch_sphere(scene, 0, {-0.45, 0.0, 0.0}, 0.55);
    set_sketch_sphere(scene, 1, {0.5, 0.08, 0.05}, 0.42);
    scene.sdf.sketch().set_smoothing(scene.store, 32.0);
  };

  {
    Scene scene = make_trainee(27);
    near_truth(scene);
    std::vector<double> before = scene.store.value_vec();
    TrainState state = init_training(scene, cfg);
    fit(state, with_lights, cfg);
    EXPECT_EQ(int(scene.cfg.lighting), int(LightingMode::Known));
    EXPECT_TRUE(scene.store.find("light.field.l0.w")->frozen);
    EXPECT_EQ(segment_max_diff(scene.store, before, "light.field"), 0.0);
    EXPECT_GT(segment_max_diff(scene.store, before, "bsdf"), 0.0);
  }
  {
    Scene scene = make_trainee(27);
    near_truth(scene);
    std::vector<double> before = scene.store.value_vec();
    TrainState state = init_training(scene, cfg);
    fit(state, without_lights, cfg);
    EXPECT_EQ(int(scene.cfg.lighting), int(LightingMode::Learned));
    EXPECT_FALSE(scene.store.find("light.field.l0.w")->frozen);
    EXPECT_GT(segment_max_diff(scene.store, before, "light.field"), 0.0);
    // The occlusion network only moves when learned visibility is in play.
    EXPECT_TRUE(scene.store.find("light.occlusion.l0.w")->frozen);
    EXPECT_EQ(segment_max_diff(scene.store, before, "light.occlusion"), 0.0);
  }
}

TEST(FitTest, OcclusionDistillationLearnsHardShadows) {
  ReferenceScene ref = make_reference_scene("sphere_plane");
  RenderConfig rc;
  rc.visibility = VisibilityMode::Hard;
  auto cams = make_ring_cameras(3, 3.2, 0.8, {0, 0, 0}, degrees_to_radians(60.0), 32, 32);
  Dataset data = render_dataset(ref.scene, cams, rc, true);

  // Train only the occlusion network of the reference scene itself; its MLP
  // starts at exactly zero, so the first distillation loss is exactly 0.25.
  Scene& scene = ref.scene;
  scene.store.set_all_frozen(true);
  scene.store.set_frozen("light.occlusion", false);

  TrainConfig cfg;
  cfg.loss.photometric_weight = 0.0;
  cfg.loss.silhouette_weight = 0.0;
  cfg.loss.distill_weight = 1.0;
  cfg.optimizer.lr = 1e-2;
  cfg.crop = 16;
  cfg.visibility = VisibilityMode::Learned;
  TrainState state = init_training(scene, cfg);

  std::vector<double> losses;
  for (int i = 0; i < 60; ++i) {
    StepMetrics m = train_step(state, data, cfg);
    ASSERT_FALSE(m.aborted);
    losses.push_back(m.loss_distill);
  }
  EXPECT_DOUBLE_EQ(losses.front(), 0.25);
  double tail = 0.0;
  for (size_t i = losses.size() - 5; i < losses.size(); ++i) tail += losses[i];
  tail /= 5.0;
  EXPECT_LT(tail, 0.75 * losses.front());
}

TEST(StagePlanTest, StagesGateTheResidualAndTheFrozenMask) {
  Scene scene = make_trainee(33);
  TrainConfig cfg = quick_config();
  cfg.stage1_steps = 100;
  cfg.residual_gate = 0.7;
  cfg.visibility = VisibilityMode::Learned;
  scene.cfg.lighting = LightingMode::Learned;

  StagePlan warm = apply_stage(scene, cfg, 50);
  EXPECT_EQ(warm.stage, 1);
  EXPECT_EQ(warm.photometric_scale, 0.0);
  EXPECT_EQ(scene.sdf.residual_gate(), 0.0);
  EXPECT_FALSE(scene.store.find("sdf.sketch.c")->frozen);
  EXPECT_TRUE(scene.store.find("sdf.sketch.k_raw")->frozen);
  EXPECT_TRUE(scene.store.find("sdf.residual.l0.w")->frozen);
  EXPECT_TRUE(scene.store.find("bsdf.weights.l0.w")->frozen);
  EXPECT_TRUE(scene.store.find("light.field.l0.w")->frozen);

  StagePlan main = apply_stage(scene, cfg, 100);
  EXPECT_EQ(main.stage, 3);  // stage 3 starts with stage 2 by default
  EXPECT_EQ(main.photometric_scale, 1.0);
  EXPECT_EQ(scene.sdf.residual_gate(), 0.7);
  EXPECT_FALSE(scene.store.find("sdf.residual.l0.w")->frozen);
  EXPECT_FALSE(scene.store.find("bsdf.weights.l0.w")->frozen);
  EXPECT_FALSE(scene.store.find("light.field.l0.w")->frozen);
  EXPECT_FALSE(scene.store.find("light.occlusion.l0.w")->frozen);

  scene.cfg.lighting = LightingMode::Known;
  cfg.visibility = VisibilityMode::Hard;
  apply_stage(scene, cfg, 100);
  EXPECT_TRUE(scene.store.find("light.field.l0.w")->frozen);
  EXPECT_TRUE(scene.store.find("light.occlusion.l0.w")->frozen);

  cfg.stage3_start = 200;
  StagePlan mid = apply_stage(scene, cfg, 150);
  EXPECT_EQ(mid.stage, 2);
}

}  // namespace
