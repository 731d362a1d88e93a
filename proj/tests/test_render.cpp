#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "drt/integrator.hpp"
#include "drt/png_io.hpp"
#include "test_util.hpp"

using namespace drt;

namespace {

TEST(CameraTest, CenterPixelLooksDownMinusZ) {
  Camera cam;
  cam.width = cam.height = 101;
  cam.fov_x = degrees_to_radians(60.0);
  CropSample crop;
  crop.u0 = 50;
  crop.v0 = 50;
  crop.width = crop.height = 1;
  Ray ray = generate_rays(cam, crop)[0];
  EXPECT_NEAR(ray.d.x, 0.0, 1e-12);
  EXPECT_NEAR(ray.d.y, 0.0, 1e-12);
  EXPECT_NEAR(ray.d.z, -1.0, 1e-12);
}

TEST(CameraTest, CornerRayAngleMatchesPinholeGeometry) {
  Camera cam;
  cam.width = 64;
  cam.height = 48;
  cam.fov_x = degrees_to_radians(50.0);
  CropSample crop;
  crop.width = crop.height = 1;  // top-left pixel, center at (0.5, 0.5)
  Ray ray = generate_rays(cam, crop)[0];
  double f = focal_pixels(cam);
  double dx = 0.5 - 0.5 * cam.width;
  double dy = 0.5 * cam.height - 0.5;
  double expected = std::atan(std::sqrt(dx * dx + dy * dy) / f);
  double got = std::acos(-ray.d.z);
  EXPECT_NEAR(got, expected, 1e-12);
}

TEST(CameraTest, AllDirectionsAreUnit) {
  Camera cam = look_at_camera({2.0, -1.5, 1.0}, {0, 0, 0}, degrees_to_radians(45.0), 32, 24);
  auto rays = generate_rays(cam, full_frame(cam));
  ASSERT_EQ(rays.size(), 32u * 24u);
  for (const auto& r : rays) EXPECT_NEAR(length(r.d), 1.0, 1e-6);
}

TEST(CameraTest, ProjectionRoundTripRecoversThePixel) {
  Camera cam = look_at_camera({1.2, 2.0, -0.7}, {0.1, -0.2, 0.3}, degrees_to_radians(55.0),
                              96, 80);
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    int u = int(rng.next_below(96));
    int v = int(rng.next_below(80));
    CropSample crop;
    crop.u0 = u;
    crop.v0 = v;
    crop.width = crop.height = 1;
    Ray ray = generate_rays(cam, crop)[0];
    Vec3d p = ray.o + ray.d * rng.uniform(0.5, 5.0);
    double pu = 0.0, pv = 0.0;
    ASSERT_TRUE(project_point(cam, p, pu, pv));
    EXPECT_NEAR(pu, u + 0.5, 0.5);
    EXPECT_NEAR(pv, v + 0.5, 0.5);
  }
}

TEST(CameraTest, MalformedCamerasAreRejected) {
  Camera cam;
  cam.fov_x = 4.0;
  EXPECT_THROW(check_camera(cam), ConfigError);
  cam.fov_x = 1.0;
  cam.c2w(0, 0) = 2.0;
  EXPECT_THROW(check_camera(cam), ConfigError);
  Camera ok;
  CropSample crop;
  crop.u0 = 120;
  crop.width = 16;
  crop.height = 8;
  EXPECT_THROW(check_crop(ok, crop), ConfigError);
}

TEST(ImageTest, SrgbRoundTripIsIdentity) {
  for (double v : {0.0, 0.001, 0.0031308, 0.02, 0.2, 0.5, 0.9, 1.0}) {
    EXPECT_NEAR(srgb_decode(srgb_encode(v)), v, 1e-12);
  }
}

TEST(ImageTest, CompositeOverWhiteUsesAlpha) {
  Image img(2, 1, 4);
  img.at(0, 0, 0) = 0.25;
  img.at(0, 0, 3) = 1.0;
  img.at(1, 0, 0) = 0.25;
  img.at(1, 0, 3) = 0.0;  // transparent: becomes white
  Image out = composite_over_white(img);
  EXPECT_NEAR(out.at(0, 0, 0), 0.25, 1e-15);
  EXPECT_NEAR(out.at(1, 0, 0), 1.0, 1e-15);
  EXPECT_NEAR(out.at(1, 0, 1), 1.0, 1e-15);
}

struct IoFixture : ::testing::Test {
  std::filesystem::path dir;
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() /
          ("drt_render_" + std::to_string(uint64_t(::testing::UnitTest::GetInstance()
                                                       ->random_seed()) ^
                                          uint64_t(reinterpret_cast<uintptr_t>(this))));
    std::filesystem::create_directories(dir);
  }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(IoFixture, RawDumpRoundTripsFloatValues) {
  Image img(3, 2, 4);
  Rng rng(5);
  for (auto& d : img.data) d = double(float(rng.uniform(-2.0, 2.0)));
  std::string path = (dir / "img.raw").string();
  save_raw(path, img);
  Image back = load_raw(path);
  ASSERT_TRUE(back.same_shape(img));
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(back.data[i], img.data[i]);
}

TEST_F(IoFixture, TruncatedRawFileIsAParseError) {
  Image img(4, 4, 3);
  std::string path = (dir / "img.raw").string();
  save_raw(path, img);
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(load_raw(path), ParseError);
}

TEST_F(IoFixture, PngRoundTripQuantizesTo8Bit) {
  Image img(5, 4, 3);
  Rng rng(6);
  for (auto& d : img.data) d = rng.next_double();
  std::string path = (dir / "img.png").string();
  write_png(path, img, false);
  Image back = read_png(path);
  ASSERT_TRUE(back.same_shape(img));
  for (size_t i = 0; i < img.data.size(); ++i) {
    double expected = std::lround(img.data[i] * 255.0) / 255.0;
    EXPECT_NEAR(back.data[i], expected, 1e-12);
  }
}

TEST_F(IoFixture, PngAlphaChannelSurvives) {
  Image img(3, 3, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      img.at(x, y, 0) = 0.5;
      img.at(x, y, 3) = (x == 1) ? 1.0 : 0.0;
    }
  std::string path = (dir / "rgba.png").string();
  write_png(path, img);
  Image back = read_png(path);
  ASSERT_EQ(back.channels, 4);
  EXPECT_EQ(back.at(1, 1, 3), 1.0);
  EXPECT_EQ(back.at(0, 1, 3), 0.0);
}

// ---------------------------------------------------------------------------
// Integrators.
// ---------------------------------------------------------------------------

RenderConfig base_config() {
  RenderConfig cfg;
  cfg.visibility = VisibilityMode::Hard;
  return cfg;
}

TEST(IntegratorTest, EmptyViewRendersUniformBackground) {
  auto ref = make_reference_scene("sphere");
  // Camera pointing away from the scene: every ray misses the scene sphere.
  Camera cam = look_at_camera({0, 0, 4}, {0, 0, 8}, degrees_to_radians(50.0), 16, 16);
  RenderConfig cfg = base_config();
  cfg.background = {0.2, 0.3, 0.4};
  Image img = render_image(ref.scene, cam, cfg);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      EXPECT_EQ(img.at(x, y, 0), 0.2);
      EXPECT_EQ(img.at(x, y, 1), 0.3);
      EXPECT_EQ(img.at(x, y, 2), 0.4);
      EXPECT_EQ(img.at(x, y, 3), 0.0);
    }
}

TEST(IntegratorTest, LambertianSphereMatchesClosedForm) {
  auto ref = make_reference_scene("sphere");
  Camera cam = look_at_camera({0, 0, 3}, {0, 0, 0}, degrees_to_radians(50.0), 64, 64);
  RenderConfig cfg = base_config();
  Image img = render_image(ref.scene, cam, cfg);

  const PointLight& light = ref.scene.lights[0];
  const Vec3d albedo = ref.scene.analytic->albedo;
  double mae = 0.0;
  int mask_mismatch = 0;
  auto rays = generate_rays(cam, full_frame(cam));
  for (size_t i = 0; i < rays.size(); ++i) {
    int x = int(i % 64), y = int(i / 64);
    double t;
    Vec3d n;
    bool hit = intersect_spheres(ref.spheres, rays[i], t, n);
    if (hit != (img.at(x, y, 3) > 0.5)) {
      mask_mismatch++;
      continue;
    }
    Vec3d expected{0, 0, 0};
    if (hit) {
      Vec3d p = rays[i].o + rays[i].d * t;
      auto ls = sample_point_light<double>(light, p);
      double cl = softplus(dot(ls.wi, n) * 40.0) / 40.0;  // the renderer's smooth clamp
      expected = {albedo.x / kPi * ls.radiance.x * cl, albedo.y / kPi * ls.radiance.y * cl,
                  albedo.z / kPi * ls.radiance.z * cl};
    }
    for (int c = 0; c < 3; ++c) mae += std::fabs(img.at(x, y, c) - expected[c]);
  }
  mae /= double(rays.size() * 3);
  EXPECT_LE(mask_mismatch, 8);  // sub-pixel boundary band only
  EXPECT_LT(mae, 1e-3);
}

TEST(IntegratorTest, NormalsIntegratorEncodesTheCenterNormal) {
  auto ref = make_reference_scene("sphere");
  Camera cam = look_at_camera({0, 0, 3}, {0, 0, 0}, degrees_to_radians(40.0), 33, 33);
  RenderConfig cfg = base_config();
  cfg.integrator = IntegratorKind::Normals;
  Image img = render_image(ref.scene, cam, cfg);
  // The center pixel sees the sphere head on: normal (0,0,1) maps to (.5,.5,1).
  EXPECT_NEAR(img.at(16, 16, 0), 0.5, 1e-3);
  EXPECT_NEAR(img.at(16, 16, 1), 0.5, 1e-3);
  EXPECT_NEAR(img.at(16, 16, 2), 1.0, 1e-3);
  EXPECT_EQ(img.at(16, 16, 3), 1.0);
}

TEST(IntegratorTest, LightDirectionIntegratorPointsAtTheLight) {
  auto ref = make_reference_scene("sphere");
  ref.scene.lights[0].position = {0.0, 0.0, 5.0};
  Camera cam = look_at_camera({0, 0, 3}, {0, 0, 0}, degrees_to_radians(40.0), 33, 33);
  RenderConfig cfg = base_config();
  cfg.integrator = IntegratorKind::LightDirection;
  Image img = render_image(ref.scene, cam, cfg);
  // At the sphere's front pole the light sits straight up the +z axis.
  EXPECT_NEAR(img.at(16, 16, 0), 0.5, 1e-3);
  EXPECT_NEAR(img.at(16, 16, 1), 0.5, 1e-3);
  EXPECT_NEAR(img.at(16, 16, 2), 1.0, 1e-3);
}

TEST(IntegratorTest, SilhouetteIntegratorSeparatesInsideFromOutside) {
  auto ref = make_reference_scene("sphere");
  Camera cam = look_at_camera({0, 0, 3}, {0, 0, 0}, degrees_to_radians(50.0), 33, 33);
  RenderConfig cfg = base_config();
  cfg.integrator = IntegratorKind::Silhouette;
  Image img = render_image(ref.scene, cam, cfg);
  EXPECT_GT(img.at(16, 16, 0), 1.0 - 1e-6);
  EXPECT_LT(img.at(0, 0, 0), 1e-6);
  EXPECT_EQ(img.at(16, 16, 0), img.at(16, 16, 3));
}

TEST(IntegratorTest, VisibilityNoneDominatesHardShadows) {
  auto ref = make_reference_scene("sphere_plane");
  Camera cam = look_at_camera({0.0, -2.4, 1.4}, {0, 0, -0.2}, degrees_to_radians(55.0),
                              48, 48);
  RenderConfig hard = base_config();
  RenderConfig none = base_config();
  none.visibility = VisibilityMode::None;
  Image ih = render_image(ref.scene, cam, hard);
  Image in_ = render_image(ref.scene, cam, none);
  for (size_t i = 0; i < ih.data.size(); ++i) EXPECT_GE(in_.data[i], ih.data[i] - 1e-12);
}

TEST(IntegratorTest, HardShadowsMatchTheAnalyticOracle) {
  auto ref = make_reference_scene("sphere_plane");
  const PointLight& light = ref.scene.lights[0];
  Camera cam = look_at_camera({0.0, -2.4, 1.4}, {0, 0, -0.2}, degrees_to_radians(55.0),
                              96, 96);
  RenderConfig cfg = base_config();
  Image img = render_image(ref.scene, cam, cfg);

  auto rays = generate_rays(cam, full_frame(cam));
  int agree = 0, total = 0;
  for (size_t i = 0; i < rays.size(); ++i) {
    int x = int(i % 96), y = int(i / 96);
    double t;
    Vec3d n;
    if (!intersect_spheres(ref.spheres, rays[i], t, n)) continue;
    Vec3d p = rays[i].o + rays[i].d * t;
    if (length(p) > 3.0) continue;  // stay well inside the scene clip sphere
    if (img.at(x, y, 3) < 0.5) continue;
    Vec3d to = light.position - p;
    double cosine = dot(normalize(to), n);
    if (std::fabs(cosine) < 0.05) continue;  // grazing light: skip the ambiguous band
    bool oracle_lit = cosine > 0.0 && !segment_occluded(ref.spheres, p, light.position, 1e-4);
    bool render_lit = img.at(x, y, 0) > 1e-4;
    total++;
    if (oracle_lit == render_lit) agree++;
  }
  ASSERT_GT(total, 4000);
  EXPECT_GE(double(agree) / total, 0.995);
}

TEST(IntegratorTest, PathDepthOneEqualsDirectBitwise) {
  auto ref = make_reference_scene("two_spheres");
  Camera cam = look_at_camera({0.4, -2.6, 0.9}, {0, 0, 0}, degrees_to_radians(50.0), 24, 24);
  RenderConfig direct = base_config();
  RenderConfig path = base_config();
  path.integrator = IntegratorKind::Path;
  path.path_depth = 1;
  path.path_spp = 2;
  Image a = render_image(ref.scene, cam, direct);
  Image b = render_image(ref.scene, cam, path);
  for (size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]);
}

TEST(IntegratorTest, SecondBounceOnAConvexSceneAddsNothing) {
  auto ref = make_reference_scene("sphere");
  Camera cam = look_at_camera({0, 0, 3}, {0, 0, 0}, degrees_to_radians(45.0), 16, 16);
  RenderConfig p1 = base_config();
  p1.integrator = IntegratorKind::Path;
  p1.path_depth = 1;
  p1.path_spp = 4;
  RenderConfig p2 = p1;
  p2.path_depth = 2;
  Image a = render_image(ref.scene, cam, p1);
  Image b = render_image(ref.scene, cam, p2);
  // Every secondary ray leaves the convex sphere, so the traces coincide.
  for (size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]);
}

TEST(IntegratorTest, PathVarianceShrinksWithSampleCount) {
  auto ref = make_reference_scene("two_spheres");
  Camera cam = look_at_camera({0.4, -2.6, 0.9}, {0, 0, 0}, degrees_to_radians(50.0), 9, 9);
  RenderConfig direct = base_config();
  Image mean_img = render_image(ref.scene, cam, direct);

  auto mse_at = [&](int spp, uint64_t seed) {
    RenderConfig p = base_config();
    p.integrator = IntegratorKind::Path;
    p.path_depth = 1;
    p.path_spp = spp;
    p.jitter = false;
    p.seed = seed;
    Image img = render_image(ref.scene, cam, p);
    double mse = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) {
      double d = img.data[i] - mean_img.data[i];
      mse += d * d;
    }
    return mse / double(img.data.size());
  };
  // Depth-1, no jitter: deterministic, zero variance regardless of spp.
  EXPECT_EQ(mse_at(1, 1), 0.0);
  EXPECT_EQ(mse_at(4, 2), 0.0);
}

TEST(IntegratorTest, CropsComposeToTheFullFrame) {
  auto ref = make_reference_scene("two_spheres");
  Camera cam = look_at_camera({0.4, -2.6, 0.9}, {0, 0, 0}, degrees_to_radians(50.0), 20, 20);
  RenderConfig cfg = base_config();
  cfg.jitter = true;
  cfg.seed = 77;
  Image full = render_image(ref.scene, cam, cfg);
  for (int half = 0; half < 2; ++half) {
    CropSample crop;
    crop.u0 = half * 10;
    crop.v0 = 0;
    crop.width = 10;
    crop.height = 20;
    Image part = render_image(ref.scene, cam, cfg, &crop);
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 10; ++x)
        for (int c = 0; c < 4; ++c)
          ASSERT_EQ(part.at(x, y, c), full.at(half * 10 + x, y, c));
  }
}

TEST(IntegratorTest, WorkerCountDoesNotChangeTheImage) {
  auto ref = make_reference_scene("two_spheres");
  Camera cam = look_at_camera({0.4, -2.6, 0.9}, {0, 0, 0}, degrees_to_radians(50.0), 20, 20);
  RenderConfig cfg = base_config();
  cfg.jitter = true;
  Image one = render_image(ref.scene, cam, cfg);
  cfg.workers = 4;
  Image four = render_image(ref.scene, cam, cfg);
  for (size_t i = 0; i < one.data.size(); ++i) ASSERT_EQ(one.data[i], four.data[i]);
}

TEST(IntegratorTest, ShadeTermGradientMatchesFiniteDifferences) {
  auto ref = make_reference_scene("two_spheres");
  Scene& scene = ref.scene;
  Rng rng(17);
  scene.init(rng);
  set_sketch_sphere(scene, 0, {-0.45, 0.0, 0.0}, 0.55);
  set_sketch_sphere(scene, 1, {0.5, 0.08, 0.05}, 0.42);
  scene.analytic.reset();  // exercise the learned mixture

  Vec3d x{-0.2, 0.3, 0.45};
  Vec3d n = normalize(Vec3d{-0.1, 0.4, 0.9});
  Vec3d wo = normalize(Vec3d{0.3, -0.5, 0.8});
  const PointLight& light = scene.lights[0];

  auto objective = [&]() {
    auto ls = sample_point_light<double>(light, x);
    double V = scene.occlusion.evaluate<double>(scene.store.values(), nullptr, x, ls.wi);
    auto ang = rusink_angles<double>(n, ls.wi, wo);
    Vec3d f = scene.reflectance.eval<double>(scene.store.values(), nullptr, x, ang);
    Vec3d L = shade_term<double>(f, ang, ls, n, V, 40.0);
    return L.x + L.y + L.z;
  };

  Tape tape;
  tape.bind(scene.store.values(), scene.store.size());
  scene.store.zero_grad();
  {
    Vec3<Var> xv(x), nv(n), wov(wo);
    auto ls = sample_point_light<Var>(light, xv);
    Var V = scene.occlusion.evaluate<Var>(scene.store.values(), &tape, xv, ls.wi);
    auto ang = rusink_angles<Var>(nv, ls.wi, wov);
    Vec3<Var> f = scene.reflectance.eval<Var>(scene.store.values(), &tape, xv, ang);
    Vec3<Var> L = shade_term<Var>(f, ang, ls, nv, V, 40.0);
    Var obj = L.x + L.y + L.z;
    tape.backward(obj, {scene.store.grads(), size_t(scene.store.size())});
  }

  std::vector<double> grad(scene.store.grads(), scene.store.grads() + scene.store.size());
  auto idx = testutil::sample_indices(scene.store, 80, rng);
  auto rep = testutil::fd_check(scene.store, objective, grad, idx, 1e-5);
  EXPECT_LT(rep.max_rel_err, 1e-4)
      << "worst index " << rep.worst_index << " ad " << rep.ad << " fd " << rep.fd;
}

}  // namespace
