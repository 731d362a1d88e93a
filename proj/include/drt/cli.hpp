#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drt/config.hpp"
#include "drt/edit.hpp"
#include "drt/metrics.hpp"
#include "drt/png_io.hpp"

// The command-line surface: one binary, six subcommands (synth, train,
// render, relight, edit, eval). Every run is reproducible from its artifacts:
// the effective configuration is echoed into the output directory, and
// checkpoints carry the full model description, so later commands can reopen
// them without the original config file.

namespace drt::cli {

struct Args {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string resume;
  std::string edit_script;
  std::vector<double> light_pos;
  std::vector<double> light_intensity{10.0, 10.0, 10.0};
  int view = -1;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

inline RunConfig effective_config(const Args& a) {
  RunConfig cfg;
  if (!a.config_path.empty()) cfg = load_run_config(a.config_path);
  for (const std::string& kv : a.overrides) apply_config_override(cfg, kv);
  if (a.seed_set) cfg.seed = a.seed;
  if (a.threads >= 0) cfg.threads = a.threads;
  cfg.resolve_runtime();
  return cfg;
}

inline void echo_config(const RunConfig& cfg, const std::string& out) {
  std::filesystem::create_directories(out);
  std::string path = (std::filesystem::path(out) / "resolved_config.json").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << run_config_json(cfg).dump(2) << "\n";
}

// Model description embedded in checkpoint headers; enough to rebuild the
// scene (architecture, frame, lighting mode, light list) from the file alone.
inline nlohmann::json scene_extra(const Scene& scene) {
  nlohmann::json e;
  e["scene"] = cfg_detail::scene_json(scene.cfg);
  nlohmann::json lights = nlohmann::json::array();
  for (const PointLight& l : scene.lights)
    lights.push_back({{"position", cfg_detail::vec3_json(l.position)},
                      {"intensity", cfg_detail::vec3_json(l.intensity)}});
  e["lights"] = lights;
  return e;
}

inline Scene load_scene(const std::string& path) {
  nlohmann::json extra = read_checkpoint_extra(path);
  if (!extra.contains("scene"))
    throw ParseError("checkpoint carries no scene description: " + path);
  SceneConfig sc;
  cfg_detail::apply_scene(extra["scene"], "checkpoint.scene", sc);
  Scene scene;
  scene.build(sc);
  load_checkpoint(path, scene.store);
  scene.sdf.set_residual_gate(extra.value("residual_gate", 1.0));
  if (extra.contains("lights")) {
    for (const auto& lj : extra["lights"]) {
      PointLight l;
      l.position = cfg_detail::as_vec3(lj.at("position"), "checkpoint.lights.position");
      l.intensity = cfg_detail::as_vec3(lj.at("intensity"), "checkpoint.lights.intensity");
      scene.lights.push_back(l);
    }
  }
  return scene;
}

inline std::vector<Camera> view_cameras(const Args& a, const RunConfig& cfg,
                                        const Scene& scene, const Dataset* data) {
  std::vector<Camera> cams;
  if (data) {
    for (const Frame& f : data->frames) cams.push_back(f.camera);
  } else {
    cams = make_ring_cameras(cfg.synth.views, cfg.synth.ring_radius, cfg.synth.elevation,
                             scene.cfg.center, degrees_to_radians(cfg.synth.fov_x_degrees),
                             cfg.synth.width, cfg.synth.height, cfg.synth.azimuth_offset);
  }
  if (a.view >= 0) {
    check_config(size_t(a.view) < cams.size(), "view index out of range");
    cams = {cams[size_t(a.view)]};
  }
  return cams;
}

inline std::string view_name(const std::string& out, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03zu.png", i);
  return (std::filesystem::path(out) / buf).string();
}

inline int cmd_synth(const Args& a) {
  RunConfig cfg = effective_config(a);
  cfg.render.validate();
  ReferenceScene ref = make_reference_scene(cfg.synth.scene);
  std::vector<PointLight> lights =
      cfg.synth.lights.empty() ? ref.scene.lights : cfg.synth.lights;
  check_config(!lights.empty(), "synth scene has no lights");
  check_config(cfg.synth.light_index.empty() ||
                   cfg.synth.light_index.size() == size_t(cfg.synth.views),
               "synth.light_index must list one light per view");
  for (int li : cfg.synth.light_index)
    check_config(li >= 0 && li < int(lights.size()), "synth.light_index out of range");

  auto cams = make_ring_cameras(cfg.synth.views, cfg.synth.ring_radius, cfg.synth.elevation,
                                ref.scene.cfg.center,
                                degrees_to_radians(cfg.synth.fov_x_degrees), cfg.synth.width,
                                cfg.synth.height, cfg.synth.azimuth_offset);
  echo_config(cfg, a.out);
  SynthConfig sc;
  sc.render = cfg.render;
  sc.light_index = cfg.synth.light_index;
  sc.write_lights = cfg.synth.light_metadata;
  save_synthetic(ref.scene, cams, lights, a.out, sc);
  std::cout << "wrote " << cfg.synth.views << " views to " << a.out << "\n";
  return 0;
}

inline int cmd_train(const Args& a) {
  RunConfig cfg = effective_config(a);
  cfg.train.checkpoint_dir = a.out;
  cfg.train.metrics_path = (std::filesystem::path(a.out) / "metrics.jsonl").string();
  cfg.train.validate();
  echo_config(cfg, a.out);

  Dataset data = load_dataset(a.data, cfg.train.workers);
  Scene scene;
  scene.build(cfg.scene);
  scene.set_frame(data.center, data.radius);
  Rng rng(cfg.seed, 0x171eu);
  scene.init(rng);
  resolve_lighting(scene, data);

  TrainState state;
  if (a.resume.empty()) {
    state = init_training(scene, cfg.train);
  } else {
    state = resume_training(scene, cfg.train, a.resume);
  }
  state.extra = scene_extra(scene);

  FitResult result = fit(state, data, cfg.train);
  std::cout << "trained " << result.steps_run << " steps, final loss " << result.final_loss
            << ", checkpoint " << result.checkpoint << "\n";
  return 0;
}

inline int cmd_render(const Args& a, bool relight) {
  RunConfig cfg = effective_config(a);
  cfg.render.validate();
  Scene scene = load_scene(a.checkpoint);
  if (relight) {
    check_config(a.light_pos.size() == 3, "--light-pos needs x,y,z");
    check_config(a.light_intensity.size() == 3, "--light-intensity needs r,g,b");
    scene.lights = {PointLight{{a.light_pos[0], a.light_pos[1], a.light_pos[2]},
                               {a.light_intensity[0], a.light_intensity[1],
                                a.light_intensity[2]}}};
    scene.cfg.lighting = LightingMode::Known;
    cfg.render.light_index = 0;
  }

  std::optional<Dataset> data;
  if (!a.data.empty()) data = load_dataset(a.data, cfg.render.workers);
  std::vector<Camera> cams = view_cameras(a, cfg, scene, data ? &*data : nullptr);
  echo_config(cfg, a.out);
  for (size_t i = 0; i < cams.size(); ++i) {
    Image img = render_image(scene, cams[i], cfg.render);
    write_png(view_name(a.out, i), img, /*encode_srgb=*/true);
  }
  std::cout << "wrote " << cams.size() << " images to " << a.out << "\n";
  return 0;
}

inline int cmd_edit(const Args& a) {
  RunConfig cfg = effective_config(a);
  cfg.render.validate();
  Scene scene = load_scene(a.checkpoint);
  EditScript script = load_edit_script(a.edit_script);
  EditedSdfModel edited = apply_sdf_edit(scene.sdf, script.sdf);
  install_bsdf_edits(scene, script.bsdf);

  std::optional<Dataset> data;
  if (!a.data.empty()) data = load_dataset(a.data, cfg.render.workers);
  std::vector<Camera> cams = view_cameras(a, cfg, scene, data ? &*data : nullptr);
  echo_config(cfg, a.out);
  for (size_t i = 0; i < cams.size(); ++i) {
    Image img = render_image(scene, edited, cams[i], cfg.render);
    write_png(view_name(a.out, i), img, /*encode_srgb=*/true);
  }
  std::cout << "wrote " << cams.size() << " edited images to " << a.out << "\n";
  return 0;
}

inline int cmd_eval(const Args& a) {
  RunConfig cfg = effective_config(a);
  cfg.render.validate();
  Scene scene = load_scene(a.checkpoint);
  Dataset data = load_dataset(a.data, cfg.render.workers);
  echo_config(cfg, a.out);

  std::vector<Image> rendered, reference;
  double iou_sum = 0.0;
  std::vector<double> ious;
  for (const Frame& f : data.frames) {
    RenderConfig rc = cfg.render;
    rc.light_index = f.light_index;
    Image rgba = render_image(scene, f.camera, rc);
    Image rgb(rgba.width, rgba.height, 3);
    Image mask(rgba.width, rgba.height, 1);
    for (int y = 0; y < rgba.height; ++y)
      for (int x = 0; x < rgba.width; ++x) {
        for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = rgba.at(x, y, c);
        mask.at(x, y, 0) = rgba.at(x, y, 3);
      }
    ious.push_back(mask_iou(mask, f.mask));
    iou_sum += ious.back();
    rendered.push_back(std::move(rgb));
    reference.push_back(f.image);
  }
  MetricReport rep = evaluate_frames(rendered, reference);
  double mean_iou = iou_sum / double(data.frames.size());

  nlohmann::json out;
  out["mean_psnr"] = rep.mean_psnr;
  out["mean_ssim"] = rep.mean_ssim;
  out["mean_iou"] = mean_iou;
  out["frames"] = nlohmann::json::array();
  for (size_t i = 0; i < rendered.size(); ++i)
    out["frames"].push_back({{"psnr", rep.psnr_per_frame[i]},
                             {"ssim", rep.ssim_per_frame[i]},
                             {"iou", ious[i]}});
  std::string path = (std::filesystem::path(a.out) / "report.json").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << out.dump(2) << "\n";

  std::printf("%-8s %8s %8s %8s\n", "frame", "psnr", "ssim", "iou");
  for (size_t i = 0; i < rendered.size(); ++i)
    std::printf("%-8zu %8.2f %8.3f %8.3f\n", i, rep.psnr_per_frame[i],
                rep.ssim_per_frame[i], ious[i]);
  std::printf("%-8s %8.2f %8.3f %8.3f\n", "mean", rep.mean_psnr, rep.mean_ssim, mean_iou);
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"sketch-plus-residual differentiable renderer"};
  app.require_subcommand(1);
  Args a;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", a.config_path, "JSON config file");
    c->add_option("--set", a.overrides, "dotted-key override, key=value")
        ->take_all();
    auto* seed = c->add_option("--seed", a.seed, "RNG seed override");
    c->add_option("--threads", a.threads, "worker threads (0 = all cores)");
    c->parse_complete_callback([&a, seed] {
      if (seed->count() > 0) a.seed_set = true;
    });
  };

  CLI::App* synth = app.add_subcommand("synth", "render a reference scene into a dataset");
  add_common(synth);
  synth->add_option("--out", a.out, "output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "fit a scene to a dataset");
  add_common(train);
  train->add_option("--data", a.data, "dataset directory")->required();
  train->add_option("--out", a.out, "output directory for checkpoints and logs")->required();
  train->add_option("--resume", a.resume, "checkpoint to continue from");

  CLI::App* render = app.add_subcommand("render", "render views from a checkpoint");
  add_common(render);
  render->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  render->add_option("--out", a.out, "output image directory")->required();
  render->add_option("--data", a.data, "dataset whose cameras to render");
  render->add_option("--view", a.view, "render only this view index");

  CLI::App* relight = app.add_subcommand("relight", "render under a new point light");
  add_common(relight);
  relight->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  relight->add_option("--out", a.out, "output image directory")->required();
  relight->add_option("--data", a.data, "dataset whose cameras to render");
  relight->add_option("--view", a.view, "render only this view index");
  relight->add_option("--light-pos", a.light_pos, "light position x,y,z")
      ->expected(3)
      ->required();
  relight->add_option("--light-intensity", a.light_intensity, "light intensity r,g,b")
      ->expected(3);

  CLI::App* edit = app.add_subcommand("edit", "render under an edit script");
  add_common(edit);
  edit->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  edit->add_option("--edit", a.edit_script, "JSON edit script")->required();
  edit->add_option("--out", a.out, "output image directory")->required();
  edit->add_option("--data", a.data, "dataset whose cameras to render");
  edit->add_option("--view", a.view, "render only this view index");

  CLI::App* eval = app.add_subcommand("eval", "metrics of a checkpoint against a dataset");
  add_common(eval);
  eval->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", a.data, "dataset with reference images")->required();
  eval->add_option("--out", a.out, "output directory for the report")->required();

  std::vector<const char*> argv;
  argv.push_back("drt");
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(a);
    if (train->parsed()) return cmd_train(a);
    if (render->parsed()) return cmd_render(a, false);
    if (relight->parsed()) return cmd_render(a, true);
    if (edit->parsed()) return cmd_edit(a);
    if (eval->parsed()) return cmd_eval(a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace drt::cli
