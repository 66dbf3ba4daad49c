/*
Copyright 2026 The Headforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// headforge: command-line front end for every pipeline stage.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "headforge/error.h"
#include "headforge/fit.h"
#include "headforge/gradcheck.h"
#include "headforge/io.h"
#include "headforge/manipulate.h"
#include "headforge/model.h"
#include "headforge/scene.h"
#include "headforge/service.h"

namespace fs = std::filesystem;
using namespace headforge;

namespace {

std::string view_suffix(int view) { return std::to_string(view); }

void require_view(int view) {
  if (view != 1 && view != 2) {
    throw Error(ErrorCode::kInvalidArgument, "--view must be 1 or 2");
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

// --config, else HEADFORGE_CONFIG, else defaults; then --set overrides.
FitConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  FitConfig config;
  std::string source = path;
  if (source.empty()) {
    if (const char* env = std::getenv("HEADFORGE_CONFIG"); env && *env) source = env;
  }
  if (!source.empty()) config = load_fit_config(source);
  if (overrides.empty()) return config;
  KeyValues kv = config.to_key_values();
  const KeyValues known = kv;
  for (const std::string& item : overrides) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kConfig, "--set expects key=value, got '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    if (!known.count(key)) throw Error(ErrorCode::kConfig, "unknown config key: " + key);
    kv[key] = item.substr(eq + 1);
  }
  return FitConfig::from_key_values(kv);
}

DepthView scene_depth_view(const HeadScene& scene, int view, const fs::path& face_dir) {
  const SceneView& v = scene.views[view - 1];
  DepthView out{v.image, v.masks, v.face_depth, v.pose};
  if (!face_dir.empty()) {
    const std::string s = view_suffix(view);
    out.face_depth = read_depth(face_dir / ("face_depth" + s + ".dpth"));
    out.masks.F = read_mask_png(face_dir / ("F" + s + ".png"));
    require_same_shape(out.face_depth, out.image, "face depth");
    require_same_shape(out.masks.F, out.image, "face coverage");
    const FaceParameters params =
        load_face_parameters(face_dir / ("face" + s + ".txt"), scene.model);
    out.pose = params.pose;
    compute_hair_region(&out.masks);
  }
  return out;
}

int cmd_synth_model(std::uint64_t seed, int subdiv, int k_id, int k_exp, int k_tex,
                    const fs::path& out) {
  const MorphableModel model = synthesize_model(seed, subdiv, k_id, k_exp, k_tex);
  if (out.has_parent_path()) make_dir(out.parent_path());
  save_model(model, out);
  std::printf("model %s vertices %ld triangles %ld\n", out.string().c_str(),
              static_cast<long>(model.mean_shape.size() / 3), static_cast<long>(model.triangles.size()));
  return 0;
}

int cmd_synth_scene(SceneSpec spec, const std::string& model_path, const fs::path& out) {
  HeadScene scene;
  if (!model_path.empty()) {
    const MorphableModel model = load_model(model_path);
    spec.k_id = model.k_id();
    spec.k_exp = model.k_exp();
    spec.k_tex = model.k_tex();
    scene = synth_scene(spec, model);
  } else {
    scene = synth_scene(spec);
  }
  make_dir(out);
  save_scene(scene, out);
  std::printf("scene %s\n", out.string().c_str());
  return 0;
}

int cmd_fit_face(const fs::path& scene_dir, int view, const std::string& init_mode,
                 std::uint64_t seed, const FitConfig& config, const fs::path& out) {
  require_view(view);
  const HeadScene scene = load_scene(scene_dir);
  const SceneView& v = scene.views[view - 1];
  const FaceParameters truth{scene.coefficients, v.pose, scene.lighting};
  FaceParameters init;
  if (init_mode == "gt") {
    init = truth;
  } else if (init_mode == "perturbed") {
    init = perturb_face_parameters(truth, scene.model, seed);
  } else if (init_mode == "mean") {
    init = truth;
    init.coefficients.alpha.setZero();
    init.coefficients.beta.setZero();
    init.coefficients.delta.setZero();
    init.lighting = SHLighting::ambient(0.8);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "--init must be perturbed, gt or mean");
  }
  const FaceObservation obs{v.image, v.masks.S_f, v.landmarks, scene.camera};
  const FaceFitResult fit = fit_face(scene.model, obs, config, init);
  const FaceRender render = render_face(scene.model, fit.params.coefficients, fit.params.pose,
                                        fit.params.lighting, scene.camera);
  make_dir(out);
  const std::string s = view_suffix(view);
  save_face_parameters(fit.params, out / ("face" + s + ".txt"));
  write_depth(render.depth, out / ("face_depth" + s + ".dpth"));
  write_mask_png(render.coverage, out / ("F" + s + ".png"));
  write_png(render.image, out / ("render" + s + ".png"));
  write_face_trace(fit.trace, out / ("trace" + s + ".csv"));
  std::printf("face view %d energy %s photo %s lmk %s best_iteration %d%s%s\n", view,
              format_double(fit.energy).c_str(), format_double(fit.terms.photo).c_str(),
              format_double(fit.terms.lmk).c_str(), fit.best_iteration,
              fit.diagnostic.empty() ? "" : " note ", fit.diagnostic.c_str());
  return fit.aborted ? 3 : 0;
}

void write_depth_summary(const DepthFitResult& fit, const fs::path& path) {
  KeyValues kv;
  kv["energy"] = format_double(fit.energy);
  kv["initial_energy"] = format_double(fit.initial_energy);
  kv["color"] = format_double(fit.terms.color);
  kv["grad"] = format_double(fit.terms.grad);
  kv["smooth"] = format_double(fit.terms.smooth);
  kv["face"] = format_double(fit.terms.face);
  kv["layer"] = format_double(fit.terms.layer);
  kv["degenerate_pair"] = fit.degenerate_pair ? "true" : "false";
  kv["unanchored_components"] = std::to_string(fit.unanchored_components);
  kv["diagnostic"] = fit.diagnostic;
  write_key_values(kv, path);
}

int cmd_fit_depth(const fs::path& scene_dir, const fs::path& face_dir, bool ablate,
                  FitConfig config, const fs::path& out) {
  const HeadScene scene = load_scene(scene_dir);
  if (ablate) config.condition_on_face_depth = false;
  const DepthView v1 = scene_depth_view(scene, 1, face_dir);
  const DepthView v2 = scene_depth_view(scene, 2, face_dir);
  const DepthFitResult fit = fit_depth_pair(v1, v2, scene.camera, config);
  make_dir(out);
  write_depth(fit.depth1, out / "depth1.dpth");
  write_depth(fit.depth2, out / "depth2.dpth");
  for (int k = 1; k <= 2; ++k) {
    const RegionMasks& m = (k == 1 ? v1 : v2).masks;
    write_mask_png(m.S, out / ("S" + view_suffix(k) + ".png"));
    write_mask_png(m.S_f, out / ("Sf" + view_suffix(k) + ".png"));
  }
  write_depth_trace(fit.trace, out / "trace.csv");
  write_depth_summary(fit, out / "summary.txt");
  std::printf("depth energy %s initial %s%s%s\n", format_double(fit.energy).c_str(),
              format_double(fit.initial_energy).c_str(), fit.diagnostic.empty() ? "" : " note ",
              fit.diagnostic.c_str());
  return fit.aborted ? 3 : 0;
}

int cmd_fit_depth_single(const fs::path& scene_dir, const fs::path& face_dir, int view,
                         const FitConfig& config, const fs::path& out) {
  require_view(view);
  const HeadScene scene = load_scene(scene_dir);
  const DepthView v = scene_depth_view(scene, view, face_dir);
  const DepthFitResult fit = fit_depth_single(v, config);
  make_dir(out);
  const std::string s = view_suffix(view);
  write_depth(fit.depth1, out / ("depth" + s + ".dpth"));
  write_mask_png(v.masks.S, out / ("S" + s + ".png"));
  write_mask_png(v.masks.S_f, out / ("Sf" + s + ".png"));
  write_depth_trace(fit.trace, out / "trace.csv");
  write_depth_summary(fit, out / "summary.txt");
  std::printf("depth energy %s initial %s\n", format_double(fit.energy).c_str(),
              format_double(fit.initial_energy).c_str());
  return fit.aborted ? 3 : 0;
}

int cmd_render(const fs::path& scene_dir, const fs::path& face_dir, const fs::path& depth_dir,
               int view, bool estimate_plate, const fs::path& out) {
  require_view(view);
  const HeadScene scene = load_scene(scene_dir);
  const SceneView& v = scene.views[view - 1];
  const std::string s = view_suffix(view);
  FaceParameters params{scene.coefficients, v.pose, scene.lighting};
  RegionMasks masks = v.masks;
  if (!face_dir.empty()) {
    params = load_face_parameters(face_dir / ("face" + s + ".txt"), scene.model);
    masks.H = Mask();  // recomputed from the fitted coverage
    masks.F = read_mask_png(face_dir / ("F" + s + ".png"));
  }
  const DepthMap depth =
      depth_dir.empty() ? v.depth : read_depth(depth_dir / ("depth" + s + ".dpth"));
  const HeadAssets assets = assemble_assets(scene.model, params, v.image, depth, masks,
                                            scene.camera,
                                            estimate_plate ? nullptr : &scene.background);
  save_assets(assets, out);
  const Manipulation source = manipulate_pose(assets, Pose());
  write_png(source.image, out / "composite.png");
  std::printf("assets %s face_vertices %ld hair_vertices %ld\n", out.string().c_str(),
              static_cast<long>(assets.face.vertices.cols()),
              static_cast<long>(assets.hair.vertices.cols()));
  return 0;
}

int cmd_rotate(const fs::path& assets_dir, const PoseRequest& request, const fs::path& out,
               const fs::path& mask_out) {
  const HeadAssets assets = load_assets(assets_dir);
  const Manipulation m = manipulate_pose(assets, request.delta());
  KeyValues text;
  text["hole_pixels"] = std::to_string(count(m.hole));
  Image image = m.image;
  if (request.fill) {
    image = fill_holes(m.image, m.hole);
    text["filled"] = "harmonic";
  }
  if (out.has_parent_path()) make_dir(out.parent_path());
  write_png(image, out, &text);
  if (!mask_out.empty()) write_mask_png(m.hole, mask_out);
  std::printf("rotate hole_pixels %zu\n", count(m.hole));
  return 0;
}

int cmd_fill(const fs::path& image_path, const fs::path& mask_path, const fs::path& out) {
  const Image image = read_png(image_path);
  const Mask hole = read_mask_png(mask_path);
  require_same_shape(hole, image, "fill");
  const Image filled = fill_holes(image, hole);
  KeyValues text;
  text["hole_pixels"] = std::to_string(count(hole));
  text["filled"] = "harmonic";
  if (out.has_parent_path()) make_dir(out.parent_path());
  write_png(filled, out, &text);
  return 0;
}

Camera bundle_camera(const fs::path& dir, int width, int height) {
  Camera camera = Camera::default_for(width, height);
  const fs::path path = dir / "scene.txt";
  if (fs::exists(path)) {
    const KeyValues kv = read_key_values(path);
    if (auto it = kv.find("camera.focal"); it != kv.end()) {
      camera.focal = parse_double(it->second, "camera.focal");
    }
    if (auto it = kv.find("camera.principal_point"); it != kv.end()) {
      const std::vector<double> pp = parse_doubles(it->second, "camera.principal_point");
      if (pp.size() != 2) throw Error(ErrorCode::kDimension, "camera.principal_point needs 2 values");
      camera.principal_point = {pp[0], pp[1]};
    }
  }
  camera.validate();
  return camera;
}

Mask bundle_mask(const fs::path& gt, const fs::path& pred, const std::string& name) {
  if (fs::exists(gt / name)) return read_mask_png(gt / name);
  if (fs::exists(pred / name)) return read_mask_png(pred / name);
  throw Error(ErrorCode::kIo, "mask " + name + " in neither bundle");
}

// Pools the per-view errors of every view present in both bundles.
int cmd_eval(const fs::path& pred, const fs::path& gt) {
  double face_sum = 0.0, nonface_sum = 0.0;
  size_t face_n = 0, nonface_n = 0;
  int views = 0;
  for (int k = 1; k <= 2; ++k) {
    const std::string name = "depth" + view_suffix(k) + ".dpth";
    if (!fs::exists(pred / name) || !fs::exists(gt / name)) continue;
    const DepthMap p = read_depth(pred / name);
    const DepthMap g = read_depth(gt / name);
    require_same_shape(p, g, "eval");
    const Mask S = bundle_mask(gt, pred, "S" + view_suffix(k) + ".png");
    const Mask S_f = mask_and(bundle_mask(gt, pred, "Sf" + view_suffix(k) + ".png"), S);
    require_same_shape(S, g, "eval mask");
    Mask defined(g.width(), g.height(), 0);
    for (size_t i = 0; i < g.size(); ++i) defined[i] = is_defined(g[i]) && is_defined(p[i]);
    const Mask face = mask_and(S_f, defined);
    const Mask nonface = mask_and(mask_minus(S, S_f), defined);
    const ReconstructionError e =
        evaluate_reconstruction(p, g, face, nonface, bundle_camera(gt, g.width(), g.height()));
    face_sum += e.face_mm * static_cast<double>(e.face_count);
    nonface_sum += e.nonface_mm * static_cast<double>(e.nonface_count);
    face_n += e.face_count;
    nonface_n += e.nonface_count;
    ++views;
  }
  if (views == 0) {
    throw Error(ErrorCode::kIo, "no depth view present in both " + pred.string() + " and " +
                                    gt.string());
  }
  const double face = face_n ? face_sum / static_cast<double>(face_n) : 0.0;
  const double nonface = nonface_n ? nonface_sum / static_cast<double>(nonface_n) : 0.0;
  std::printf("face %.3f non-face %.3f\n", face, nonface);
  return 0;
}

int cmd_gradcheck(const std::string& module, const GradcheckOptions& options) {
  if (module != "losses") {
    throw Error(ErrorCode::kInvalidArgument, "gradcheck supports --module losses");
  }
  bool all = true;
  for (const LossCheck& c : run_loss_gradchecks(options)) {
    std::printf("%-22s %s tested %zu excluded %zu passed %zu worst %.3g\n", c.name.c_str(),
                c.passed ? "PASS" : "FAIL", c.check.tested, c.check.excluded, c.check.passed,
                c.check.worst_relative_error);
    all = all && c.passed;
  }
  return all ? 0 : 1;
}

int cmd_serve(const fs::path& assets, const fs::path& ui, const std::string& host,
              std::optional<int> port_flag) {
  int port = 8080;
  if (port_flag) {
    port = *port_flag;
  } else if (const char* env = std::getenv("PORT"); env && *env) {
    port = static_cast<int>(parse_int(env, "PORT"));
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
  HeadService service(assets, ui);
  if (!service.assets_loaded()) {
    std::fprintf(stderr, "warning assets_missing %s\n", service.load_error().c_str());
  }
  const int bound = service.bind(host, port);
  if (bound < 0) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  std::printf("listening http://%s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  return service.listen() ? 0 : 1;
}

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headforge: two-view head reconstruction and pose manipulation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "fit configuration file (key = value)");
    sub->add_option("--set", overrides, "override one configuration key (key=value)");
  };

  // synth-model
  std::uint64_t seed = 1;
  int subdiv = 4, k_id = 16, k_exp = 8, k_tex = 16;
  std::string out;
  auto* synth_model = app.add_subcommand("synth-model", "synthesize a morphable model");
  synth_model->add_option("--seed", seed);
  synth_model->add_option("--subdiv", subdiv, "icosphere subdivisions");
  synth_model->add_option("--k-id", k_id);
  synth_model->add_option("--k-exp", k_exp);
  synth_model->add_option("--k-tex", k_tex);
  synth_model->add_option("-o,--output", out)->required();

  // synth-scene
  SceneSpec spec;
  std::string model_path;
  bool no_hair = false;
  auto* synth_scene_cmd = app.add_subcommand("synth-scene", "render a synthetic two-view scene");
  synth_scene_cmd->add_option("--seed", spec.seed);
  synth_scene_cmd->add_option("--model", model_path, "model file; synthesized when omitted");
  synth_scene_cmd->add_option("--model-seed", spec.model_seed);
  synth_scene_cmd->add_option("--subdiv", spec.n_subdiv);
  synth_scene_cmd->add_option("--width", spec.width);
  synth_scene_cmd->add_option("--height", spec.height);
  synth_scene_cmd->add_option("--relative-yaw", spec.relative_yaw_deg, "degrees");
  synth_scene_cmd->add_option("--noise", spec.noise);
  synth_scene_cmd->add_option("--distance", spec.distance_mm, "mm");
  synth_scene_cmd->add_option("--hair-offset", spec.hair_offset_mm, "mm");
  synth_scene_cmd->add_option("--hair-extent", spec.hair_extent);
  synth_scene_cmd->add_option("--hair-frequency", spec.hair_frequency, "cycles per mm");
  synth_scene_cmd->add_flag("--no-hair", no_hair);
  synth_scene_cmd->add_option("-o,--output", out)->required();

  // fit-face
  std::string scene_dir, face_dir, depth_dir, init_mode = "perturbed";
  int view = 1;
  auto* fit_face_cmd = app.add_subcommand("fit-face", "fit the morphable model to one view");
  fit_face_cmd->add_option("--scene", scene_dir)->required();
  fit_face_cmd->add_option("--view", view);
  fit_face_cmd->add_option("--init", init_mode, "perturbed | gt | mean");
  fit_face_cmd->add_option("--seed", seed, "seed of the perturbed start");
  add_config(fit_face_cmd);
  fit_face_cmd->add_option("-o,--output", out)->required();

  // fit-depth
  bool ablate = false;
  auto* fit_depth_cmd = app.add_subcommand("fit-depth", "two-view depth fit");
  fit_depth_cmd->add_option("--scene", scene_dir)->required();
  fit_depth_cmd->add_option("--face", face_dir, "fit-face output; ground truth when omitted");
  fit_depth_cmd->add_flag("--ablate", ablate, "no face-depth conditioning");
  add_config(fit_depth_cmd);
  fit_depth_cmd->add_option("-o,--output", out)->required();

  auto* fit_single_cmd = app.add_subcommand("fit-depth-single", "prior-only single-view depth");
  fit_single_cmd->add_option("--scene", scene_dir)->required();
  fit_single_cmd->add_option("--face", face_dir);
  fit_single_cmd->add_option("--view", view);
  add_config(fit_single_cmd);
  fit_single_cmd->add_option("-o,--output", out)->required();

  // render
  bool estimate_plate = false;
  auto* render_cmd = app.add_subcommand("render", "assemble a manipulable head bundle");
  render_cmd->add_option("--scene", scene_dir)->required();
  render_cmd->add_option("--face", face_dir);
  render_cmd->add_option("--depth", depth_dir);
  render_cmd->add_option("--view", view);
  render_cmd->add_flag("--estimate-plate", estimate_plate, "fill the head region instead of using the background");
  render_cmd->add_option("-o,--output", out)->required();

  // rotate
  std::string assets_dir, mask_out;
  PoseRequest pose;
  auto* rotate_cmd = app.add_subcommand("rotate", "render the head at a new pose");
  rotate_cmd->add_option("--assets", assets_dir)->required();
  rotate_cmd->add_option("--yaw", pose.yaw, "degrees");
  rotate_cmd->add_option("--pitch", pose.pitch, "degrees");
  rotate_cmd->add_option("--roll", pose.roll, "degrees");
  rotate_cmd->add_option("--tx", pose.tx, "mm");
  rotate_cmd->add_option("--ty", pose.ty, "mm");
  rotate_cmd->add_option("--tz", pose.tz, "mm");
  rotate_cmd->add_flag("--fill", pose.fill, "fill vacated pixels");
  rotate_cmd->add_option("--mask", mask_out, "write the hole mask here");
  rotate_cmd->add_option("-o,--output", out)->required();

  // fill
  std::string image_path, mask_path;
  auto* fill_cmd = app.add_subcommand("fill", "harmonic fill of masked pixels");
  fill_cmd->add_option("--image", image_path)->required();
  fill_cmd->add_option("--mask", mask_path)->required();
  fill_cmd->add_option("-o,--output", out)->required();

  // eval
  std::string pred_dir, gt_dir;
  auto* eval_cmd = app.add_subcommand("eval", "face / non-face reconstruction error in mm");
  eval_cmd->add_option("--pred", pred_dir)->required();
  eval_cmd->add_option("--gt", gt_dir)->required();

  // gradcheck
  std::string module = "losses";
  GradcheckOptions gopt;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck_cmd->add_option("--module", module);
  gradcheck_cmd->add_option("--seed", gopt.seed);
  gradcheck_cmd->add_option("--size", gopt.size);
  gradcheck_cmd->add_option("--max-coordinates", gopt.max_coordinates);

  // serve
  std::string ui_dir = "ui", host = "127.0.0.1";
  std::optional<int> port;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP pose-editing service");
  serve_cmd->add_option("--assets", assets_dir)->required();
  serve_cmd->add_option("--ui", ui_dir, "static files served under /ui");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port, "defaults to $PORT, then 8080");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error code=usage message=%s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (*synth_model) return cmd_synth_model(seed, subdiv, k_id, k_exp, k_tex, out);
    if (*synth_scene_cmd) {
      spec.hair = !no_hair;
      return cmd_synth_scene(spec, model_path, out);
    }
    if (*fit_face_cmd) {
      return cmd_fit_face(scene_dir, view, init_mode, seed,
                          resolve_config(config_path, overrides), out);
    }
    if (*fit_depth_cmd) {
      return cmd_fit_depth(scene_dir, face_dir, ablate, resolve_config(config_path, overrides),
                           out);
    }
    if (*fit_single_cmd) {
      return cmd_fit_depth_single(scene_dir, face_dir, view,
                                  resolve_config(config_path, overrides), out);
    }
    if (*render_cmd) return cmd_render(scene_dir, face_dir, depth_dir, view, estimate_plate, out);
    if (*rotate_cmd) return cmd_rotate(assets_dir, pose, out, mask_out);
    if (*fill_cmd) return cmd_fill(image_path, mask_path, out);
    if (*eval_cmd) return cmd_eval(pred_dir, gt_dir);
    if (*gradcheck_cmd) return cmd_gradcheck(module, gopt);
    if (*serve_cmd) return cmd_serve(assets_dir, ui_dir, host, port);
  } catch (const Error& e) {
    std::fprintf(stderr, "error code=%s message=%s\n", error_code_name(e.code()),
                 one_line(e.what()).c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error code=internal message=%s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 2;
}
