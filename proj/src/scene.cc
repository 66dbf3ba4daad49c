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

#include "headforge/scene.h"

#include <cmath>
#include <random>
#include <sstream>

#include "headforge/error.h"
#include "headforge/io.h"

namespace headforge {

namespace {

const Eigen::Vector3d kTemplateRadii(75.0, 100.0, 90.0);

bool in_hair_zone(const Eigen::Vector3d& d, double extent) {
  return d.y() < -extent + 0.7 * std::max(d.z(), 0.0) + 0.3 * std::abs(d.x());
}

Image make_background(int w, int h, double phase) {
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w, v = (y + 0.5) / h;
      out.at(x, y) = Rgb(static_cast<float>(0.45 + 0.25 * u),
                         static_cast<float>(0.55 + 0.08 * std::sin(2.0 * M_PI * (0.7 * u + phase))),
                         static_cast<float>(0.65 - 0.2 * v));
    }
  }
  return out;
}

TriMesh3D make_hair_shell(const SceneSpec& spec) {
  std::vector<Eigen::Vector3d> dirs;
  std::vector<Triangle> tris;
  make_icosphere(spec.n_subdiv, &dirs, &tris);
  const Eigen::Vector3d radii = kTemplateRadii.array() + spec.hair_offset_mm;
  std::vector<std::int64_t> remap(dirs.size(), -1);
  TriMesh3D mesh;
  std::vector<Eigen::Vector3d> kept;
  for (const Triangle& t : tris) {
    if (!in_hair_zone(dirs[t[0]], spec.hair_extent) || !in_hair_zone(dirs[t[1]], spec.hair_extent) ||
        !in_hair_zone(dirs[t[2]], spec.hair_extent)) {
      continue;
    }
    Triangle out;
    for (int k = 0; k < 3; ++k) {
      if (remap[t[k]] < 0) {
        remap[t[k]] = static_cast<std::int64_t>(kept.size());
        kept.push_back(dirs[t[k]].cwiseProduct(radii));
      }
      out[k] = static_cast<std::uint32_t>(remap[t[k]]);
    }
    mesh.triangles.push_back(out);
  }
  mesh.vertices.resize(3, static_cast<Eigen::Index>(kept.size()));
  for (size_t i = 0; i < kept.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = kept[i];
  return mesh;
}

std::string format_vector(const Eigen::VectorXd& v) {
  return format_doubles(v.data(), static_cast<size_t>(v.size()));
}

Eigen::VectorXd parse_vector(const std::string& text, const std::string& key, Eigen::Index n) {
  const std::vector<double> values = parse_doubles(text, key);
  if (static_cast<Eigen::Index>(values.size()) != n) {
    throw Error(ErrorCode::kConfig, key + ": expected " + std::to_string(n) + " values");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), n);
}

std::string take(KeyValues* values, const std::string& key) {
  auto it = values->find(key);
  if (it == values->end()) throw Error(ErrorCode::kConfig, "missing key: " + key);
  std::string v = it->second;
  values->erase(it);
  return v;
}

}  // namespace

void SceneSpec::validate() const {
  if (n_subdiv < 1 || n_subdiv > 7) throw Error(ErrorCode::kInvalidArgument, "n_subdiv must be in [1, 7]");
  if (k_id < 1 || k_exp < 1 || k_tex < 1) throw Error(ErrorCode::kInvalidArgument, "basis widths must be >= 1");
  if (width < 16 || height < 16) throw Error(ErrorCode::kInvalidArgument, "scene images must be at least 16x16");
  if (!(hair_offset_mm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "hair offset must be > 0");
  if (!(hair_frequency > 0.0)) throw Error(ErrorCode::kInvalidArgument, "hair frequency must be > 0");
  if (!std::isfinite(hair_extent)) throw Error(ErrorCode::kInvalidArgument, "hair extent must be finite");
  if (!(distance_mm > 300.0)) throw Error(ErrorCode::kInvalidArgument, "distance must exceed 300 mm");
  if (!(std::abs(relative_yaw_deg) >= 1.0 && std::abs(relative_yaw_deg) <= 30.0)) {
    throw Error(ErrorCode::kInvalidArgument, "relative rotation must be within 1 to 30 degrees");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw Error(ErrorCode::kInvalidArgument, "noise must be >= 0");
}

KeyValues SceneSpec::to_key_values() const {
  KeyValues kv;
  kv["seed"] = std::to_string(seed);
  kv["model_seed"] = std::to_string(model_seed);
  kv["n_subdiv"] = std::to_string(n_subdiv);
  kv["k_id"] = std::to_string(k_id);
  kv["k_exp"] = std::to_string(k_exp);
  kv["k_tex"] = std::to_string(k_tex);
  kv["width"] = std::to_string(width);
  kv["height"] = std::to_string(height);
  kv["hair"] = hair ? "true" : "false";
  kv["hair_offset_mm"] = format_double(hair_offset_mm);
  kv["hair_extent"] = format_double(hair_extent);
  kv["hair_frequency"] = format_double(hair_frequency);
  kv["distance_mm"] = format_double(distance_mm);
  kv["relative_yaw_deg"] = format_double(relative_yaw_deg);
  kv["noise"] = format_double(noise);
  return kv;
}

SceneSpec SceneSpec::from_key_values(KeyValues kv) {
  SceneSpec s;
  auto get = [&](const char* key, auto apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(it->second, key);
    kv.erase(it);
  };
  auto u64 = [](const std::string& v, const char* key) {
    const long x = parse_int(v, key);
    if (x < 0) throw Error(ErrorCode::kConfig, std::string(key) + " must be >= 0");
    return static_cast<std::uint64_t>(x);
  };
  get("seed", [&](const std::string& v, const char* k) { s.seed = u64(v, k); });
  get("model_seed", [&](const std::string& v, const char* k) { s.model_seed = u64(v, k); });
  get("n_subdiv", [&](const std::string& v, const char* k) { s.n_subdiv = static_cast<int>(parse_int(v, k)); });
  get("k_id", [&](const std::string& v, const char* k) { s.k_id = static_cast<int>(parse_int(v, k)); });
  get("k_exp", [&](const std::string& v, const char* k) { s.k_exp = static_cast<int>(parse_int(v, k)); });
  get("k_tex", [&](const std::string& v, const char* k) { s.k_tex = static_cast<int>(parse_int(v, k)); });
  get("width", [&](const std::string& v, const char* k) { s.width = static_cast<int>(parse_int(v, k)); });
  get("height", [&](const std::string& v, const char* k) { s.height = static_cast<int>(parse_int(v, k)); });
  get("hair", [&](const std::string& v, const char* k) { s.hair = parse_bool(v, k); });
  get("hair_offset_mm", [&](const std::string& v, const char* k) { s.hair_offset_mm = parse_double(v, k); });
  get("hair_extent", [&](const std::string& v, const char* k) { s.hair_extent = parse_double(v, k); });
  get("hair_frequency", [&](const std::string& v, const char* k) { s.hair_frequency = parse_double(v, k); });
  get("distance_mm", [&](const std::string& v, const char* k) { s.distance_mm = parse_double(v, k); });
  get("relative_yaw_deg", [&](const std::string& v, const char* k) { s.relative_yaw_deg = parse_double(v, k); });
  get("noise", [&](const std::string& v, const char* k) { s.noise = parse_double(v, k); });
  if (!kv.empty()) throw Error(ErrorCode::kConfig, "unknown scene key: " + kv.begin()->first);
  s.validate();
  return s;
}

Eigen::Vector3d hair_texture(const Eigen::Vector3d& p, double frequency) {
  const double k = 2.0 * M_PI * frequency;
  const double a = std::sin(k * (0.80 * p.x() + 0.45 * p.y() + 0.40 * p.z()) + 0.3);
  const double b = std::sin(k * (-0.35 * p.x() + 0.85 * p.y() - 0.40 * p.z()) + 1.7);
  const double c = std::sin(0.5 * k * (0.30 * p.x() - 0.20 * p.y() + 0.93 * p.z()) + 2.9);
  const double t = 0.5 + 0.22 * a + 0.18 * b + 0.10 * c;
  const Eigen::Vector3d base(0.42, 0.27, 0.15);
  return (base * (0.45 + 1.1 * t)).cwiseMax(0.0).cwiseMin(1.0);
}

SceneView render_scene_view(const HeadScene& scene, const Pose& pose) {
  const Camera& cam = scene.camera;
  const FaceRender face =
      render_face(scene.model, scene.coefficients, pose, scene.lighting, cam);
  RasterOutput hair;
  const bool has_hair = scene.hair.vertices.cols() > 0;
  if (has_hair) {
    hair = rasterize(apply_pose(scene.hair.vertices, pose), scene.hair.triangles, cam,
                     &scene.hair.vertices);
  }
  SceneView view;
  view.pose = pose;
  const int w = cam.width, h = cam.height;
  view.image = scene.background;
  view.depth = DepthMap(w, h, kUndefinedDepth);
  view.face_depth = face.depth;
  RegionMasks& m = view.masks;
  m.S = Mask(w, h, 0);
  m.S_f = Mask(w, h, 0);
  m.S_h = Mask(w, h, 0);
  m.F = face.coverage;
  for (size_t i = 0; i < view.image.size(); ++i) {
    const bool f = face.coverage[i] != 0;
    const bool hr = has_hair && hair.coverage[i] != 0;
    if (!f && !hr) continue;
    m.S[i] = 1;
    if (hr && (!f || hair.depth[i] < face.depth[i])) {
      m.S_h[i] = 1;
      view.depth[i] = hair.depth[i];
      view.image[i] = hair_texture(hair.color[i].cast<double>(), scene.spec.hair_frequency).cast<float>();
    } else {
      m.S_f[i] = 1;
      view.depth[i] = face.depth[i];
      view.image[i] = face.image[i];
    }
  }
  compute_hair_region(&m);
  for (std::uint32_t v : scene.model.landmark_indices) {
    const Projection p = project_point(face.vertices.col(v), cam);
    if (!p.valid) throw Error(ErrorCode::kBehindCamera, "landmark behind the camera");
    view.landmarks.push_back({v, p.pixel, 1.0});
  }
  return view;
}

Mask covisible_hair(const SceneView& from, const SceneView& to, const Camera& camera) {
  const Pose rel = relative_pose(from.pose, to.pose);
  Mask out(camera.width, camera.height, 0);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      if (!from.masks.H.at(x, y) || !from.masks.S_h.at(x, y)) continue;
      const Eigen::Vector3d p = rel.apply(from.depth.at(x, y) * camera.pixel_ray(x, y));
      const Projection q = project_point(p, camera);
      if (!q.valid) continue;
      const int qx = static_cast<int>(std::floor(q.pixel.x()));
      const int qy = static_cast<int>(std::floor(q.pixel.y()));
      if (!to.masks.S.contains(qx, qy) || !to.masks.S_h.at(qx, qy)) continue;
      const double tol = std::max(5.0, 0.005 * p.z());
      if (std::abs(to.depth.at(qx, qy) - p.z()) <= tol) out.at(x, y) = 1;
    }
  }
  return out;
}

HeadScene synth_scene(const SceneSpec& spec) {
  spec.validate();
  return synth_scene(spec, synthesize_model(spec.model_seed, spec.n_subdiv, spec.k_id,
                                            spec.k_exp, spec.k_tex));
}

HeadScene synth_scene(const SceneSpec& spec, const MorphableModel& model) {
  spec.validate();
  model.validate();
  HeadScene scene;
  scene.spec = spec;
  scene.spec.n_subdiv = spec.n_subdiv;
  scene.spec.k_id = model.k_id();
  scene.spec.k_exp = model.k_exp();
  scene.spec.k_tex = model.k_tex();
  scene.model = model;
  scene.camera = Camera::default_for(spec.width, spec.height);
  scene.camera.height = spec.height;
  scene.camera.principal_point = Eigen::Vector2d(0.5 * spec.width, 0.5 * spec.height);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  scene.coefficients = FaceCoefficients::zeros(model);
  for (int j = 0; j < model.k_id(); ++j) scene.coefficients.alpha[j] = 0.8 * normal(rng) * model.scales_id()[j];
  for (int j = 0; j < model.k_exp(); ++j) scene.coefficients.beta[j] = 0.8 * normal(rng) * model.scales_exp()[j];
  for (int j = 0; j < model.k_tex(); ++j) scene.coefficients.delta[j] = 0.8 * normal(rng) * model.scales_tex()[j];

  scene.lighting = SHLighting::ambient(0.8);
  for (int j = 1; j < 4; ++j) scene.lighting.gamma[j] = uniform(-0.25, 0.25);
  for (int j = 4; j < 9; ++j) scene.lighting.gamma[j] = uniform(-0.08, 0.08);

  Pose pose1;
  pose1.quaternion = quaternion_from_euler_deg(uniform(-8.0, 8.0), uniform(-5.0, 5.0), uniform(-3.0, 3.0));
  pose1.translation = Eigen::Vector3d(uniform(-15.0, 15.0), uniform(-15.0, 15.0),
                                      spec.distance_mm + uniform(-20.0, 20.0));
  Pose pose2 = pose1;
  pose2.quaternion = quaternion_multiply(
      quaternion_from_axis_angle(Eigen::Vector3d::UnitY(), spec.relative_yaw_deg * M_PI / 180.0),
      pose1.quaternion);
  const double phase = uniform(0.0, 1.0);
  scene.background = make_background(spec.width, spec.height, phase);
  if (spec.hair) scene.hair = make_hair_shell(spec);

  scene.views[0] = render_scene_view(scene, pose1);
  scene.views[1] = render_scene_view(scene, pose2);
  scene.views[0].covisible = covisible_hair(scene.views[0], scene.views[1], scene.camera);
  scene.views[1].covisible = covisible_hair(scene.views[1], scene.views[0], scene.camera);
  if (spec.noise > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise);
    for (auto& view : scene.views) {
      for (auto& px : view.image.data()) {
        for (int c = 0; c < 3; ++c) {
          px[c] = static_cast<float>(std::clamp(px[c] + noise(rng), 0.0, 1.0));
        }
      }
    }
  }
  return scene;
}

std::string format_landmarks(const LandmarkSet& landmarks) {
  std::string out;
  for (size_t i = 0; i < landmarks.size(); ++i) {
    if (i) out += "; ";
    const auto& l = landmarks[i];
    out += std::to_string(l.vertex) + " " + format_double(l.observed.x()) + " " +
           format_double(l.observed.y()) + " " + format_double(l.weight);
  }
  return out;
}

LandmarkSet parse_landmarks(const std::string& text) {
  LandmarkSet out;
  std::stringstream all(text);
  std::string item;
  while (std::getline(all, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const std::vector<double> v = parse_doubles(item, "landmarks");
    if (v.size() != 4 || v[0] < 0 || v[0] != std::floor(v[0])) {
      throw Error(ErrorCode::kConfig, "landmarks: expected 'vertex x y weight' entries");
    }
    if (!(v[3] >= 0.0)) throw Error(ErrorCode::kConfig, "landmarks: weights must be >= 0");
    out.push_back({static_cast<std::uint32_t>(v[0]), Eigen::Vector2d(v[1], v[2]), v[3]});
  }
  return out;
}

std::string format_pose(const Pose& pose) {
  Eigen::Matrix<double, 7, 1> v;
  v << pose.quaternion, pose.translation;
  return format_doubles(v.data(), 7);
}

Pose parse_pose(const std::string& text, const std::string& key) {
  const Eigen::VectorXd v = parse_vector(text, key, 7);
  Pose p;
  p.quaternion = v.head<4>();
  p.translation = v.tail<3>();
  return p.normalized();
}

void save_scene(const HeadScene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  KeyValues kv = scene.spec.to_key_values();
  kv["camera.focal"] = format_double(scene.camera.focal);
  kv["camera.principal_point"] = format_doubles(scene.camera.principal_point.data(), 2);
  kv["gamma"] = format_doubles(scene.lighting.gamma.data(), 9);
  kv["alpha"] = format_vector(scene.coefficients.alpha);
  kv["beta"] = format_vector(scene.coefficients.beta);
  kv["delta"] = format_vector(scene.coefficients.delta);
  for (int k = 0; k < 2; ++k) {
    const std::string s = std::to_string(k + 1);
    const SceneView& v = scene.views[k];
    kv["pose" + s] = format_pose(v.pose);
    kv["landmarks" + s] = format_landmarks(v.landmarks);
    write_png(v.image, dir / ("image" + s + ".png"));
    write_mask_png(v.masks.S, dir / ("S" + s + ".png"));
    write_mask_png(v.masks.S_f, dir / ("Sf" + s + ".png"));
    write_mask_png(v.masks.S_h, dir / ("Sh" + s + ".png"));
    write_mask_png(v.masks.F, dir / ("F" + s + ".png"));
    write_mask_png(v.masks.H, dir / ("H" + s + ".png"));
    write_mask_png(v.covisible, dir / ("covis" + s + ".png"));
    write_depth(v.depth, dir / ("depth" + s + ".dpth"));
    write_depth(v.face_depth, dir / ("face_depth" + s + ".dpth"));
  }
  write_key_values(kv, dir / "scene.txt");
  save_model(scene.model, dir / "model.p3dm");
  write_png(scene.background, dir / "background.png");
  save_obj(scene.hair, dir / "hair_model.obj");
}

HeadScene load_scene(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "scene bundle not found: " + dir.string());
  }
  KeyValues kv = read_key_values(dir / "scene.txt");
  HeadScene scene;
  scene.model = load_model(dir / "model.p3dm");
  const double focal = parse_double(take(&kv, "camera.focal"), "camera.focal");
  const Eigen::VectorXd pp = parse_vector(take(&kv, "camera.principal_point"), "camera.principal_point", 2);
  Eigen::VectorXd gamma = parse_vector(take(&kv, "gamma"), "gamma", 9);
  scene.lighting.gamma = gamma;
  scene.coefficients.alpha = parse_vector(take(&kv, "alpha"), "alpha", scene.model.k_id());
  scene.coefficients.beta = parse_vector(take(&kv, "beta"), "beta", scene.model.k_exp());
  scene.coefficients.delta = parse_vector(take(&kv, "delta"), "delta", scene.model.k_tex());
  std::array<Pose, 2> poses;
  std::array<LandmarkSet, 2> landmarks;
  for (int k = 0; k < 2; ++k) {
    const std::string s = std::to_string(k + 1);
    poses[k] = parse_pose(take(&kv, "pose" + s), "pose" + s);
    landmarks[k] = parse_landmarks(take(&kv, "landmarks" + s));
  }
  scene.spec = SceneSpec::from_key_values(kv);
  scene.camera.width = scene.spec.width;
  scene.camera.height = scene.spec.height;
  scene.camera.focal = focal;
  scene.camera.principal_point = pp;
  scene.camera.validate();
  scene.background = read_png(dir / "background.png");
  scene.hair = load_obj(dir / "hair_model.obj");
  for (int k = 0; k < 2; ++k) {
    const std::string s = std::to_string(k + 1);
    SceneView& v = scene.views[k];
    v.pose = poses[k];
    v.landmarks = landmarks[k];
    v.image = read_png(dir / ("image" + s + ".png"));
    v.masks.S = read_mask_png(dir / ("S" + s + ".png"));
    v.masks.S_f = read_mask_png(dir / ("Sf" + s + ".png"));
    v.masks.S_h = read_mask_png(dir / ("Sh" + s + ".png"));
    v.masks.F = read_mask_png(dir / ("F" + s + ".png"));
    v.masks.H = read_mask_png(dir / ("H" + s + ".png"));
    v.covisible = read_mask_png(dir / ("covis" + s + ".png"));
    v.depth = read_depth(dir / ("depth" + s + ".dpth"));
    v.face_depth = read_depth(dir / ("face_depth" + s + ".dpth"));
    v.masks.validate();
    require_same_shape(v.image, v.masks.S, "scene image");
  }
  return scene;
}

}  // namespace headforge
