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

// Synthetic two-view scenes with full ground truth: a morphable-model head
// under SH lighting, an unshaded procedurally textured hair shell and a
// smooth background plate.

#ifndef HEADFORGE_SCENE_H_
#define HEADFORGE_SCENE_H_

#include <array>
#include <cstdint>
#include <filesystem>

#include "headforge/geometry.h"
#include "headforge/losses.h"
#include "headforge/model.h"
#include "headforge/render.h"

namespace headforge {

struct SceneSpec {
  std::uint64_t seed = 1;
  // Model generated when none is supplied.
  std::uint64_t model_seed = 1;
  int n_subdiv = 4;
  int k_id = 16, k_exp = 8, k_tex = 16;
  int width = 128, height = 128;
  // Hair shell: template ellipsoid grown by |hair_offset_mm|, kept where
  // y < -hair_extent + 0.7 max(z, 0) + 0.3 |x| on the unit sphere.
  bool hair = true;
  double hair_offset_mm = 12.0;
  double hair_extent = 0.5;
  double hair_frequency = 0.05;  // cycles per mm
  // View 1 is drawn from the seed; view 2 adds a yaw about the model origin.
  double distance_mm = 1300.0;
  double relative_yaw_deg = 10.0;
  double noise = 0.0;  // Gaussian image noise, std in [0, 1] units

  void validate() const;
  KeyValues to_key_values() const;
  static SceneSpec from_key_values(KeyValues values);
};

struct SceneView {
  Pose pose;
  Image image;
  RegionMasks masks;
  DepthMap depth;        // nearest surface on S
  DepthMap face_depth;   // d^f on F
  Mask covisible;        // H ∩ S_h pixels that land on visible hair in the other view
  LandmarkSet landmarks;
};

struct HeadScene {
  SceneSpec spec;
  MorphableModel model;
  FaceCoefficients coefficients;
  SHLighting lighting;
  Camera camera;
  Image background;
  TriMesh3D hair;  // model frame, no colours
  std::array<SceneView, 2> views;
};

// Unshaded hair albedo at a model-frame point.
Eigen::Vector3d hair_texture(const Eigen::Vector3d& point, double frequency);

HeadScene synth_scene(const SceneSpec& spec);
HeadScene synth_scene(const SceneSpec& spec, const MorphableModel& model);

// Renders the scene head at |pose| (without noise).
SceneView render_scene_view(const HeadScene& scene, const Pose& pose);

// Marks pixels of |from.masks.H ∩ from.masks.S_h| whose ground-truth point is
// the visible hair surface in |to|.
Mask covisible_hair(const SceneView& from, const SceneView& to, const Camera& camera);

// Directory bundle: scene.txt, model.p3dm, background.png and per view k:
// image{k}.png, S{k}.png, Sf{k}.png, Sh{k}.png, F{k}.png, H{k}.png,
// covis{k}.png, depth{k}.dpth, face_depth{k}.dpth.
void save_scene(const HeadScene& scene, const std::filesystem::path& dir);
HeadScene load_scene(const std::filesystem::path& dir);

// Landmark sets as "vertex x y weight" rows.
std::string format_landmarks(const LandmarkSet& landmarks);
LandmarkSet parse_landmarks(const std::string& text);

std::string format_pose(const Pose& pose);
Pose parse_pose(const std::string& text, const std::string& key);

}  // namespace headforge

#endif  // HEADFORGE_SCENE_H_
