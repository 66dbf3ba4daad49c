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

// Pose manipulation of an assembled head: rigid motion of the face and hair
// meshes, re-rendering over the background plate, and the vacated-pixel
// hole mask with a diffusion fill.

#ifndef HEADFORGE_MANIPULATE_H_
#define HEADFORGE_MANIPULATE_H_

#include <filesystem>

#include <Eigen/Core>

#include "headforge/geometry.h"
#include "headforge/grid.h"
#include "headforge/losses.h"
#include "headforge/model.h"
#include "headforge/render.h"

namespace headforge {

struct HeadAssets {
  TriMesh3D face;  // source camera frame, colors = albedo
  SHLighting lighting;
  TriMesh3D hair;  // source camera frame, colors = rgb
  Image plate;
  DepthMap depth;  // source depth, NaN outside S
  RegionMasks masks;
  Pose pose;  // source head pose
  Camera camera;
  Eigen::Vector3d head_centre = Eigen::Vector3d::Zero();  // camera frame

  void validate() const;
};

// Face mesh from the fitted parameters, hair/ear mesh lifted from H with
// |depth|. Without a plate the background is estimated by filling S.
HeadAssets assemble_assets(const MorphableModel& model,
                           const FaceParameters& face, const Image& image,
                           const DepthMap& depth, const RegionMasks& masks,
                           const Camera& camera, const Image* plate = nullptr);

// Mean of the face vertices.
Eigen::Vector3d head_centre(const TriMesh3D& face);

// Rotation about the head centre followed by a translation, both in camera
// axes: X -> R (X - c) + c + t.
Pose delta_from_euler(double yaw_deg, double pitch_deg, double roll_deg,
                      double tx_mm, double ty_mm, double tz_mm);
// The delta that brings the source pose to |target|.
Pose delta_for_target(const HeadAssets& assets, const Pose& target);

struct Manipulation {
  Image image;      // plate with the moved head; holes are black
  Mask hole;        // M = S - coverage
  Mask coverage;    // new head coverage
  DepthMap depth;   // NaN outside coverage
  Mask hair_pixels; // coverage won by the hair mesh
  Mask face_pixels; // coverage won by the face mesh
  Pose pose;        // new head pose
};

// Both meshes move rigidly; the face is re-shaded with the unchanged
// lighting and the hair keeps its vertex colours. Hair vertices are also
// splatted into their pixel when no triangle covers it, which closes fill-
// rule gaps along the mesh border. Throws kBehindCamera if nothing of the
// head remains in front of the camera.
Manipulation manipulate_pose(const HeadAssets& assets, const Pose& delta);

// Assets for the manipulated view: the moved face mesh and a hair mesh
// rebuilt from the rendered hair pixels and depth.
HeadAssets reassemble(const HeadAssets& assets, const Pose& delta,
                      const Manipulation& result);

// Harmonic fill of |hole| from the surrounding colours, per channel. Pixels
// outside |hole| are copied unchanged. Throws kEmptyRegion if |hole| covers
// the whole image.
Image fill_holes(const Image& image, const Mask& hole);

// Directory bundle: face.obj, hair.obj, plate.png, depth.dpth, S/Sf/Sh/F/H.png and
// head.txt (pose, lighting, camera, head centre).
void save_assets(const HeadAssets& assets, const std::filesystem::path& dir);
HeadAssets load_assets(const std::filesystem::path& dir);

}  // namespace headforge

#endif  // HEADFORGE_MANIPULATE_H_
