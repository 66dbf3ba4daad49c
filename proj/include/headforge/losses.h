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

// Objective terms of the face and depth stages with analytic gradients.
// Every region integral is a mean over the pixels that actually contribute.

#ifndef HEADFORGE_LOSSES_H_
#define HEADFORGE_LOSSES_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "headforge/geometry.h"
#include "headforge/grid.h"
#include "headforge/io.h"
#include "headforge/model.h"
#include "headforge/render.h"

namespace headforge {

struct LossWeights {
  double w_photo = 1.9;
  double w_lmk = 1.6e-3;
  double w_reg_id = 3e-4;
  double w_reg_exp = 8e-4;
  double w_reg_tex = 1.7e-5;
  double w_color = 1.0;
  double w_grad = 1.0;
  double w_smooth = 0.05;
  double w_face = 1.0;
  double w_layer = 1.0;

  void validate() const;
  // Consumes the recognised keys from |values|.
  void apply(KeyValues* values);
  KeyValues to_key_values() const;
};

struct Landmark {
  std::uint32_t vertex = 0;
  Eigen::Vector2d observed = Eigen::Vector2d::Zero();  // continuous pixels
  double weight = 1.0;
};
using LandmarkSet = std::vector<Landmark>;

// ---- Face-stage terms.

struct ImageLoss {
  double value = 0.0;
  Grid<Eigen::Vector3d> gradient;  // d value / d rendered
  size_t count = 0;
};

// Mean over |region| of ||observed - rendered||_2. Throws kEmptyRegion.
ImageLoss photometric_loss(const Image& observed, const Image& rendered,
                           const Mask& region);

struct LandmarkLoss {
  double value = 0.0;
  std::vector<Eigen::Vector2d> gradient;  // d value / d projected
};

// sum_i w_i ||projected_i - observed_i||^2 / N. Throws kEmptyRegion.
LandmarkLoss landmark_loss(const std::vector<Eigen::Vector2d>& projected,
                           const LandmarkSet& landmarks);

struct RegularizationLoss {
  double value = 0.0;
  double id = 0.0, exp = 0.0, tex = 0.0;  // unweighted sums of (c / s)^2
  FaceCoefficients gradient;
};

// w_reg_id ||alpha / s_id||^2 + w_reg_exp ||beta / s_exp||^2 +
// w_reg_tex ||delta / s_tex||^2 with |coeff_scales| concatenated id|exp|tex.
RegularizationLoss coef_regularization(const FaceCoefficients& coefficients,
                                       const Eigen::VectorXf& coeff_scales,
                                       const LossWeights& weights);

struct FaceParameters {
  FaceCoefficients coefficients;
  Pose pose;
  SHLighting lighting;

  // Flat layout: alpha, beta, delta, quaternion (4), translation (3),
  // gamma (9).
  Eigen::VectorXd to_vector() const;
  static FaceParameters from_vector(const Eigen::VectorXd& v,
                                    const MorphableModel& model);
};

struct FaceObservation {
  Image image;
  Mask segmented_face;  // S_f
  LandmarkSet landmarks;
  Camera camera;
};

struct FaceEnergyTerms {
  double photo = 0.0, lmk = 0.0, reg_id = 0.0, reg_exp = 0.0, reg_tex = 0.0;
};

struct FaceEnergy {
  double value = 0.0;
  FaceEnergyTerms terms;
  Eigen::VectorXd gradient;  // same layout as FaceParameters::to_vector
  size_t photo_pixels = 0;
};

// w_photo l_photo + w_lmk l_lmk + regularization. The photometric term keeps
// the pixel-to-triangle assignment of |frozen| fixed: for each pixel of
// F ∩ S_f (F = frozen coverage) the perspective-correct barycentrics of the
// pixel centre are recomputed from the current projection of its triangle,
// and the Gouraud colour sum b_k c_k is compared to the observed pixel. The
// gradient flows through the vertex colours and, via the barycentrics, the
// projected vertex positions. At the parameters |frozen| was rendered with
// this equals photometric_loss on F ∩ S_f.
FaceEnergy face_energy(const MorphableModel& model,
                       const FaceParameters& params,
                       const FaceObservation& observation,
                       const LossWeights& weights, const RasterOutput& frozen);
// Rasterizes at |params| first.
FaceEnergy face_energy(const MorphableModel& model,
                       const FaceParameters& params,
                       const FaceObservation& observation,
                       const LossWeights& weights);

// ---- Depth-stage terms.

struct DepthLoss {
  double value = 0.0;
  DepthMap gradient;  // zero outside the contributing pixels
  size_t count = 0;
  bool empty_region = false;
};

struct PairLoss {
  double value = 0.0;
  DepthMap gradient1, gradient2;
  size_t count1 = 0, count2 = 0;  // valid landings per direction
};

// Sampling form: every pixel u of H1 is lifted with d1, moved into camera 2,
// projected and compared against a bilinear sample of I2 (l1 over rgb), and
// symmetrically for H2. Landings outside the image or behind the camera are
// dropped. Each direction is averaged over its valid landings and the result
// is the mean of the directions that have any. Throws kEmptyRegion if
// neither does.
PairLoss color_constancy_loss(const Image& image1, const Image& image2,
                              const DepthMap& depth1, const DepthMap& depth2,
                              const Pose& pose1, const Pose& pose2,
                              const Camera& camera, const Mask& region1,
                              const Mask& region2);

// As color_constancy_loss on forward-difference image gradients (x and y,
// three channels each). Pixels in the last row or column have no gradient
// and are skipped as sources; landings must fall inside the gradient grid.
PairLoss gradient_loss(const Image& image1, const Image& image2,
                       const DepthMap& depth1, const DepthMap& depth2,
                       const Pose& pose1, const Pose& pose2,
                       const Camera& camera, const Mask& region1,
                       const Mask& region2);

// Forward-difference gradient images, (w-1) x (h-1).
void forward_differences(const Image& image, Image* dx, Image* dy);

// Mean |5-point Laplacian| over pixels of |region| whose four neighbours are
// all in |region|. Throws kEmptyRegion if there are none.
DepthLoss smoothness_loss(const DepthMap& depth, const Mask& region);

// Mean |d - d^f| over F - (S_h ∩ F). Throws kEmptyRegion.
DepthLoss face_depth_loss(const DepthMap& depth, const DepthMap& face_depth,
                          const RegionMasks& masks);

// Mean max(0, d - d^f) over S_h ∩ F; an empty overlap gives 0 with
// empty_region set.
DepthLoss layer_order_loss(const DepthMap& depth, const DepthMap& face_depth,
                           const RegionMasks& masks);

// Pixels of S_h ∩ F with d > d^f.
size_t count_layer_violations(const DepthMap& depth,
                              const DepthMap& face_depth,
                              const RegionMasks& masks);

struct DepthView {
  Image image;
  RegionMasks masks;
  DepthMap face_depth;  // d^f
  Pose pose;
};

struct DepthEnergyTerms {
  double color = 0.0, grad = 0.0, smooth = 0.0, face = 0.0, layer = 0.0;
};

struct DepthEnergy {
  double value = 0.0;
  DepthEnergyTerms terms;
  DepthMap gradient1, gradient2;
};

enum class DepthTerms { kAll, kSmoothOnly };

// w_color l_color + w_grad l_grad + w_smooth l_smooth + w_face l_face +
// w_layer l_layer. The per-view terms are averaged over the two views.
// kSmoothOnly leaves out l_face and l_layer (value and gradient), which the
// optimizer treats through their proximal maps; |terms| is always complete.
DepthEnergy depth_energy(const DepthMap& depth1, const DepthMap& depth2,
                         const DepthView& view1, const DepthView& view2,
                         const Camera& camera, const LossWeights& weights,
                         DepthTerms which = DepthTerms::kAll);

// Single view: w_smooth l_smooth + w_face l_face + w_layer l_layer.
DepthEnergy depth_energy_single(const DepthMap& depth, const DepthView& view,
                                const LossWeights& weights,
                                DepthTerms which = DepthTerms::kAll);

}  // namespace headforge

#endif  // HEADFORGE_LOSSES_H_
