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

// Per-instance reconstruction: the face stage fits morphable-model
// coefficients, pose and lighting to one image; the depth stage recovers
// per-pixel head depth conditioned on the rendered face depth d^f.

#ifndef HEADFORGE_FIT_H_
#define HEADFORGE_FIT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "headforge/geometry.h"
#include "headforge/io.h"
#include "headforge/losses.h"
#include "headforge/model.h"
#include "headforge/render.h"

namespace headforge {

struct FitConfig {
  LossWeights weights;
  int face_iterations = 200;
  int depth_iterations = 400;
  // Adam base steps. Coefficients are optimized in units of coeff_scales and
  // translation in metres.
  double lr_coefficients = 1e-2;
  double lr_quaternion = 2e-3;
  double lr_translation = 2e-3;
  double lr_lighting = 1e-2;
  double lr_depth = 0.5;  // mm
  // Cosine decay from the base step to this fraction of it.
  double final_lr_fraction = 0.02;
  // Stop once the best energy improved by less than tolerance * |best| over
  // the last |patience| iterations.
  double tolerance = 1e-7;
  int patience = 60;
  bool coarse_to_fine = true;
  // false: constant initial depth at the head-centre distance and
  // w_face = w_layer = 0.
  bool condition_on_face_depth = true;
  std::uint64_t seed = 0;

  void validate() const;
  // Unknown keys throw kConfig.
  static FitConfig from_key_values(KeyValues values);
  KeyValues to_key_values() const;
};

FitConfig load_fit_config(const std::filesystem::path& path);

class Adam {
 public:
  explicit Adam(Eigen::VectorXd base_steps, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-12);
  // x -= scale * base * m_hat / (sqrt(v_hat) + eps); the effective
  // per-coordinate steps are kept for proximal updates.
  void step(Eigen::VectorXd* x, const Eigen::VectorXd& gradient, double scale);
  const Eigen::VectorXd& last_steps() const { return last_steps_; }

 private:
  Eigen::VectorXd base_, m_, v_, last_steps_;
  double beta1_, beta2_, epsilon_;
  int t_ = 0;
};

// Schedule factor for iteration |it| of |total|.
double cosine_schedule(int it, int total, double final_fraction);

struct FaceTraceRow {
  int iteration = 0;
  double energy = 0.0;
  FaceEnergyTerms terms;
};

struct FaceFitResult {
  FaceParameters params;
  double energy = 0.0;
  FaceEnergyTerms terms;
  std::vector<FaceTraceRow> trace;
  int best_iteration = 0;
  bool aborted = false;
  std::string diagnostic;
};

// Adam on face_energy. Each iteration re-rasterizes at the current
// parameters and differentiates with that assignment frozen. Returns the
// lowest-energy iterate.
FaceFitResult fit_face(const MorphableModel& model,
                       const FaceObservation& observation,
                       const FitConfig& config, const FaceParameters& init);

// key=value file with alpha, beta, delta, pose (w x y z tx ty tz), gamma.
void save_face_parameters(const FaceParameters& params, const std::filesystem::path& path);
FaceParameters load_face_parameters(const std::filesystem::path& path,
                                    const MorphableModel& model);

// The perturbation used to start face fits away from the truth: Gaussian
// coefficient noise of |coefficient_noise| standard deviations, a rotation
// of |rotation_deg| about a random axis and a translation of
// |translation_mm| in a random direction. Lighting restarts at ambient 0.8.
FaceParameters perturb_face_parameters(const FaceParameters& truth, const MorphableModel& model,
                                       std::uint64_t seed, double coefficient_noise = 0.2,
                                       double rotation_deg = 5.0, double translation_mm = 20.0);

struct InitDepthResult {
  DepthMap depth;  // defined on S
  Mask unanchored;
  int unanchored_components = 0;
};

// Harmonic extension of d^f over S - F (Dirichlet at pixels of F, zero flux
// across the border of S), then d^f copied onto S ∩ F. Components that touch
// no face pixel get median(d^f) and are reported.
InitDepthResult init_depth(const DepthMap& face_depth, const RegionMasks& masks);

struct DepthTraceRow {
  int iteration = 0;
  int level = 0;  // 1 for the half-resolution warm start
  double energy = 0.0;
  DepthEnergyTerms terms;
};

struct DepthFitResult {
  DepthMap depth1, depth2;  // depth2 empty for single-view fits
  double energy = 0.0;
  DepthEnergyTerms terms;
  double initial_energy = 0.0;
  std::vector<DepthTraceRow> trace;
  bool degenerate_pair = false;  // relative rotation under 1 degree
  int unanchored_components = 0;
  bool aborted = false;
  std::string diagnostic;
};

// Joint minimization of depth_energy over d1 on S1 and d2 on S2. l_face and
// l_layer enter through their proximal maps, scaled by Adam's per-pixel
// steps. |init1|/|init2| override the initialization.
DepthFitResult fit_depth_pair(const DepthView& view1, const DepthView& view2,
                              const Camera& camera, const FitConfig& config,
                              const DepthMap* init1 = nullptr,
                              const DepthMap* init2 = nullptr);

// CSV traces: iteration, each term, energy.
void write_face_trace(const std::vector<FaceTraceRow>& trace, const std::filesystem::path& path);
void write_depth_trace(const std::vector<DepthTraceRow>& trace, const std::filesystem::path& path);

// Prior-only single-view stand-in: w_smooth l_smooth + w_face l_face +
// w_layer l_layer from init_depth.
DepthFitResult fit_depth_single(const DepthView& view, const FitConfig& config,
                                const DepthMap* init = nullptr);

// Central differences, one coordinate at a time.
Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step);

struct GradientCheck {
  size_t tested = 0;
  size_t excluded = 0;  // non-differentiable at x (one-sided slopes disagree)
  size_t passed = 0;
  double worst_relative_error = 0.0;
  double pass_fraction() const {
    return tested == excluded ? 0.0
                              : static_cast<double>(passed) / static_cast<double>(tested - excluded);
  }
  double excluded_fraction() const {
    return tested == 0 ? 0.0 : static_cast<double>(excluded) / static_cast<double>(tested);
  }
};

// Compares |analytic| against central differences on |coordinates| (all if
// empty). A coordinate is excluded when its forward and backward slopes
// differ by more than |kink_tolerance| relative to their size and the gap
// does not halve with the step (so it is a jump, not curvature). This flags
// texel-line crossings, occlusion edges and l1 kinks.
GradientCheck check_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double step,
    const std::vector<Eigen::Index>& coordinates = {},
    double relative_tolerance = 1e-3, double kink_tolerance = 1e-2);

struct ReconstructionError {
  double face_mm = 0.0;
  double nonface_mm = 0.0;
  size_t face_count = 0;
  size_t nonface_count = 0;
  Pose alignment;  // maps prediction onto ground truth
};

// Pixel correspondences: both maps are unprojected over face ∪ nonface,
// rigidly aligned on the union, and mean 3D distances are reported per side.
ReconstructionError evaluate_reconstruction(const DepthMap& predicted,
                                            const DepthMap& ground_truth,
                                            const Mask& face,
                                            const Mask& nonface,
                                            const Camera& camera);

// Point sets without correspondences: nearest-point matching alternated with
// rigid alignment (ICP, brute-force search). |is_face| labels ground-truth
// points.
ReconstructionError evaluate_reconstruction(const Eigen::Matrix3Xd& predicted,
                                            const Eigen::Matrix3Xd& ground_truth,
                                            const std::vector<bool>& is_face,
                                            int iterations = 20);

}  // namespace headforge

#endif  // HEADFORGE_FIT_H_
