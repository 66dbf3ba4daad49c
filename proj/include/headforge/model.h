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

// Affine morphable face model: shape = mean + B_id * alpha + B_exp * beta,
// texture = mean + B_tex * delta. Bases are stored column-major in 32-bit
// floats with 3 rows per vertex (x, y, z or r, g, b).

#ifndef HEADFORGE_MODEL_H_
#define HEADFORGE_MODEL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace headforge {

using Triangle = std::array<std::uint32_t, 3>;

struct MorphableModel {
  int n_vertices = 0;
  std::vector<Triangle> triangles;
  Eigen::VectorXf mean_shape;    // 3n, millimetres
  Eigen::VectorXf mean_texture;  // 3n, rgb in [0, 1]
  Eigen::MatrixXf basis_id;      // 3n x k_id
  Eigen::MatrixXf basis_exp;     // 3n x k_exp
  Eigen::MatrixXf basis_tex;     // 3n x k_tex
  // Per-column standard deviations, concatenated id | exp | tex.
  Eigen::VectorXf coeff_scales;
  std::vector<std::uint32_t> landmark_indices;

  int k_id() const { return static_cast<int>(basis_id.cols()); }
  int k_exp() const { return static_cast<int>(basis_exp.cols()); }
  int k_tex() const { return static_cast<int>(basis_tex.cols()); }

  Eigen::Map<const Eigen::VectorXf> scales_id() const;
  Eigen::Map<const Eigen::VectorXf> scales_exp() const;
  Eigen::Map<const Eigen::VectorXf> scales_tex() const;

  // Throws Error(kDimension / kInvalidArgument) on the first violated
  // invariant.
  void validate() const;

  bool operator==(const MorphableModel& other) const;
};

struct FaceCoefficients {
  Eigen::VectorXd alpha;  // identity
  Eigen::VectorXd beta;   // expression
  Eigen::VectorXd delta;  // texture

  static FaceCoefficients zeros(const MorphableModel& model);
};

// 3 x n vertex positions (mm).
Eigen::Matrix3Xd evaluate_shape(const MorphableModel& model,
                                const Eigen::VectorXd& alpha,
                                const Eigen::VectorXd& beta);

// 3 x n per-vertex rgb, unclamped.
Eigen::Matrix3Xd evaluate_texture(const MorphableModel& model,
                                  const Eigen::VectorXd& delta);

// Deterministic stand-in for a licensed face model: an icosphere-based
// ellipsoidal head with a nose bump, smooth orthonormal deformation bases
// and a procedural skin texture. Vertex count is 10 * 4^n_subdiv + 2.
MorphableModel synthesize_model(std::uint64_t seed, int n_subdiv, int k_id,
                                int k_exp, int k_tex);

// "P3DM1" container; see model.cc for the byte layout.
void save_model(const MorphableModel& model,
                const std::filesystem::path& path);
MorphableModel load_model(const std::filesystem::path& path);

// Subdivided unit icosphere, shared with the scene generator.
void make_icosphere(int n_subdiv, std::vector<Eigen::Vector3d>* vertices,
                    std::vector<Triangle>* triangles);

}  // namespace headforge

#endif  // HEADFORGE_MODEL_H_
