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

// Software rasterizer, spherical-harmonics shading, face rendering and
// mesh-based warping between views.

#ifndef HEADFORGE_RENDER_H_
#define HEADFORGE_RENDER_H_

#include <vector>

#include <Eigen/Core>

#include "headforge/geometry.h"
#include "headforge/grid.h"
#include "headforge/model.h"

namespace headforge {

using ShVector = Eigen::Matrix<double, 9, 1>;

// Lighting shared by the three colour channels.
struct SHLighting {
  ShVector gamma = ShVector::Zero();

  // Pure ambient term that reproduces the albedo.
  static SHLighting ambient(double level = 1.0);
};

// Real SH bands 0-2 in the order
//   1, y, z, x, xy, yz, 3z^2 - 1, xz, x^2 - y^2
// with the usual normalization constants. Throws kInvalidArgument unless
// |n| is unit length within 1e-6.
ShVector sh_basis(const Eigen::Vector3d& n);
// d sh_basis / d n (9 x 3), treating the components of n as independent.
Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Eigen::Vector3d& n);

// albedo * (gamma . sh_basis(n)), before and after clamping to [0, 1].
Eigen::Vector3d shade_linear(const Eigen::Vector3d& albedo,
                             const Eigen::Vector3d& normal,
                             const SHLighting& lighting);
Eigen::Vector3d shade(const Eigen::Vector3d& albedo,
                      const Eigen::Vector3d& normal,
                      const SHLighting& lighting);

struct VertexNormals {
  Eigen::Matrix3Xd normals;
  // Vertices with no incident area; their normal is zero.
  std::vector<int> zero_normal_vertices;
};

// Area-weighted sum of incident face normals cross(b - a, c - a),
// normalized.
VertexNormals compute_vertex_normals(const Eigen::Matrix3Xd& vertices,
                                     const std::vector<Triangle>& triangles);

struct RasterOutput {
  Grid<int> triangle;                  // -1 where uncovered
  Grid<Eigen::Vector3d> barycentric;   // perspective-correct, zero if uncovered
  DepthMap depth;                      // camera Z, NaN if uncovered
  Mask coverage;
  Image color;  // interpolated vertex attribute; empty without attributes

  int width() const { return coverage.width(); }
  int height() const { return coverage.height(); }
};

inline constexpr double kNearPlane = 1.0;  // mm

// Z-buffered rasterization of a camera-frame mesh at pixel centres. Coverage
// is decided on vertex positions snapped to 1/65536 px with a top-left fill
// rule, so edges shared by two triangles are drawn exactly once; centres on
// an edge that belongs to a single triangle are always covered. Triangles
// with a vertex at Z <= kNearPlane are skipped; there is no back-face
// culling. When |attributes| is non-null (3 x n) it is interpolated into
// |color|.
RasterOutput rasterize(const Eigen::Matrix3Xd& vertices,
                       const std::vector<Triangle>& triangles,
                       const Camera& camera,
                       const Eigen::Matrix3Xd* attributes = nullptr);
RasterOutput rasterize(const TriMesh3D& mesh, const Camera& camera);

struct FaceRender {
  Image image;       // shaded face, black outside F
  Mask coverage;     // F
  DepthMap depth;    // d^f, NaN outside F
  RasterOutput raster;
  Eigen::Matrix3Xd vertices;       // posed, camera frame
  Eigen::Matrix3Xd albedo;         // per vertex, unclamped
  Eigen::Matrix3Xd vertex_colors;  // shaded and clamped
  VertexNormals normals;
};

// Per-vertex (Gouraud) shading of the posed model instance.
Eigen::Matrix3Xd shade_vertices(const Eigen::Matrix3Xd& albedo,
                                const Eigen::Matrix3Xd& normals,
                                const SHLighting& lighting);

FaceRender render_face(const MorphableModel& model,
                       const FaceCoefficients& coefficients, const Pose& pose,
                       const SHLighting& lighting, const Camera& camera);

struct WarpResult {
  Image image;     // black where not covered
  Mask coverage;   // H'
  DepthMap depth;  // destination-camera depth, NaN where not covered
  int dropped_triangles = 0;
};

// Lifts |region| of the source view into a mesh, moves it from the source to
// the destination camera and renders it carrying the source colours.
WarpResult warp_image(const Image& image, const DepthMap& depth,
                      const Mask& region, const Pose& pose_src,
                      const Pose& pose_dst, const Camera& camera);

struct BilinearSample {
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
  // Columns: d/dx, d/dy of each channel.
  Eigen::Matrix<double, 3, 2> gradient = Eigen::Matrix<double, 3, 2>::Zero();
  bool valid = false;
};

// Samples at index coordinates, where pixel (i, j) sits at (i, j); convert
// from continuous pixel coordinates by subtracting 0.5. Valid inside
// [0, w-1] x [0, h-1]. Coordinates within 1e-9 of a grid line are snapped to
// it. The gradient is that of the bilinear patch containing the point; along
// an axis where the point lies on a grid line it is the mean of the two
// one-sided slopes (one-sided at the image border).
BilinearSample sample_bilinear(const Image& image, const Eigen::Vector2d& xy);

}  // namespace headforge

#endif  // HEADFORGE_RENDER_H_
