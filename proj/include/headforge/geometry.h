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

// Pose and camera mathematics, projection, region algebra, grid
// triangulation and rigid alignment.
//
// Camera convention (used everywhere): right-handed, the camera looks along
// +Z, image +X points right and image +Y points down. Continuous pixel
// coordinates place the centre of pixel (i, j) at (i + 0.5, j + 0.5).

#ifndef HEADFORGE_GEOMETRY_H_
#define HEADFORGE_GEOMETRY_H_

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "headforge/grid.h"
#include "headforge/model.h"

namespace headforge {

// Rigid transform x -> R(q) x + t with q = (w, x, y, z).
struct Pose {
  Eigen::Vector4d quaternion{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  static Pose from_rotation(const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& translation);

  Eigen::Matrix3d rotation() const;
  Pose normalized() const;
  Pose inverse() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const;
};

// a ∘ b, i.e. x -> a(b(x)).
Pose compose(const Pose& a, const Pose& b);

Eigen::Vector4d quaternion_multiply(const Eigen::Vector4d& a,
                                    const Eigen::Vector4d& b);
Eigen::Vector4d quaternion_from_axis_angle(const Eigen::Vector3d& axis,
                                           double radians);
// Z-Y-X intrinsic order: R = Rz(roll) * Ry(yaw) * Rx(pitch), degrees.
Eigen::Vector4d quaternion_from_euler_deg(double yaw, double pitch, double roll);
// Rotation angle between two orientations, radians.
double rotation_angle(const Eigen::Vector4d& a, const Eigen::Vector4d& b);

// Rotation matrix from the unit-quaternion formula evaluated as is (no
// renormalization), and its derivative with respect to each component.
Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q);
void quaternion_matrix_derivatives(const Eigen::Vector4d& q,
                                   Eigen::Matrix3d derivatives[4]);

Eigen::Matrix3Xd apply_pose(const Eigen::Matrix3Xd& points, const Pose& pose);

// Maps camera-1 coordinates into camera-2 coordinates for two head poses:
// (R2 R1^-1, -R2 R1^-1 t1 + t2).
Pose relative_pose(const Pose& pose1, const Pose& pose2);

struct Camera {
  double focal = 1160.0;
  Eigen::Vector2d principal_point{128.0, 128.0};
  int width = 256;
  int height = 256;

  // 1160 px at 256 px width, scaled linearly with width.
  static Camera default_for(int width, int height);
  void validate() const;
  // Same field of view at a different resolution.
  Camera scaled(double factor) const;
  // Direction (x, y, 1) through the centre of pixel (x, y).
  Eigen::Vector3d pixel_ray(int x, int y) const;
  bool operator==(const Camera& other) const = default;
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;
  bool valid = false;
};

// Points with Z <= 0 are flagged invalid and left unprojected.
std::vector<Projection> project(const Eigen::Matrix3Xd& points,
                                const Camera& camera);
Projection project_point(const Eigen::Vector3d& point, const Camera& camera);

struct PixelPoints {
  Eigen::Matrix3Xd points;
  std::vector<Eigen::Vector2i> pixels;
};

// One 3D point per masked pixel, row-major order. Throws kUndefinedDepth
// listing the offending pixels if a masked pixel has no depth.
PixelPoints unproject(const DepthMap& depth, const Mask& mask,
                      const Camera& camera);

// S: head, S_f: segmented face, S_h: segmented hair, F: rendered face
// coverage, H: hair/ear region derived from the others.
struct RegionMasks {
  Mask S, S_f, S_h, F, H;

  int width() const { return S.width(); }
  int height() const { return S.height(); }
  // Throws unless shapes agree and S_f, S_h, H are subsets of S.
  void validate() const;
};

// H = S - (S_f ∩ F). The result is also stored into |masks|.
Mask compute_hair_region(RegionMasks* masks);

struct TriMesh2D {
  std::vector<Eigen::Vector2d> vertices;  // continuous pixel coordinates
  std::vector<Eigen::Vector2i> pixels;    // source pixel of each vertex
  std::vector<Triangle> triangles;
};

struct TriMesh3D {
  Eigen::Matrix3Xd vertices;
  std::vector<Triangle> triangles;
  Eigen::Matrix3Xd colors;  // empty or one rgb column per vertex

  void validate() const;
};

// Grid triangulation: one vertex per mask pixel centre, and each fully
// covered 2x2 block contributes two triangles split along the
// top-left/bottom-right diagonal.
TriMesh2D triangulate_region(const Mask& mask);

struct HairMesh {
  TriMesh3D mesh;  // source camera frame
  std::vector<Eigen::Vector2i> vertex_pixels;
  int dropped_triangles = 0;
};

inline constexpr double kDiscontinuityFraction = 0.03;

// Lifts triangulate_region(region) with the depth map; vertices that belong
// to no 2x2 block are removed. A triangle is dropped when its vertex depth
// range exceeds |discontinuity_fraction| of the region's median depth.
HairMesh build_hair_mesh(const Image& image, const DepthMap& depth,
                         const Mask& region, const Camera& camera,
                         double discontinuity_fraction = kDiscontinuityFraction);

struct RigidAlignment {
  Pose pose;  // maps source onto target
  double mean_distance = 0.0;
  double rms = 0.0;
};

// Least-squares rotation + translation (no scale). Throws kDegenerate for
// fewer than three points or collinear sources.
RigidAlignment rigid_align(const Eigen::Matrix3Xd& source,
                           const Eigen::Matrix3Xd& target);

// OBJ with "v x y z r g b" lines when the mesh carries colors.
void save_obj(const TriMesh3D& mesh, const std::filesystem::path& path);
TriMesh3D load_obj(const std::filesystem::path& path);

}  // namespace headforge

#endif  // HEADFORGE_GEOMETRY_H_
