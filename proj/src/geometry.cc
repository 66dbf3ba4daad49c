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

#include "headforge/geometry.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "headforge/error.h"

namespace headforge {

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

void quaternion_matrix_derivatives(const Eigen::Vector4d& q,
                                   Eigen::Matrix3d d[4]) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
}

Eigen::Vector4d quaternion_multiply(const Eigen::Vector4d& a,
                                    const Eigen::Vector4d& b) {
  const Eigen::Vector3d av = a.tail<3>(), bv = b.tail<3>();
  Eigen::Vector4d out;
  out[0] = a[0] * b[0] - av.dot(bv);
  out.tail<3>() = a[0] * bv + b[0] * av + av.cross(bv);
  return out;
}

Eigen::Vector4d quaternion_from_axis_angle(const Eigen::Vector3d& axis,
                                           double radians) {
  const Eigen::Vector3d u = axis.normalized();
  Eigen::Vector4d q;
  q[0] = std::cos(0.5 * radians);
  q.tail<3>() = std::sin(0.5 * radians) * u;
  return q;
}

Eigen::Vector4d quaternion_from_euler_deg(double yaw, double pitch,
                                          double roll) {
  const double k = M_PI / 180.0;
  const Eigen::Vector4d qz = quaternion_from_axis_angle(Eigen::Vector3d::UnitZ(), roll * k);
  const Eigen::Vector4d qy = quaternion_from_axis_angle(Eigen::Vector3d::UnitY(), yaw * k);
  const Eigen::Vector4d qx = quaternion_from_axis_angle(Eigen::Vector3d::UnitX(), pitch * k);
  return quaternion_multiply(qz, quaternion_multiply(qy, qx));
}

double rotation_angle(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  const double c = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return 2.0 * std::acos(c);
}

Pose Pose::from_rotation(const Eigen::Matrix3d& rotation,
                         const Eigen::Vector3d& translation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  Pose p;
  p.quaternion = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
  if (p.quaternion[0] < 0) p.quaternion = -p.quaternion;
  p.translation = translation;
  return p;
}

Eigen::Matrix3d Pose::rotation() const { return quaternion_to_matrix(quaternion); }

Pose Pose::normalized() const {
  Pose p = *this;
  const double n = quaternion.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kNonFinite, "pose quaternion has zero or non-finite norm");
  }
  p.quaternion /= n;
  return p;
}

Pose Pose::inverse() const {
  Pose p;
  p.quaternion << quaternion[0], -quaternion[1], -quaternion[2], -quaternion[3];
  p.translation = -(p.rotation() * translation);
  return p;
}

Eigen::Vector3d Pose::apply(const Eigen::Vector3d& x) const {
  return rotation() * x + translation;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose p;
  p.quaternion = quaternion_multiply(a.quaternion, b.quaternion);
  p.translation = a.rotation() * b.translation + a.translation;
  return p;
}

Eigen::Matrix3Xd apply_pose(const Eigen::Matrix3Xd& points, const Pose& pose) {
  Eigen::Matrix3Xd out = pose.rotation() * points;
  out.colwise() += pose.translation;
  return out;
}

Pose relative_pose(const Pose& pose1, const Pose& pose2) {
  return compose(pose2, pose1.inverse());
}

Camera Camera::default_for(int width, int height) {
  Camera c;
  c.width = width;
  c.height = height;
  c.focal = 1160.0 * width / 256.0;
  c.principal_point = Eigen::Vector2d(0.5 * width, 0.5 * height);
  return c;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "camera image size must be positive");
  }
  if (!(focal > 0.0) || !std::isfinite(focal)) {
    throw Error(ErrorCode::kInvalidArgument, "camera focal length must be positive");
  }
  if (!(principal_point.x() >= 0.0 && principal_point.x() <= width &&
        principal_point.y() >= 0.0 && principal_point.y() <= height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

Camera Camera::scaled(double factor) const {
  Camera c = *this;
  c.focal *= factor;
  c.principal_point *= factor;
  c.width = static_cast<int>(std::lround(width * factor));
  c.height = static_cast<int>(std::lround(height * factor));
  return c;
}

Eigen::Vector3d Camera::pixel_ray(int x, int y) const {
  return {(x + 0.5 - principal_point.x()) / focal,
          (y + 0.5 - principal_point.y()) / focal, 1.0};
}

Projection project_point(const Eigen::Vector3d& p, const Camera& camera) {
  Projection out;
  if (!(p.z() > 0.0) || !p.allFinite()) return out;
  out.pixel = Eigen::Vector2d(camera.focal * p.x() / p.z() + camera.principal_point.x(),
                              camera.focal * p.y() / p.z() + camera.principal_point.y());
  out.depth = p.z();
  out.valid = true;
  return out;
}

std::vector<Projection> project(const Eigen::Matrix3Xd& points,
                                const Camera& camera) {
  std::vector<Projection> out(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out[i] = project_point(points.col(i), camera);
  }
  return out;
}

PixelPoints unproject(const DepthMap& depth, const Mask& mask,
                      const Camera& camera) {
  require_same_shape(depth, mask, "unproject");
  PixelPoints out;
  std::vector<Eigen::Vector2i> bad;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double d = depth.at(x, y);
      if (!is_defined(d) || d <= 0.0) {
        bad.emplace_back(x, y);
      } else {
        out.pixels.emplace_back(x, y);
      }
    }
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << bad.size() << " masked pixel(s) without depth:";
    for (size_t i = 0; i < std::min<size_t>(bad.size(), 8); ++i) {
      msg << " (" << bad[i].x() << "," << bad[i].y() << ")";
    }
    if (bad.size() > 8) msg << " ...";
    throw Error(ErrorCode::kUndefinedDepth, msg.str());
  }
  out.points.resize(3, static_cast<Eigen::Index>(out.pixels.size()));
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    const auto& px = out.pixels[i];
    out.points.col(static_cast<Eigen::Index>(i)) =
        camera.pixel_ray(px.x(), px.y()) * depth.at(px.x(), px.y());
  }
  return out;
}

void RegionMasks::validate() const {
  require_same_shape(S, S_f, "region masks");
  require_same_shape(S, S_h, "region masks");
  require_same_shape(S, F, "region masks");
  if (!H.empty()) require_same_shape(S, H, "region masks");
  if (!mask_subset(S_f, S)) {
    throw Error(ErrorCode::kInvalidArgument, "segmented face mask is not inside S");
  }
  if (!mask_subset(S_h, S)) {
    throw Error(ErrorCode::kInvalidArgument, "segmented hair mask is not inside S");
  }
  if (!H.empty() && !mask_subset(H, S)) {
    throw Error(ErrorCode::kInvalidArgument, "hair region is not inside S");
  }
}

Mask compute_hair_region(RegionMasks* masks) {
  require_same_shape(masks->S, masks->S_f, "compute_hair_region");
  require_same_shape(masks->S, masks->F, "compute_hair_region");
  masks->H = mask_minus(masks->S, mask_and(masks->S_f, masks->F));
  return masks->H;
}

void TriMesh3D::validate() const {
  const auto n = static_cast<std::uint32_t>(vertices.cols());
  for (const auto& t : triangles) {
    for (auto v : t) {
      if (v >= n) throw Error(ErrorCode::kInvalidArgument, "mesh index out of range");
    }
  }
  if (!vertices.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "mesh has non-finite vertices");
  }
  if (colors.cols() != 0 && colors.cols() != vertices.cols()) {
    throw Error(ErrorCode::kDimension, "mesh colors must match vertex count");
  }
}

TriMesh2D triangulate_region(const Mask& mask) {
  TriMesh2D mesh;
  Grid<std::int32_t> ids(mask.width(), mask.height(), -1);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      ids.at(x, y) = static_cast<std::int32_t>(mesh.vertices.size());
      mesh.vertices.emplace_back(x + 0.5, y + 0.5);
      mesh.pixels.emplace_back(x, y);
    }
  }
  if (mesh.vertices.empty()) {
    throw Error(ErrorCode::kEmptyRegion, "cannot triangulate an empty mask");
  }
  for (int y = 0; y + 1 < mask.height(); ++y) {
    for (int x = 0; x + 1 < mask.width(); ++x) {
      const auto tl = ids.at(x, y), tr = ids.at(x + 1, y);
      const auto bl = ids.at(x, y + 1), br = ids.at(x + 1, y + 1);
      if (tl < 0 || tr < 0 || bl < 0 || br < 0) continue;
      auto u = [](std::int32_t v) { return static_cast<std::uint32_t>(v); };
      mesh.triangles.push_back({u(tl), u(tr), u(br)});
      mesh.triangles.push_back({u(tl), u(br), u(bl)});
    }
  }
  return mesh;
}

HairMesh build_hair_mesh(const Image& image, const DepthMap& depth,
                         const Mask& region, const Camera& camera,
                         double discontinuity_fraction) {
  require_same_shape(image, region, "build_hair_mesh");
  require_same_shape(depth, region, "build_hair_mesh");
  const TriMesh2D grid = triangulate_region(region);
  const PixelPoints lifted = unproject(depth, region, camera);

  std::vector<double> depths;
  depths.reserve(grid.pixels.size());
  for (const auto& px : grid.pixels) depths.push_back(depth.at(px.x(), px.y()));
  std::vector<double> sorted = depths;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double threshold = discontinuity_fraction * median;

  std::vector<char> used(grid.vertices.size(), 0);
  for (const auto& t : grid.triangles) {
    for (auto v : t) used[v] = 1;
  }
  std::vector<std::int64_t> remap(grid.vertices.size(), -1);
  HairMesh out;
  std::int64_t next = 0;
  for (size_t i = 0; i < used.size(); ++i) {
    if (used[i]) remap[i] = next++;
  }
  out.mesh.vertices.resize(3, next);
  out.mesh.colors.resize(3, next);
  out.vertex_pixels.reserve(static_cast<size_t>(next));
  for (size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) continue;
    const auto& px = grid.pixels[i];
    out.mesh.vertices.col(remap[i]) = lifted.points.col(static_cast<Eigen::Index>(i));
    out.mesh.colors.col(remap[i]) = image.at(px.x(), px.y()).cast<double>();
    out.vertex_pixels.push_back(px);
  }
  for (const auto& t : grid.triangles) {
    const double a = depths[t[0]], b = depths[t[1]], c = depths[t[2]];
    const double range = std::max({a, b, c}) - std::min({a, b, c});
    if (range > threshold) {
      ++out.dropped_triangles;
      continue;
    }
    out.mesh.triangles.push_back({static_cast<std::uint32_t>(remap[t[0]]),
                                  static_cast<std::uint32_t>(remap[t[1]]),
                                  static_cast<std::uint32_t>(remap[t[2]])});
  }
  return out;
}

RigidAlignment rigid_align(const Eigen::Matrix3Xd& source,
                           const Eigen::Matrix3Xd& target) {
  if (source.cols() != target.cols()) {
    throw Error(ErrorCode::kDimension, "rigid_align needs equal point counts");
  }
  if (source.cols() < 3) {
    throw Error(ErrorCode::kDegenerate, "rigid_align needs at least 3 points");
  }
  const Eigen::Vector3d sc = source.rowwise().mean();
  const Eigen::Vector3d tc = target.rowwise().mean();
  const Eigen::Matrix3Xd s = source.colwise() - sc;
  const Eigen::Matrix3Xd g = target.colwise() - tc;

  Eigen::JacobiSVD<Eigen::Matrix3d> spread(s * s.transpose());
  const auto sv = spread.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) {
    throw Error(ErrorCode::kDegenerate, "rigid_align source points are collinear");
  }

  const Eigen::Matrix3d cov = s * g.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = v * fix * u.transpose();

  RigidAlignment out;
  out.pose = Pose::from_rotation(r, tc - r * sc);
  const Eigen::Matrix3Xd aligned = apply_pose(source, out.pose);
  std::vector<double> dist(static_cast<size_t>(source.cols()));
  std::vector<double> sq(dist.size());
  for (Eigen::Index i = 0; i < source.cols(); ++i) {
    const double d = (aligned.col(i) - target.col(i)).norm();
    dist[i] = d;
    sq[i] = d * d;
  }
  const double n = static_cast<double>(dist.size());
  out.mean_distance = pairwise_sum(dist) / n;
  out.rms = std::sqrt(pairwise_sum(sq) / n);
  return out;
}

void save_obj(const TriMesh3D& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  char line[512];
  const bool colored = mesh.colors.cols() == mesh.vertices.cols() && mesh.vertices.cols() > 0;
  for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i) {
    const auto v = mesh.vertices.col(i);
    if (colored) {
      const auto c = mesh.colors.col(i);
      std::snprintf(line, sizeof(line), "v %.17g %.17g %.17g %.17g %.17g %.17g\n",
                    v.x(), v.y(), v.z(), c.x(), c.y(), c.z());
    } else {
      std::snprintf(line, sizeof(line), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    }
    out << line;
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

TriMesh3D load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open: " + path.string());
  std::vector<Eigen::Vector3d> vertices, colors;
  TriMesh3D mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Eigen::Vector3d v, c;
      ls >> v.x() >> v.y() >> v.z();
      if (!ls) throw Error(ErrorCode::kIo, "malformed vertex in " + path.string());
      vertices.push_back(v);
      if (ls >> c.x() >> c.y() >> c.z()) colors.push_back(c);
    } else if (tag == "f") {
      Triangle t;
      for (auto& idx : t) {
        std::string token;
        ls >> token;
        long v = 0;
        try {
          v = std::stol(token.substr(0, token.find('/')));
        } catch (const std::exception&) {
          v = 0;
        }
        if (v < 1) throw Error(ErrorCode::kIo, "bad face index in " + path.string());
        idx = static_cast<std::uint32_t>(v - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  mesh.vertices.resize(3, static_cast<Eigen::Index>(vertices.size()));
  for (size_t i = 0; i < vertices.size(); ++i) mesh.vertices.col(i) = vertices[i];
  if (!colors.empty()) {
    if (colors.size() != vertices.size()) {
      throw Error(ErrorCode::kIo, "partial vertex colors in " + path.string());
    }
    mesh.colors.resize(3, static_cast<Eigen::Index>(colors.size()));
    for (size_t i = 0; i < colors.size(); ++i) mesh.colors.col(i) = colors[i];
  }
  mesh.validate();
  return mesh;
}

}  // namespace headforge
