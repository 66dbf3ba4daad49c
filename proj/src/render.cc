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

#include "headforge/render.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "headforge/error.h"

namespace headforge {

namespace {

constexpr double kSh0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))
constexpr double kSh1 = 0.4886025119029199;   // sqrt(3 / (4 pi))
constexpr double kSh2 = 1.0925484305920792;   // sqrt(15 / (4 pi))
constexpr double kSh20 = 0.31539156525252005;  // sqrt(5 / (16 pi))
constexpr double kSh22 = 0.5462742152960396;  // sqrt(15 / (16 pi))

constexpr int kSubpixelBits = 16;
constexpr double kSubpixel = 1 << kSubpixelBits;
// Keeps edge-function products inside int64.
constexpr double kMaxPixelCoordinate = 8192.0;

struct FixedPoint {
  std::int64_t x, y;
};

// (b - a) x (p - a); positive on the interior side of a counter-clockwise
// (in image coordinates, y down) edge sequence.
inline std::int64_t edge(const FixedPoint& a, const FixedPoint& b,
                         const FixedPoint& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

inline double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

inline bool top_left(const FixedPoint& a, const FixedPoint& b) {
  const std::int64_t dx = b.x - a.x, dy = b.y - a.y;
  return (dy == 0 && dx > 0) || dy < 0;
}

inline bool inside(std::int64_t e, bool is_top_left) {
  return e > 0 || (e == 0 && is_top_left);
}

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

// Sorted keys of the edges used by exactly one triangle.
std::vector<std::uint64_t> open_edges(const std::vector<Triangle>& triangles) {
  std::vector<std::uint64_t> all;
  all.reserve(3 * triangles.size());
  for (const Triangle& t : triangles) {
    all.push_back(edge_key(t[0], t[1]));
    all.push_back(edge_key(t[1], t[2]));
    all.push_back(edge_key(t[2], t[0]));
  }
  std::sort(all.begin(), all.end());
  std::vector<std::uint64_t> open;
  for (size_t i = 0; i < all.size();) {
    size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    if (j - i == 1) open.push_back(all[i]);
    i = j;
  }
  return open;
}

}  // namespace

SHLighting SHLighting::ambient(double level) {
  SHLighting lighting;
  lighting.gamma[0] = level / kSh0;
  return lighting;
}

ShVector sh_basis(const Eigen::Vector3d& n) {
  if (!(std::abs(n.norm() - 1.0) <= 1e-6)) {
    throw Error(ErrorCode::kInvalidArgument, "sh_basis: normal is not unit length");
  }
  const double x = n.x(), y = n.y(), z = n.z();
  ShVector b;
  b << kSh0, kSh1 * y, kSh1 * z, kSh1 * x, kSh2 * x * y, kSh2 * y * z,
      kSh20 * (3.0 * z * z - 1.0), kSh2 * x * z, kSh22 * (x * x - y * y);
  return b;
}

Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Eigen::Vector3d& n) {
  const double x = n.x(), y = n.y(), z = n.z();
  Eigen::Matrix<double, 9, 3> j;
  j << 0, 0, 0,
       0, kSh1, 0,
       0, 0, kSh1,
       kSh1, 0, 0,
       kSh2 * y, kSh2 * x, 0,
       0, kSh2 * z, kSh2 * y,
       0, 0, 6.0 * kSh20 * z,
       kSh2 * z, 0, kSh2 * x,
       2.0 * kSh22 * x, -2.0 * kSh22 * y, 0;
  return j;
}

Eigen::Vector3d shade_linear(const Eigen::Vector3d& albedo,
                             const Eigen::Vector3d& normal,
                             const SHLighting& lighting) {
  return albedo * lighting.gamma.dot(sh_basis(normal));
}

Eigen::Vector3d shade(const Eigen::Vector3d& albedo,
                      const Eigen::Vector3d& normal,
                      const SHLighting& lighting) {
  return shade_linear(albedo, normal, lighting).cwiseMax(0.0).cwiseMin(1.0);
}

VertexNormals compute_vertex_normals(const Eigen::Matrix3Xd& vertices,
                                     const std::vector<Triangle>& triangles) {
  const Eigen::Index n = vertices.cols();
  VertexNormals out;
  out.normals = Eigen::Matrix3Xd::Zero(3, n);
  for (const Triangle& t : triangles) {
    for (auto i : t) {
      if (i >= n) throw Error(ErrorCode::kInvalidArgument, "triangle index out of range");
    }
    const Eigen::Vector3d a = vertices.col(t[0]);
    const Eigen::Vector3d c = (vertices.col(t[1]) - a).cross(vertices.col(t[2]) - a);
    for (auto i : t) out.normals.col(i) += c;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double len = out.normals.col(i).norm();
    if (len > 0.0 && std::isfinite(len)) {
      out.normals.col(i) /= len;
    } else {
      out.normals.col(i).setZero();
      out.zero_normal_vertices.push_back(static_cast<int>(i));
    }
  }
  return out;
}

RasterOutput rasterize(const Eigen::Matrix3Xd& vertices,
                       const std::vector<Triangle>& triangles,
                       const Camera& camera,
                       const Eigen::Matrix3Xd* attributes) {
  camera.validate();
  const int w = camera.width, h = camera.height;
  const Eigen::Index n = vertices.cols();
  if (attributes && attributes->cols() != n) {
    throw Error(ErrorCode::kDimension, "rasterize: attribute count != vertex count");
  }
  RasterOutput out;
  out.triangle = Grid<int>(w, h, -1);
  out.barycentric = Grid<Eigen::Vector3d>(w, h, Eigen::Vector3d::Zero());
  out.depth = DepthMap(w, h, kUndefinedDepth);
  out.coverage = Mask(w, h, 0);

  std::vector<Eigen::Vector2d> pixel(static_cast<size_t>(n));
  std::vector<FixedPoint> fixed(static_cast<size_t>(n));
  std::vector<char> usable(static_cast<size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d v = vertices.col(i);
    if (!v.allFinite() || v.z() <= kNearPlane) continue;
    const Eigen::Vector2d p(camera.focal * v.x() / v.z() + camera.principal_point.x(),
                            camera.focal * v.y() / v.z() + camera.principal_point.y());
    if (std::abs(p.x()) > kMaxPixelCoordinate || std::abs(p.y()) > kMaxPixelCoordinate) {
      continue;
    }
    pixel[i] = p;
    fixed[i] = {std::llround(p.x() * kSubpixel), std::llround(p.y() * kSubpixel)};
    usable[i] = 1;
  }

  // Built on first use: only centres exactly on an edge need it.
  std::optional<std::vector<std::uint64_t>> open;
  auto is_open = [&](std::uint32_t a, std::uint32_t b) {
    if (!open) open = open_edges(triangles);
    return std::binary_search(open->begin(), open->end(), edge_key(a, b));
  };

  for (size_t t = 0; t < triangles.size(); ++t) {
    std::array<std::uint32_t, 3> idx = triangles[t];
    if (idx[0] >= n || idx[1] >= n || idx[2] >= n) {
      throw Error(ErrorCode::kInvalidArgument, "triangle index out of range");
    }
    if (!usable[idx[0]] || !usable[idx[1]] || !usable[idx[2]]) continue;
    // Slot k of the ordered triangle holds original corner order[k].
    std::array<int, 3> order = {0, 1, 2};
    std::int64_t area = edge(fixed[idx[0]], fixed[idx[1]], fixed[idx[2]]);
    if (area == 0) continue;
    if (area < 0) {
      std::swap(order[1], order[2]);
      area = -area;
    }
    const FixedPoint& a = fixed[idx[order[0]]];
    const FixedPoint& b = fixed[idx[order[1]]];
    const FixedPoint& c = fixed[idx[order[2]]];
    const bool tl_bc = top_left(b, c), tl_ca = top_left(c, a), tl_ab = top_left(a, b);

    const Eigen::Vector2d& pa = pixel[idx[order[0]]];
    const Eigen::Vector2d& pb = pixel[idx[order[1]]];
    const Eigen::Vector2d& pc = pixel[idx[order[2]]];
    const double area_d = edge(pa, pb, pc);
    const double za = vertices(2, idx[order[0]]);
    const double zb = vertices(2, idx[order[1]]);
    const double zc = vertices(2, idx[order[2]]);

    const double min_x = std::min({pa.x(), pb.x(), pc.x()});
    const double max_x = std::max({pa.x(), pb.x(), pc.x()});
    const double min_y = std::min({pa.y(), pb.y(), pc.y()});
    const double max_y = std::max({pa.y(), pb.y(), pc.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(max_x - 0.5)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(max_y - 0.5)) + 1);

    for (int y = y0; y <= y1; ++y) {
      const std::int64_t py = (static_cast<std::int64_t>(y) << kSubpixelBits) + (1 << (kSubpixelBits - 1));
      for (int x = x0; x <= x1; ++x) {
        const FixedPoint p{(static_cast<std::int64_t>(x) << kSubpixelBits) + (1 << (kSubpixelBits - 1)), py};
        const std::int64_t e_bc = edge(b, c, p), e_ca = edge(c, a, p), e_ab = edge(a, b, p);
        if (e_bc < 0 || e_ca < 0 || e_ab < 0) continue;
        if (!inside(e_bc, tl_bc) && !is_open(idx[order[1]], idx[order[2]])) continue;
        if (!inside(e_ca, tl_ca) && !is_open(idx[order[2]], idx[order[0]])) continue;
        if (!inside(e_ab, tl_ab) && !is_open(idx[order[0]], idx[order[1]])) continue;
        const Eigen::Vector2d centre(x + 0.5, y + 0.5);
        const double la = edge(pb, pc, centre) / area_d;
        const double lb = edge(pc, pa, centre) / area_d;
        const double lc = 1.0 - la - lb;
        const double ia = la / za, ib = lb / zb, ic = lc / zc;
        const double inv_z = ia + ib + ic;
        if (!(inv_z > 0.0)) continue;
        const double z = 1.0 / inv_z;
        const size_t pi = out.depth.index(x, y);
        if (out.coverage[pi] && !(z < out.depth[pi])) continue;
        Eigen::Vector3d bary;
        bary[order[0]] = ia * z;
        bary[order[1]] = ib * z;
        bary[order[2]] = ic * z;
        out.depth[pi] = z;
        out.coverage[pi] = 1;
        out.triangle[pi] = static_cast<int>(t);
        out.barycentric[pi] = bary;
      }
    }
  }

  if (attributes) {
    out.color = Image(w, h, Rgb::Zero());
    for (size_t i = 0; i < out.coverage.size(); ++i) {
      if (!out.coverage[i]) continue;
      const Triangle& tri = triangles[out.triangle[i]];
      const Eigen::Vector3d& b = out.barycentric[i];
      out.color[i] = (b[0] * attributes->col(tri[0]) + b[1] * attributes->col(tri[1]) +
                      b[2] * attributes->col(tri[2]))
                         .cast<float>();
    }
  }
  return out;
}

RasterOutput rasterize(const TriMesh3D& mesh, const Camera& camera) {
  mesh.validate();
  return rasterize(mesh.vertices, mesh.triangles, camera,
                   mesh.colors.cols() > 0 ? &mesh.colors : nullptr);
}

Eigen::Matrix3Xd shade_vertices(const Eigen::Matrix3Xd& albedo,
                                const Eigen::Matrix3Xd& normals,
                                const SHLighting& lighting) {
  if (albedo.cols() != normals.cols()) {
    throw Error(ErrorCode::kDimension, "shade_vertices: albedo/normal count mismatch");
  }
  Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::Zero(3, albedo.cols());
  for (Eigen::Index i = 0; i < albedo.cols(); ++i) {
    if (normals.col(i).isZero(0.0)) continue;
    colors.col(i) = shade(albedo.col(i), normals.col(i), lighting);
  }
  return colors;
}

FaceRender render_face(const MorphableModel& model,
                       const FaceCoefficients& coefficients, const Pose& pose,
                       const SHLighting& lighting, const Camera& camera) {
  FaceRender r;
  r.vertices = apply_pose(evaluate_shape(model, coefficients.alpha, coefficients.beta), pose);
  r.albedo = evaluate_texture(model, coefficients.delta);
  r.normals = compute_vertex_normals(r.vertices, model.triangles);
  r.vertex_colors = shade_vertices(r.albedo, r.normals.normals, lighting);
  r.raster = rasterize(r.vertices, model.triangles, camera, &r.vertex_colors);
  r.image = r.raster.color;
  r.coverage = r.raster.coverage;
  r.depth = r.raster.depth;
  return r;
}

WarpResult warp_image(const Image& image, const DepthMap& depth,
                      const Mask& region, const Pose& pose_src,
                      const Pose& pose_dst, const Camera& camera) {
  if (count(region) == 0) throw Error(ErrorCode::kEmptyRegion, "warp_image: empty region");
  HairMesh hair = build_hair_mesh(image, depth, region, camera);
  const Pose rel = relative_pose(pose_src, pose_dst);
  hair.mesh.vertices = apply_pose(hair.mesh.vertices, rel);
  RasterOutput raster = rasterize(hair.mesh, camera);
  WarpResult out;
  out.image = raster.color.empty() ? Image(camera.width, camera.height, Rgb::Zero())
                                   : raster.color;
  out.coverage = raster.coverage;
  out.depth = raster.depth;
  out.dropped_triangles = hair.dropped_triangles;
  return out;
}

BilinearSample sample_bilinear(const Image& image, const Eigen::Vector2d& xy) {
  BilinearSample s;
  const int w = image.width(), h = image.height();
  if (w == 0 || h == 0) return s;
  double x = xy.x(), y = xy.y();
  if (!(x >= -1e-9 && x <= w - 1 + 1e-9 && y >= -1e-9 && y <= h - 1 + 1e-9)) return s;
  const double rx = std::round(x), ry = std::round(y);
  const bool on_x = std::abs(x - rx) < 1e-9, on_y = std::abs(y - ry) < 1e-9;
  if (on_x) x = rx;
  if (on_y) y = ry;
  auto lerp = [&](double px, double py) {
    int x0 = std::clamp(static_cast<int>(std::floor(px)), 0, std::max(0, w - 2));
    int y0 = std::clamp(static_cast<int>(std::floor(py)), 0, std::max(0, h - 2));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = px - x0, fy = py - y0;
    const Eigen::Vector3d i00 = image.at(x0, y0).cast<double>();
    const Eigen::Vector3d i10 = image.at(x1, y0).cast<double>();
    const Eigen::Vector3d i01 = image.at(x0, y1).cast<double>();
    const Eigen::Vector3d i11 = image.at(x1, y1).cast<double>();
    const Eigen::Vector3d top = i00 + fx * (i10 - i00);
    const Eigen::Vector3d bottom = i01 + fx * (i11 - i01);
    Eigen::Matrix<double, 3, 2> g;
    g.col(0) = (1.0 - fy) * (i10 - i00) + fy * (i11 - i01);
    g.col(1) = bottom - top;
    return std::make_pair(Eigen::Vector3d(top + fy * (bottom - top)), g);
  };
  const auto [value, gradient] = lerp(x, y);
  s.value = value;
  s.gradient = gradient;
  // On a grid line the interpolant has a kink; use the mean of the two
  // one-sided slopes where both exist.
  if (on_x && x >= 1 && x <= w - 2) {
    s.gradient.col(0) = 0.5 * (lerp(x + 1, y).first - lerp(x - 1, y).first);
  }
  if (on_y && y >= 1 && y <= h - 2) {
    s.gradient.col(1) = 0.5 * (lerp(x, y + 1).first - lerp(x, y - 1).first);
  }
  s.valid = true;
  return s;
}

}  // namespace headforge
