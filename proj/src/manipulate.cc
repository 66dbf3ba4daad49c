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

#include "headforge/manipulate.h"

#include <cmath>

#include "headforge/error.h"
#include "headforge/harmonic.h"
#include "headforge/io.h"
#include "headforge/scene.h"

namespace headforge {

namespace {

Eigen::Matrix3Xd move(const Eigen::Matrix3Xd& points, const Pose& delta,
                      const Eigen::Vector3d& centre) {
  Eigen::Matrix3Xd out = delta.rotation() * (points.colwise() - centre);
  out.colwise() += centre + delta.translation;
  return out;
}

}  // namespace

void HeadAssets::validate() const {
  face.validate();
  hair.validate();
  camera.validate();
  masks.validate();
  if (!plate.same_shape(camera.width, camera.height) || !masks.S.same_shape(plate) ||
      !depth.same_shape(plate)) {
    throw Error(ErrorCode::kDimension, "assets: plate, masks and camera disagree in size");
  }
  if (face.colors.cols() != face.vertices.cols()) {
    throw Error(ErrorCode::kDimension, "assets: face mesh needs per-vertex albedo");
  }
  if (hair.vertices.cols() > 0 && hair.colors.cols() != hair.vertices.cols()) {
    throw Error(ErrorCode::kDimension, "assets: hair mesh needs per-vertex colours");
  }
}

Eigen::Vector3d head_centre(const TriMesh3D& face) {
  if (face.vertices.cols() == 0) throw Error(ErrorCode::kEmptyRegion, "empty face mesh");
  return face.vertices.rowwise().mean();
}

HeadAssets assemble_assets(const MorphableModel& model,
                           const FaceParameters& face, const Image& image,
                           const DepthMap& depth, const RegionMasks& masks,
                           const Camera& camera, const Image* plate) {
  HeadAssets a;
  a.camera = camera;
  a.depth = depth;
  a.masks = masks;
  if (a.masks.H.empty()) compute_hair_region(&a.masks);
  a.pose = face.pose.normalized();
  a.lighting = face.lighting;
  a.face.vertices =
      apply_pose(evaluate_shape(model, face.coefficients.alpha, face.coefficients.beta), a.pose);
  a.face.triangles = model.triangles;
  a.face.colors = evaluate_texture(model, face.coefficients.delta);
  a.head_centre = head_centre(a.face);
  if (count(a.masks.H) > 0) {
    a.hair = build_hair_mesh(image, depth, a.masks.H, camera).mesh;
  }
  a.plate = plate ? *plate : fill_holes(image, a.masks.S);
  a.validate();
  return a;
}

Pose delta_from_euler(double yaw_deg, double pitch_deg, double roll_deg,
                      double tx_mm, double ty_mm, double tz_mm) {
  Pose p;
  p.quaternion = quaternion_from_euler_deg(yaw_deg, pitch_deg, roll_deg);
  p.translation = Eigen::Vector3d(tx_mm, ty_mm, tz_mm);
  return p;
}

Pose delta_for_target(const HeadAssets& assets, const Pose& target) {
  const Pose t = target.normalized();
  Pose d;
  d.quaternion = quaternion_multiply(t.quaternion, assets.pose.inverse().quaternion);
  const Eigen::Matrix3d r = d.rotation();
  d.translation = t.translation - r * assets.pose.translation + r * assets.head_centre -
                  assets.head_centre;
  return d.normalized();
}

Manipulation manipulate_pose(const HeadAssets& assets, const Pose& delta_in) {
  assets.validate();
  const Pose delta = delta_in.normalized();
  const Camera& cam = assets.camera;
  const int w = cam.width, h = cam.height;
  const Eigen::Index nf = assets.face.vertices.cols(), nh = assets.hair.vertices.cols();

  const Eigen::Matrix3Xd face = move(assets.face.vertices, delta, assets.head_centre);
  const VertexNormals normals = compute_vertex_normals(face, assets.face.triangles);
  const Eigen::Matrix3Xd face_colors =
      shade_vertices(assets.face.colors, normals.normals, assets.lighting);

  Eigen::Matrix3Xd vertices(3, nf + nh), colors(3, nf + nh);
  vertices.leftCols(nf) = face;
  colors.leftCols(nf) = face_colors;
  if (nh > 0) {
    vertices.rightCols(nh) = move(assets.hair.vertices, delta, assets.head_centre);
    colors.rightCols(nh) = assets.hair.colors;
  }
  if (!((vertices.row(2).array() > kNearPlane).any())) {
    throw Error(ErrorCode::kBehindCamera, "head is entirely behind the camera");
  }
  std::vector<Triangle> triangles = assets.face.triangles;
  const size_t n_face_tris = triangles.size();
  for (const Triangle& t : assets.hair.triangles) {
    triangles.push_back({static_cast<std::uint32_t>(t[0] + nf), static_cast<std::uint32_t>(t[1] + nf),
                         static_cast<std::uint32_t>(t[2] + nf)});
  }
  RasterOutput raster = rasterize(vertices, triangles, cam, &colors);

  Manipulation out;
  out.coverage = raster.coverage;
  out.depth = raster.depth;
  out.hair_pixels = Mask(w, h, 0);
  out.face_pixels = Mask(w, h, 0);
  Image color = raster.color;
  for (size_t i = 0; i < raster.coverage.size(); ++i) {
    if (!raster.coverage[i]) continue;
    if (static_cast<size_t>(raster.triangle[i]) < n_face_tris) {
      out.face_pixels[i] = 1;
    } else {
      out.hair_pixels[i] = 1;
    }
  }
  // Splats only fill pixels no triangle reached.
  for (Eigen::Index k = nf; k < nf + nh; ++k) {
    const Projection p = project_point(vertices.col(k), cam);
    if (!p.valid || p.depth <= kNearPlane) continue;
    const int x = static_cast<int>(std::floor(p.pixel.x()));
    const int y = static_cast<int>(std::floor(p.pixel.y()));
    if (!out.coverage.contains(x, y)) continue;
    const size_t i = out.coverage.index(x, y);
    if (raster.coverage[i]) continue;
    if (out.coverage[i] && !(p.depth < out.depth[i])) continue;
    out.coverage[i] = 1;
    out.hair_pixels[i] = 1;
    out.depth[i] = p.depth;
    color[i] = colors.col(k).cast<float>();
  }

  out.hole = mask_minus(assets.masks.S, out.coverage);
  out.image = assets.plate;
  for (size_t i = 0; i < out.image.size(); ++i) {
    if (out.coverage[i]) {
      out.image[i] = color[i];
    } else if (out.hole[i]) {
      out.image[i] = Rgb::Zero();
    }
  }
  Pose about_centre = delta;
  about_centre.translation =
      delta.translation + assets.head_centre - delta.rotation() * assets.head_centre;
  out.pose = compose(about_centre, assets.pose).normalized();
  return out;
}

HeadAssets reassemble(const HeadAssets& assets, const Pose& delta_in,
                      const Manipulation& result) {
  const Pose delta = delta_in.normalized();
  HeadAssets a;
  a.camera = assets.camera;
  a.lighting = assets.lighting;
  a.plate = assets.plate;
  a.face.vertices = move(assets.face.vertices, delta, assets.head_centre);
  a.face.triangles = assets.face.triangles;
  a.face.colors = assets.face.colors;
  a.head_centre = assets.head_centre + delta.translation;
  a.pose = result.pose;
  a.depth = result.depth;
  a.masks.S = result.coverage;
  a.masks.S_f = result.face_pixels;
  a.masks.S_h = result.hair_pixels;
  a.masks.F = rasterize(a.face.vertices, a.face.triangles, a.camera).coverage;
  compute_hair_region(&a.masks);
  if (count(result.hair_pixels) > 0) {
    a.hair = build_hair_mesh(result.image, result.depth, result.hair_pixels, a.camera).mesh;
  }
  a.validate();
  return a;
}

Image fill_holes(const Image& image, const Mask& hole) {
  require_same_shape(image, hole, "fill_holes");
  const size_t n = count(hole);
  if (n == 0) return image;
  if (n == image.size()) throw Error(ErrorCode::kEmptyRegion, "hole mask covers the whole image");
  Image out = image;
  for (int c = 0; c < 3; ++c) {
    DepthMap known(image.width(), image.height(), kUndefinedDepth);
    double sum = 0.0;
    size_t m = 0;
    for (size_t i = 0; i < image.size(); ++i) {
      if (hole[i]) continue;
      known[i] = image[i][c];
      sum += known[i];
      ++m;
    }
    const HarmonicResult r = solve_harmonic(known, hole, sum / static_cast<double>(m));
    for (size_t i = 0; i < image.size(); ++i) {
      if (hole[i]) out[i][c] = static_cast<float>(r.values[i]);
    }
  }
  return out;
}

void save_assets(const HeadAssets& assets, const std::filesystem::path& dir) {
  assets.validate();
  std::filesystem::create_directories(dir);
  save_obj(assets.face, dir / "face.obj");
  save_obj(assets.hair, dir / "hair.obj");
  write_png(assets.plate, dir / "plate.png");
  write_depth(assets.depth, dir / "depth.dpth");
  write_mask_png(assets.masks.S, dir / "S.png");
  write_mask_png(assets.masks.S_f, dir / "Sf.png");
  write_mask_png(assets.masks.S_h, dir / "Sh.png");
  write_mask_png(assets.masks.F, dir / "F.png");
  write_mask_png(assets.masks.H, dir / "H.png");
  KeyValues kv;
  kv["pose"] = format_pose(assets.pose);
  kv["gamma"] = format_doubles(assets.lighting.gamma.data(), 9);
  kv["camera.focal"] = format_double(assets.camera.focal);
  kv["camera.principal_point"] = format_doubles(assets.camera.principal_point.data(), 2);
  kv["camera.width"] = std::to_string(assets.camera.width);
  kv["camera.height"] = std::to_string(assets.camera.height);
  kv["head_centre"] = format_doubles(assets.head_centre.data(), 3);
  write_key_values(kv, dir / "head.txt");
}

HeadAssets load_assets(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "assets bundle not found: " + dir.string());
  }
  KeyValues kv = read_key_values(dir / "head.txt");
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::kConfig, std::string("head.txt: missing ") + key);
    return it->second;
  };
  auto vec = [&](const char* key, size_t n) {
    const std::vector<double> v = parse_doubles(get(key), key);
    if (v.size() != n) throw Error(ErrorCode::kConfig, std::string("head.txt: bad ") + key);
    return v;
  };
  HeadAssets a;
  a.pose = parse_pose(get("pose"), "pose");
  const auto gamma = vec("gamma", 9);
  for (int i = 0; i < 9; ++i) a.lighting.gamma[i] = gamma[i];
  a.camera.focal = parse_double(get("camera.focal"), "camera.focal");
  const auto pp = vec("camera.principal_point", 2);
  a.camera.principal_point = Eigen::Vector2d(pp[0], pp[1]);
  a.camera.width = static_cast<int>(parse_int(get("camera.width"), "camera.width"));
  a.camera.height = static_cast<int>(parse_int(get("camera.height"), "camera.height"));
  const auto c = vec("head_centre", 3);
  a.head_centre = Eigen::Vector3d(c[0], c[1], c[2]);
  a.face = load_obj(dir / "face.obj");
  a.hair = load_obj(dir / "hair.obj");
  a.plate = read_png(dir / "plate.png");
  a.depth = read_depth(dir / "depth.dpth");
  a.masks.S = read_mask_png(dir / "S.png");
  a.masks.S_f = read_mask_png(dir / "Sf.png");
  a.masks.S_h = read_mask_png(dir / "Sh.png");
  a.masks.F = read_mask_png(dir / "F.png");
  a.masks.H = read_mask_png(dir / "H.png");
  a.validate();
  return a;
}

}  // namespace headforge
