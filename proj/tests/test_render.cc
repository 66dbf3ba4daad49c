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

#include <cmath>
#include <optional>
#include <random>

#include <Eigen/Geometry>

#include "headforge/render.h"
#include "headforge/scene.h"
#include "test_util.h"

using namespace headforge;

namespace {

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

// Moller-Trumbore distance along the ray from the origin through |dir|.
std::optional<double> ray_triangle(const Eigen::Vector3d& dir, const Eigen::Vector3d& a,
                                   const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d e1 = b - a, e2 = c - a;
  const Eigen::Vector3d p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-12) return std::nullopt;
  const Eigen::Vector3d s = -a;
  const double u = s.dot(p) / det;
  const Eigen::Vector3d q = s.cross(e1);
  const double v = dir.dot(q) / det;
  if (u < -1e-9 || v < -1e-9 || u + v > 1 + 1e-9) return std::nullopt;
  return e2.dot(q) / det;
}

const MorphableModel& model() {
  static const MorphableModel m = synthesize_model(1, 4, 16, 8, 16);
  return m;
}

Pose frontal(double z) {
  Pose p;
  p.translation = {0.0, 0.0, z};
  return p;
}

Image smooth_texture(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = Rgb(0.5f + 0.3f * std::sin(0.11f * x), 0.5f + 0.3f * std::cos(0.07f * y),
                         0.4f + 0.002f * static_cast<float>(x + y));
    }
  }
  return img;
}

}  // namespace

TEST_CASE("sh_basis closed forms") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) CHECK(std::abs(sh_basis(random_unit(rng))[0] - 0.282095) < 1e-6);
  const ShVector z = sh_basis({0, 0, 1});
  const double c1 = std::sqrt(3.0 / (4.0 * M_PI));
  CHECK(std::abs(z[1]) < 1e-12);
  CHECK(std::abs(z[2] - c1) < 1e-12);
  CHECK(std::abs(z[3]) < 1e-12);
  CHECK_ERROR_CODE(sh_basis({0, 0, 2}), ErrorCode::kInvalidArgument);
}

TEST_CASE("sh_basis is orthonormal on the sphere (Monte Carlo)") {
  std::mt19937_64 rng(2);
  Eigen::Matrix<double, 9, 9> gram = Eigen::Matrix<double, 9, 9>::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const ShVector y = sh_basis(random_unit(rng));
    gram += y * y.transpose();
  }
  gram *= 4.0 * M_PI / n;
  CHECK((gram - Eigen::Matrix<double, 9, 9>::Identity()).cwiseAbs().maxCoeff() < 2e-2);
}

TEST_CASE("sh_basis_jacobian matches finite differences") {
  std::mt19937_64 rng(3);
  const Eigen::Vector3d n = random_unit(rng);
  const Eigen::Matrix<double, 9, 3> J = sh_basis_jacobian(n);
  // sh_basis insists on unit input, so differentiate the polynomial form via
  // a direction tangent to the sphere.
  const Eigen::Vector3d t = n.cross(random_unit(rng)).normalized();
  const double h = 1e-6;
  const Eigen::Vector3d np = (n + h * t).normalized(), nm = (n - h * t).normalized();
  const ShVector fd = (sh_basis(np) - sh_basis(nm)) / (2 * h);
  CHECK((fd - J * t).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("shade examples and linearity") {
  std::mt19937_64 rng(4);
  const Eigen::Vector3d albedo(0.3, 0.6, 0.9);
  const Eigen::Vector3d n = random_unit(rng);
  SHLighting unit;
  unit.gamma[0] = 2.0 * std::sqrt(M_PI);
  CHECK((shade(albedo, n, unit) - albedo).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(shade(albedo, n, SHLighting()).isZero());
  CHECK((shade(albedo, n, SHLighting::ambient(1.0)) - albedo).cwiseAbs().maxCoeff() < 1e-12);

  std::normal_distribution<double> g;
  SHLighting a, b, sum;
  for (int k = 0; k < 9; ++k) {
    a.gamma[k] = g(rng);
    b.gamma[k] = g(rng);
    sum.gamma[k] = a.gamma[k] + b.gamma[k];
  }
  CHECK((shade_linear(albedo, n, sum) - shade_linear(albedo, n, a) - shade_linear(albedo, n, b))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  const Eigen::Vector3d albedo2(0.1, -0.2, 0.05);
  CHECK((shade_linear(albedo + albedo2, n, a) - shade_linear(albedo, n, a) -
         shade_linear(albedo2, n, a))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  // d shade / d gamma_k = albedo * Y_k(n).
  const ShVector y = sh_basis(n);
  for (int k = 0; k < 9; ++k) {
    SHLighting p = a, m = a;
    p.gamma[k] += 1e-5;
    m.gamma[k] -= 1e-5;
    const Eigen::Vector3d fd = (shade_linear(albedo, n, p) - shade_linear(albedo, n, m)) / 2e-5;
    CHECK((fd - albedo * y[k]).cwiseAbs().maxCoeff() < 1e-8);
  }
  SHLighting bright;
  bright.gamma[0] = 10.0;
  CHECK(shade(albedo, n, bright).maxCoeff() <= 1.0);
}

TEST_CASE("vertex normals") {
  Eigen::Matrix3Xd v(3, 5);
  v << 0, 1, 1, 0, 5, 0, 0, 1, 1, 5, 0, 0, 0, 0, 5;
  const std::vector<Triangle> square{{0, 1, 2}, {0, 2, 3}};
  const VertexNormals n = compute_vertex_normals(v, square);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(std::abs(n.normals(2, i)) - 1.0) < 1e-12);
    CHECK(n.normals.col(i).head<2>().norm() < 1e-12);
  }
  CHECK(n.zero_normal_vertices == std::vector<int>{4});

  std::vector<Triangle> with_degenerate = square;
  with_degenerate.push_back({0, 1, 1});
  with_degenerate.push_back({4, 4, 4});
  const VertexNormals d = compute_vertex_normals(v, with_degenerate);
  CHECK((d.normals - n.normals).cwiseAbs().maxCoeff() == 0.0);

  std::vector<Eigen::Vector3d> sv;
  std::vector<Triangle> st;
  make_icosphere(3, &sv, &st);
  Eigen::Matrix3Xd sphere(3, static_cast<Eigen::Index>(sv.size()));
  for (size_t i = 0; i < sv.size(); ++i) sphere.col(static_cast<Eigen::Index>(i)) = 100.0 * sv[i];
  const VertexNormals sn = compute_vertex_normals(sphere, st);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sphere.cols(); ++i) {
    const double c = std::clamp(sn.normals.col(i).dot(sphere.col(i).normalized()), -1.0, 1.0);
    worst = std::max(worst, std::acos(std::abs(c)) * 180.0 / M_PI);
  }
  CHECK(worst < 2.0);
}

TEST_CASE("rasterize: z-buffer, constant attributes, exact depth") {
  const Camera cam = Camera::default_for(64, 64);
  Eigen::Matrix3Xd v(3, 6);
  // Both triangles cover the principal point; the first is farther.
  v.col(0) = Eigen::Vector3d(-200, -200, 800);
  v.col(1) = Eigen::Vector3d(200, -200, 800);
  v.col(2) = Eigen::Vector3d(0, 200, 800);
  v.col(3) = Eigen::Vector3d(-100, -100, 500);
  v.col(4) = Eigen::Vector3d(100, -100, 500);
  v.col(5) = Eigen::Vector3d(0, 100, 500);
  const std::vector<Triangle> tris{{0, 1, 2}, {3, 4, 5}};
  Eigen::Matrix3Xd attr(3, 6);
  for (int i = 0; i < 6; ++i) attr.col(i) = (i < 3) ? Eigen::Vector3d(0.2, 0.4, 0.6) : Eigen::Vector3d(0.7, 0.1, 0.3);
  const RasterOutput r = rasterize(v, tris, cam, &attr);
  CHECK(r.triangle.at(32, 32) == 1);
  CHECK(std::abs(r.depth.at(32, 32) - 500.0) < 1e-9);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const int t = r.triangle.at(x, y);
      if (t < 0) {
        REQUIRE_FALSE(r.coverage.at(x, y));
        continue;
      }
      const Eigen::Vector3d expected = attr.col(tris[t][0]);
      REQUIRE((r.color.at(x, y).cast<double>() - expected).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  // A tilted triangle against a ray-cast oracle.
  Eigen::Matrix3Xd tilt(3, 3);
  tilt.col(0) = Eigen::Vector3d(-150, -120, 700);
  tilt.col(1) = Eigen::Vector3d(160, -90, 950);
  tilt.col(2) = Eigen::Vector3d(-20, 170, 820);
  const RasterOutput t = rasterize(tilt, {{0, 1, 2}}, cam);
  size_t covered = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!t.coverage.at(x, y)) continue;
      ++covered;
      const Eigen::Vector3d ray = cam.pixel_ray(x, y);
      const auto hit = ray_triangle(ray, tilt.col(0), tilt.col(1), tilt.col(2));
      REQUIRE(hit.has_value());
      REQUIRE(std::abs(*hit * ray.z() - t.depth.at(x, y)) < 1e-4);
      const Eigen::Vector3d b = t.barycentric.at(x, y);
      REQUIRE(std::abs(b.sum() - 1.0) < 1e-12);
      const Eigen::Vector3d p = b[0] * tilt.col(0) + b[1] * tilt.col(1) + b[2] * tilt.col(2);
      REQUIRE((p - *hit * ray).norm() < 1e-6);
    }
  }
  CHECK(covered > 100);
}

TEST_CASE("shared edges are drawn once, open edges are closed") {
  const Camera cam = Camera::default_for(40, 40);  // focal 181.25, centre 20
  // Corners project onto the pixel centres (10.5, 10.5) and (29.5, 29.5), so
  // the outline and the diagonal pass through centres.
  const double z = 725.0;
  Eigen::Matrix3Xd v(3, 4);
  v.col(0) = Eigen::Vector3d(-38, -38, z);
  v.col(1) = Eigen::Vector3d(38, -38, z);
  v.col(2) = Eigen::Vector3d(38, 38, z);
  v.col(3) = Eigen::Vector3d(-38, 38, z);
  const RasterOutput r = rasterize(v, {{0, 1, 2}, {0, 2, 3}}, cam);
  CHECK(count(r.coverage) == 400);
  const RasterOutput swapped = rasterize(v, {{0, 2, 3}, {0, 1, 2}}, cam);
  CHECK(swapped.coverage == r.coverage);
  for (size_t i = 0; i < r.coverage.size(); ++i) {
    if (r.coverage[i]) REQUIRE(swapped.triangle[i] == 1 - r.triangle[i]);
  }
  // The diagonal goes to exactly one of the two triangles.
  int first = 0;
  for (int k = 0; k < 20; ++k) first += r.triangle.at(10 + k, 10 + k) == 0;
  CHECK((first == 0 || first == 20));
}

TEST_CASE("render_face of the mean head") {
  const Camera cam = Camera::default_for(128, 128);
  const FaceCoefficients zero = FaceCoefficients::zeros(model());
  const FaceRender r = render_face(model(), zero, frontal(1000.0), SHLighting::ambient(1.0), cam);
  CHECK(count(r.coverage) > 100);

  // d^f against ray casts of the posed vertices.
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      const int t = r.raster.triangle.at(x, y);
      if (t < 0) continue;
      const Triangle& tri = model().triangles[t];
      const Eigen::Vector3d ray = cam.pixel_ray(x, y);
      const auto hit = ray_triangle(ray, r.vertices.col(tri[0]), r.vertices.col(tri[1]),
                                    r.vertices.col(tri[2]));
      REQUIRE(hit.has_value());
      REQUIRE(std::abs(*hit - r.depth.at(x, y)) < 1e-3);
    }
  }
}

TEST_CASE("lateral translation shifts coverage by focal * dx / Z") {
  const Camera cam = Camera::default_for(128, 128);
  const FaceCoefficients zero = FaceCoefficients::zeros(model());
  auto centroid = [&](const Pose& p) {
    const FaceRender r = render_face(model(), zero, p, SHLighting::ambient(1.0), cam);
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    double n = 0;
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) {
        if (r.coverage.at(x, y)) {
          c += Eigen::Vector2d(x, y);
          ++n;
        }
      }
    }
    return Eigen::Vector2d(c / n);
  };
  const Pose p0 = frontal(1000.0);
  Pose p1 = p0;
  p1.translation.x() += 10.0;
  const Eigen::Vector2d shift = centroid(p1) - centroid(p0);
  CHECK(std::abs(shift.x() - cam.focal * 10.0 / 1000.0) < 0.5);
  CHECK(std::abs(shift.y()) < 0.5);
}

TEST_CASE("rasterization is consistent across resolutions") {
  const Camera cam = Camera::default_for(128, 128);
  const Camera cam2 = cam.scaled(2.0);
  const FaceCoefficients zero = FaceCoefficients::zeros(model());
  Pose p = frontal(1100.0);
  p.quaternion = quaternion_from_euler_deg(20.0, 5.0, 0.0);
  const Mask lo = render_face(model(), zero, p, SHLighting::ambient(1.0), cam).coverage;
  const Mask hi = render_face(model(), zero, p, SHLighting::ambient(1.0), cam2).coverage;
  size_t boundary = 0, differ = 0;
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      const int votes = hi.at(2 * x, 2 * y) + hi.at(2 * x + 1, 2 * y) + hi.at(2 * x, 2 * y + 1) +
                        hi.at(2 * x + 1, 2 * y + 1);
      // Two of four is no strict majority either way; such pixels are
      // undecided and not compared.
      if (votes == 2) continue;
      const bool down = votes >= 3;
      bool near_edge = false;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (lo.contains(nx, ny) && lo.at(nx, ny) != lo.at(x, y)) near_edge = true;
        }
      }
      if (!near_edge) {
        REQUIRE(down == (lo.at(x, y) != 0));
        continue;
      }
      ++boundary;
      differ += down != (lo.at(x, y) != 0);
    }
  }
  REQUIRE(boundary > 0);
  MESSAGE("boundary-adjacent mismatch " << differ << " / " << boundary);
  CHECK(static_cast<double>(differ) < 0.02 * static_cast<double>(boundary));
}

TEST_CASE("warp_image") {
  const int w = 128, h = 128;
  const Camera cam = Camera::default_for(w, h);
  const Image tex = smooth_texture(w, h);
  Mask region(w, h, 0);
  for (int y = 16; y < 112; ++y) {
    for (int x = 16; x < 112; ++x) region.at(x, y) = 1;
  }
  DepthMap depth(w, h, kUndefinedDepth);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (region.at(x, y)) depth.at(x, y) = 1000.0 + 0.5 * (x - 64) + 0.25 * (y - 64);
    }
  }
  const Pose p = frontal(1000.0);

  SUBCASE("identity warp reproduces the source at covered pixels") {
    const WarpResult r = warp_image(tex, depth, region, p, p, cam);
    CHECK(count(r.coverage) > 0);
    CHECK(mask_subset(r.coverage, region));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!r.coverage.at(x, y)) continue;
        REQUIRE((r.image.at(x, y) - tex.at(x, y)).cwiseAbs().maxCoeff() < 1e-6);
        REQUIRE(std::abs(r.depth.at(x, y) - depth.at(x, y)) < 1e-6);
      }
    }
    const WarpResult again = warp_image(r.image, r.depth, r.coverage, p, p, cam);
    const WarpResult third = warp_image(again.image, again.depth, again.coverage, p, p, cam);
    CHECK(third.coverage == again.coverage);
  }

  SUBCASE("moving away by 10% shrinks coverage by 1/1.1^2") {
    DepthMap flat(w, h, kUndefinedDepth);
    for (size_t i = 0; i < flat.size(); ++i) {
      if (region[i]) flat[i] = 1000.0;
    }
    Pose far = p;
    far.translation.z() += 100.0;
    const WarpResult r = warp_image(tex, flat, region, p, far, cam);
    const WarpResult same = warp_image(tex, flat, region, p, p, cam);
    const double ratio = static_cast<double>(count(r.coverage)) / static_cast<double>(count(same.coverage));
    CHECK(std::abs(ratio / (1.0 / 1.21) - 1.0) < 0.05);
  }

  SUBCASE("forward then backward warp round trips colours") {
    Pose q = p;
    q.quaternion = quaternion_from_euler_deg(4.0, 0.0, 0.0);
    const WarpResult fwd = warp_image(tex, depth, region, p, q, cam);
    const WarpResult back = warp_image(fwd.image, fwd.depth, fwd.coverage, q, p, cam);
    double sum = 0.0;
    size_t n = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!back.coverage.at(x, y) || !region.at(x, y)) continue;
        sum += (back.image.at(x, y) - tex.at(x, y)).cast<double>().cwiseAbs().mean();
        ++n;
      }
    }
    REQUIRE(n > 100);
    CHECK(sum / n < 2.0 / 255.0);
  }
}

TEST_CASE("sample_bilinear") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(8, 6);
  for (auto& p : img.data()) p = Rgb(u(rng), u(rng), u(rng));
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 8; ++x) {
      const BilinearSample s = sample_bilinear(img, Eigen::Vector2d(x, y));
      REQUIRE(s.valid);
      REQUIRE(s.value == img.at(x, y).cast<double>());
    }
  }
  const BilinearSample mid = sample_bilinear(img, {2.5, 3.0});
  CHECK((mid.value - 0.5 * (img.at(2, 3) + img.at(3, 3)).cast<double>()).cwiseAbs().maxCoeff() < 1e-7);
  CHECK_FALSE(sample_bilinear(img, {-0.5, 2.0}).valid);
  CHECK_FALSE(sample_bilinear(img, {2.0, 5.5}).valid);

  std::uniform_real_distribution<double> px(0.05, 6.95), py(0.05, 4.95);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d p(px(rng), py(rng));
    const double fx = p.x() - std::floor(p.x()), fy = p.y() - std::floor(p.y());
    if (fx < 1e-3 || fx > 1 - 1e-3 || fy < 1e-3 || fy > 1 - 1e-3) continue;
    const double hstep = 1e-5;
    const BilinearSample s = sample_bilinear(img, p);
    const Eigen::Vector3d dx = (sample_bilinear(img, p + Eigen::Vector2d(hstep, 0)).value -
                                sample_bilinear(img, p - Eigen::Vector2d(hstep, 0)).value) / (2 * hstep);
    const Eigen::Vector3d dy = (sample_bilinear(img, p + Eigen::Vector2d(0, hstep)).value -
                                sample_bilinear(img, p - Eigen::Vector2d(0, hstep)).value) / (2 * hstep);
    REQUIRE((dx - s.gradient.col(0)).cwiseAbs().maxCoeff() < 1e-4);
    REQUIRE((dy - s.gradient.col(1)).cwiseAbs().maxCoeff() < 1e-4);
  }

  // On a grid line the gradient is the mean of the one-sided slopes.
  const BilinearSample on = sample_bilinear(img, {3.0, 2.5});
  const Eigen::Vector3d left = sample_bilinear(img, {2.5, 2.5}).gradient.col(0);
  const Eigen::Vector3d right = sample_bilinear(img, {3.5, 2.5}).gradient.col(0);
  CHECK((on.gradient.col(0) - 0.5 * (left + right)).cwiseAbs().maxCoeff() < 1e-12);
}
