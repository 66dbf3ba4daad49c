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

#include "headforge/losses.h"
#include "headforge/scene.h"
#include "test_util.h"

using namespace headforge;
using headforge::testing::random_mask;

namespace {

// Values on a 1/256 grid so that sums and offsets stay exact in float.
Image dyadic_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(16, 200);
  Image img(w, h);
  for (auto& p : img.data()) p = Rgb(u(rng), u(rng), u(rng)) / 256.0f;
  return img;
}

Image random_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h);
  for (auto& p : img.data()) p = Rgb(u(rng), u(rng), u(rng));
  return img;
}

// Independent bilinear sampler at index coordinates.
std::optional<Eigen::Vector3d> bilinear(const Image& img, double x, double y) {
  if (x < 0 || y < 0 || x > img.width() - 1 || y > img.height() - 1) return std::nullopt;
  const int x0 = std::min(static_cast<int>(x), img.width() - 2);
  const int y0 = std::min(static_cast<int>(y), img.height() - 2);
  const double fx = x - x0, fy = y - y0;
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  v += (1 - fx) * (1 - fy) * img.at(x0, y0).cast<double>();
  v += fx * (1 - fy) * img.at(x0 + 1, y0).cast<double>();
  v += (1 - fx) * fy * img.at(x0, y0 + 1).cast<double>();
  v += fx * fy * img.at(x0 + 1, y0 + 1).cast<double>();
  return v;
}

// Brute-force one direction of l_grad: mean over valid landings of the l1
// difference of forward-difference gradients.
std::pair<double, size_t> gradient_direction_oracle(const Image& src, const Image& dst,
                                                    const DepthMap& depth, const Mask& region,
                                                    const Pose& from, const Pose& to,
                                                    const Camera& cam) {
  const int w = src.width(), h = src.height();
  auto grad = [](const Image& im, int x, int y, bool along_x) {
    return along_x ? Eigen::Vector3d((im.at(x + 1, y) - im.at(x, y)).cast<double>())
                   : Eigen::Vector3d((im.at(x, y + 1) - im.at(x, y)).cast<double>());
  };
  Image dx(w - 1, h - 1), dy(w - 1, h - 1);
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      dx.at(x, y) = grad(dst, x, y, true).cast<float>();
      dy.at(x, y) = grad(dst, x, y, false).cast<float>();
    }
  }
  const Eigen::Matrix3d R = to.rotation() * from.rotation().transpose();
  const Eigen::Vector3d t = to.translation - R * from.translation;
  double sum = 0.0;
  size_t n = 0;
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      if (!region.at(x, y)) continue;
      const Eigen::Vector3d X((x + 0.5 - cam.principal_point.x()) / cam.focal * depth.at(x, y),
                              (y + 0.5 - cam.principal_point.y()) / cam.focal * depth.at(x, y),
                              depth.at(x, y));
      const Eigen::Vector3d Y = R * X + t;
      if (Y.z() <= 1.0) continue;
      const double u = cam.focal * Y.x() / Y.z() + cam.principal_point.x() - 0.5;
      const double v = cam.focal * Y.y() / Y.z() + cam.principal_point.y() - 0.5;
      const auto sx = bilinear(dx, u, v), sy = bilinear(dy, u, v);
      if (!sx || !sy) continue;
      sum += (grad(src, x, y, true) - *sx).cwiseAbs().sum() +
             (grad(src, x, y, false) - *sy).cwiseAbs().sum();
      ++n;
    }
  }
  return {n ? sum / static_cast<double>(n) : 0.0, n};
}

Pose pose_at(double yaw_deg, double z) {
  Pose p;
  p.quaternion = quaternion_from_euler_deg(yaw_deg, 0.0, 0.0);
  p.translation = {0.0, 0.0, z};
  return p;
}

}  // namespace

TEST_CASE("photometric_loss") {
  std::mt19937_64 rng(1);
  const Image a = random_image(16, 12, rng);
  const Mask F = random_mask(16, 12, 0.5, rng);
  CHECK(photometric_loss(a, a, F).value == 0.0);

  Image shifted = a;
  for (auto& p : shifted.data()) p[0] += 0.3f;
  CHECK(std::abs(photometric_loss(a, shifted, F).value - 0.3) < 1e-6);

  const Image b = random_image(16, 12, rng);
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (!F.at(x, y)) continue;
      sum += (a.at(x, y) - b.at(x, y)).cast<double>().norm();
      ++n;
    }
  }
  CHECK(std::abs(photometric_loss(a, b, F).value - sum / n) < 1e-6);

  // Pixels outside F do not matter.
  Image c = b;
  for (size_t i = 0; i < c.size(); ++i) {
    if (!F[i]) c[i] = Rgb(9, 9, 9);
  }
  CHECK(photometric_loss(a, c, F).value == photometric_loss(a, b, F).value);
  CHECK_ERROR_CODE(photometric_loss(a, b, Mask(16, 12, 0)), ErrorCode::kEmptyRegion);
}

TEST_CASE("landmark_loss") {
  LandmarkSet lm{{0, {10.0, 20.0}, 1.0}};
  CHECK(landmark_loss({{10.0, 20.0}}, lm).value == 0.0);
  CHECK(landmark_loss({{13.0, 24.0}}, lm).value == 25.0);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 3.0);
  LandmarkSet many;
  std::vector<Eigen::Vector2d> proj;
  for (std::uint32_t i = 0; i < 10; ++i) {
    many.push_back({i, {g(rng), g(rng)}, 0.5 + 0.1 * i});
    proj.emplace_back(g(rng), g(rng));
  }
  LandmarkSet doubled = many;
  for (auto& l : doubled) l.weight *= 2.0;
  CHECK(landmark_loss(proj, doubled).value == doctest::Approx(2.0 * landmark_loss(proj, many).value));
  CHECK(landmark_loss(proj, many).value >= 0.0);
}

TEST_CASE("coef_regularization") {
  const MorphableModel m = synthesize_model(1, 2, 8, 4, 6);
  LossWeights w;
  const FaceCoefficients zero = FaceCoefficients::zeros(m);
  CHECK(coef_regularization(zero, m.coeff_scales, w).value == 0.0);

  FaceCoefficients unit = zero;
  unit.alpha = m.scales_id().cast<double>();
  CHECK(coef_regularization(unit, m.coeff_scales, w).value ==
        doctest::Approx(w.w_reg_id * m.k_id()).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  FaceCoefficients c = zero;
  for (auto* v : {&c.alpha, &c.beta, &c.delta}) {
    for (auto& x : *v) x = g(rng);
  }
  const RegularizationLoss r = coef_regularization(c, m.coeff_scales, w);
  for (int j = 0; j < m.k_id(); ++j) {
    const double s = m.coeff_scales[j];
    CHECK(r.gradient.alpha[j] == doctest::Approx(2.0 * w.w_reg_id * c.alpha[j] / (s * s)));
    FaceCoefficients p = c, q = c;
    p.alpha[j] += 1e-4;
    q.alpha[j] -= 1e-4;
    const double fd = (coef_regularization(p, m.coeff_scales, w).value -
                       coef_regularization(q, m.coeff_scales, w).value) / 2e-4;
    CHECK(std::abs(fd - r.gradient.alpha[j]) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("color_constancy_loss") {
  const int w = 32, h = 32;
  const Camera cam = Camera::default_for(w, h);
  std::mt19937_64 rng(4);
  const Image a = random_image(w, h, rng);
  DepthMap d(w, h);
  std::uniform_real_distribution<double> u(900.0, 1100.0);
  for (auto& v : d.data()) v = u(rng);
  const Mask region = random_mask(w, h, 0.6, rng);
  const Pose p = pose_at(0.0, 1000.0);

  const PairLoss same = color_constancy_loss(a, a, d, d, p, p, cam, region, region);
  CHECK(same.value <= 1e-6);
  CHECK(same.count1 == count(region));

  Image brighter = a;
  for (auto& px : brighter.data()) px += Rgb::Constant(0.1f);
  CHECK(std::abs(color_constancy_loss(a, brighter, d, d, p, p, cam, region, region).value - 0.3) < 1e-6);

  // Depth outside the region is never read.
  DepthMap mutated = d;
  for (size_t i = 0; i < mutated.size(); ++i) {
    if (!region[i]) mutated[i] = kUndefinedDepth;
  }
  const Image b = random_image(w, h, rng);
  const Pose q = pose_at(8.0, 1000.0);
  CHECK(color_constancy_loss(a, b, d, d, p, q, cam, region, region).value ==
        color_constancy_loss(a, b, mutated, mutated, p, q, cam, region, region).value);
}

TEST_CASE("color_constancy_loss prefers ground-truth depth on generated scenes") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SceneSpec spec;
    spec.seed = seed;
    spec.width = spec.height = 64;
    const HeadScene s = synth_scene(spec);
    const SceneView& v1 = s.views[0];
    const SceneView& v2 = s.views[1];
    DepthMap far1 = v1.depth, far2 = v2.depth;
    for (auto& x : far1.data()) x *= 1.05;
    for (auto& x : far2.data()) x *= 1.05;
    const double gt = color_constancy_loss(v1.image, v2.image, v1.depth, v2.depth, v1.pose,
                                           v2.pose, s.camera, v1.masks.H, v2.masks.H).value;
    const double off = color_constancy_loss(v1.image, v2.image, far1, far2, v1.pose, v2.pose,
                                            s.camera, v1.masks.H, v2.masks.H).value;
    CHECK(gt < off);
  }
}

TEST_CASE("gradient_loss") {
  const int w = 24, h = 20;
  const Camera cam = Camera::default_for(w, h);
  std::mt19937_64 rng(5);
  DepthMap d(w, h);
  std::uniform_real_distribution<double> u(950.0, 1050.0);
  for (auto& v : d.data()) v = u(rng);
  const Mask region = random_mask(w, h, 0.7, rng);
  const Pose p = pose_at(0.0, 1000.0);

  const Image flat1(w, h, Rgb(0.2f, 0.3f, 0.4f)), flat2(w, h, Rgb(0.6f, 0.1f, 0.9f));
  CHECK(gradient_loss(flat1, flat2, d, d, p, pose_at(5.0, 1000.0), cam, region, region).value == 0.0);

  // A global offset cancels exactly.
  const Image a = dyadic_image(w, h, rng);
  Image offset = a;
  for (auto& px : offset.data()) px += Rgb::Constant(0.125f);
  CHECK(gradient_loss(a, offset, d, d, p, p, cam, region, region).value == 0.0);
  const Image b = dyadic_image(w, h, rng);
  Image b_offset = b;
  for (auto& px : b_offset.data()) px += Rgb::Constant(0.25f);
  const Pose q = pose_at(3.0, 1000.0);
  CHECK(gradient_loss(a, b, d, d, p, q, cam, region, region).value ==
        gradient_loss(offset, b_offset, d, d, p, q, cam, region, region).value);

  // Brute-force oracle on random data.
  const Image ra = random_image(w, h, rng), rb = random_image(w, h, rng);
  DepthMap d2(w, h);
  for (auto& v : d2.data()) v = u(rng);
  const Mask region2 = random_mask(w, h, 0.7, rng);
  const PairLoss l = gradient_loss(ra, rb, d, d2, p, q, cam, region, region2);
  const auto [m1, n1] = gradient_direction_oracle(ra, rb, d, region, p, q, cam);
  const auto [m2, n2] = gradient_direction_oracle(rb, ra, d2, region2, q, p, cam);
  REQUIRE(n1 > 0);
  REQUIRE(n2 > 0);
  CHECK(l.count1 == n1);
  CHECK(l.count2 == n2);
  CHECK(std::abs(l.value - 0.5 * (m1 + m2)) < 1e-6);
}

TEST_CASE("smoothness_loss") {
  DepthMap affine(9, 7);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) affine.at(x, y) = 3.0 * x - 2.0 * y + 1000.0;
  }
  CHECK(smoothness_loss(affine, Mask(9, 7, 1)).value == 0.0);

  DepthMap bump(3, 3, 1.0);
  bump.at(1, 1) = 2.0;
  const DepthLoss b = smoothness_loss(bump, Mask(3, 3, 1));
  CHECK(b.count == 1);
  CHECK(b.value == 4.0);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(900.0, 1100.0);
  DepthMap r(12, 10);
  for (auto& v : r.data()) v = u(rng);
  const Mask region = random_mask(12, 10, 0.8, rng);
  DepthMap scaled = r;
  for (auto& v : scaled.data()) v *= 2.5;
  CHECK(smoothness_loss(scaled, region).value ==
        doctest::Approx(2.5 * smoothness_loss(r, region).value).epsilon(1e-12));

  // Values outside the region are not read.
  DepthMap mutated = r;
  for (size_t i = 0; i < mutated.size(); ++i) {
    if (!region[i]) mutated[i] = kUndefinedDepth;
  }
  CHECK(smoothness_loss(mutated, region).value == smoothness_loss(r, region).value);
}

namespace {

RegionMasks face_masks(int w, int h, std::mt19937_64& rng) {
  RegionMasks m;
  m.S = Mask(w, h, 1);
  m.F = random_mask(w, h, 0.6, rng);
  m.S_f = m.F;
  m.S_h = random_mask(w, h, 0.4, rng);
  compute_hair_region(&m);
  return m;
}

}  // namespace

TEST_CASE("face_depth_loss") {
  std::mt19937_64 rng(7);
  const RegionMasks m = face_masks(14, 10, rng);
  DepthMap df(14, 10);
  std::uniform_real_distribution<double> u(900.0, 1100.0);
  for (auto& v : df.data()) v = u(rng);
  CHECK(face_depth_loss(df, df, m).value == 0.0);
  DepthMap d = df;
  for (auto& v : d.data()) v += 7.0;
  CHECK(std::abs(face_depth_loss(d, df, m).value - 7.0) < 1e-9);

  // Hair-occluded face pixels and pixels outside F are excluded.
  DepthMap mutated = d;
  for (size_t i = 0; i < mutated.size(); ++i) {
    if (!m.F[i] || m.S_h[i]) mutated[i] = 1.0;
  }
  CHECK(face_depth_loss(mutated, df, m).value == face_depth_loss(d, df, m).value);
}

TEST_CASE("layer_order_loss") {
  std::mt19937_64 rng(8);
  const RegionMasks m = face_masks(14, 10, rng);
  DepthMap df(14, 10, 1000.0);
  DepthMap front = df, behind = df;
  for (auto& v : front.data()) v -= 5.0;
  for (auto& v : behind.data()) v += 2.0;
  CHECK(layer_order_loss(front, df, m).value == 0.0);
  CHECK(count_layer_violations(front, df, m) == 0);
  CHECK(layer_order_loss(behind, df, m).value == 2.0);

  // Half of the overlap violates by +4, the other half is in front.
  DepthMap mixed = df;
  size_t k = 0;
  const Mask overlap = mask_and(m.S_h, m.F);
  REQUIRE(count(overlap) >= 2);
  size_t total = count(overlap);
  if (total % 2) {
    // Drop one overlap pixel from the split by putting it exactly on d^f.
    --total;
  }
  size_t placed = 0;
  for (size_t i = 0; i < mixed.size(); ++i) {
    if (!overlap[i]) continue;
    if (placed == total) break;
    mixed[i] = (k++ % 2 == 0) ? 1004.0 : 995.0;
    ++placed;
  }
  const double expected = 4.0 * static_cast<double>(total / 2) / static_cast<double>(count(overlap));
  CHECK(layer_order_loss(mixed, df, m).value == doctest::Approx(expected).epsilon(1e-12));
  if (total == count(overlap)) CHECK(layer_order_loss(mixed, df, m).value == 2.0);

  RegionMasks no_hair = m;
  no_hair.S_h = Mask(14, 10, 0);
  const DepthLoss empty = layer_order_loss(behind, df, no_hair);
  CHECK(empty.value == 0.0);
  CHECK(empty.empty_region);
}

TEST_CASE("every depth loss is non-negative") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(800.0, 1200.0);
  for (int trial = 0; trial < 20; ++trial) {
    const RegionMasks m = face_masks(12, 12, rng);
    DepthMap d(12, 12), df(12, 12);
    for (auto& v : d.data()) v = u(rng);
    for (auto& v : df.data()) v = u(rng);
    CHECK(smoothness_loss(d, m.S).value >= 0.0);
    CHECK(face_depth_loss(d, df, m).value >= 0.0);
    CHECK(layer_order_loss(d, df, m).value >= 0.0);
  }
}

namespace {

struct FaceSetup {
  HeadScene scene;
  FaceObservation obs;
  FaceParameters params;
};

const FaceSetup& face_setup() {
  static const FaceSetup s = [] {
    SceneSpec spec;
    spec.width = spec.height = 64;
    spec.n_subdiv = 3;
    FaceSetup f;
    f.scene = synth_scene(spec);
    const SceneView& v = f.scene.views[0];
    f.obs = {v.image, v.masks.S_f, v.landmarks, f.scene.camera};
    f.params = {f.scene.coefficients, v.pose, f.scene.lighting};
    f.params.pose.translation.x() += 3.0;
    f.params.coefficients.alpha[0] += 0.5 * f.scene.model.coeff_scales[0];
    return f;
  }();
  return s;
}

}  // namespace

TEST_CASE("face_energy weights select the components") {
  const FaceSetup& f = face_setup();
  LossWeights zero;
  zero.w_photo = zero.w_lmk = zero.w_reg_id = zero.w_reg_exp = zero.w_reg_tex = 0.0;
  const FaceEnergy none = face_energy(f.scene.model, f.params, f.obs, zero);
  CHECK(none.value == 0.0);
  CHECK(none.gradient.isZero(0.0));

  const FaceEnergy all = face_energy(f.scene.model, f.params, f.obs, LossWeights());
  LossWeights photo = zero;
  photo.w_photo = 1.0;
  CHECK(face_energy(f.scene.model, f.params, f.obs, photo).value == doctest::Approx(all.terms.photo));
  LossWeights lmk = zero;
  lmk.w_lmk = 1.0;
  CHECK(face_energy(f.scene.model, f.params, f.obs, lmk).value == doctest::Approx(all.terms.lmk));
  LossWeights id = zero;
  id.w_reg_id = 1.0;
  CHECK(face_energy(f.scene.model, f.params, f.obs, id).value == doctest::Approx(all.terms.reg_id));

  // The photometric term at the rasterized parameters is photometric_loss.
  const FaceRender r = render_face(f.scene.model, f.params.coefficients, f.params.pose,
                                   f.params.lighting, f.scene.camera);
  const double direct = photometric_loss(f.obs.image, r.image, mask_and(r.coverage, f.obs.segmented_face)).value;
  CHECK(all.terms.photo == doctest::Approx(direct).epsilon(1e-9));

  // The total gradient is the weighted sum of the component gradients.
  const LossWeights w;
  LossWeights wp = zero, wl = zero, wr = zero;
  wp.w_photo = w.w_photo;
  wl.w_lmk = w.w_lmk;
  wr.w_reg_id = w.w_reg_id;
  wr.w_reg_exp = w.w_reg_exp;
  wr.w_reg_tex = w.w_reg_tex;
  const Eigen::VectorXd sum = face_energy(f.scene.model, f.params, f.obs, wp).gradient +
                              face_energy(f.scene.model, f.params, f.obs, wl).gradient +
                              face_energy(f.scene.model, f.params, f.obs, wr).gradient;
  CHECK((sum - all.gradient).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, all.gradient.cwiseAbs().maxCoeff()));
}

TEST_CASE("depth_energy weights select the components") {
  SceneSpec spec;
  spec.width = spec.height = 48;
  spec.n_subdiv = 3;
  const HeadScene s = synth_scene(spec);
  const DepthView v1{s.views[0].image, s.views[0].masks, s.views[0].face_depth, s.views[0].pose};
  const DepthView v2{s.views[1].image, s.views[1].masks, s.views[1].face_depth, s.views[1].pose};
  DepthMap d1 = s.views[0].depth, d2 = s.views[1].depth;
  for (auto& v : d1.data()) v += 3.0;
  LossWeights zero;
  zero.w_color = zero.w_grad = zero.w_smooth = zero.w_face = zero.w_layer = 0.0;
  const DepthEnergy none = depth_energy(d1, d2, v1, v2, s.camera, zero);
  CHECK(none.value == 0.0);

  const DepthEnergy all = depth_energy(d1, d2, v1, v2, s.camera, LossWeights());
  auto only = [&](double LossWeights::*field) {
    LossWeights w = zero;
    w.*field = 1.0;
    return depth_energy(d1, d2, v1, v2, s.camera, w).value;
  };
  CHECK(only(&LossWeights::w_color) == doctest::Approx(all.terms.color));
  CHECK(only(&LossWeights::w_grad) == doctest::Approx(all.terms.grad));
  CHECK(only(&LossWeights::w_smooth) == doctest::Approx(all.terms.smooth));
  CHECK(only(&LossWeights::w_face) == doctest::Approx(all.terms.face));
  CHECK(only(&LossWeights::w_layer) == doctest::Approx(all.terms.layer));
  const LossWeights w;
  CHECK(all.value == doctest::Approx(w.w_color * all.terms.color + w.w_grad * all.terms.grad +
                                     w.w_smooth * all.terms.smooth + w.w_face * all.terms.face +
                                     w.w_layer * all.terms.layer));
}
