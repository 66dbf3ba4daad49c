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
#include <random>

#include "headforge/fit.h"
#include "headforge/harmonic.h"
#include "headforge/scene.h"
#include "test_util.h"

using namespace headforge;
using testing::bit_identical;

namespace {

HeadScene small_scene(std::uint64_t seed, int size = 64) {
  SceneSpec spec;
  spec.seed = seed;
  spec.width = spec.height = size;
  spec.n_subdiv = 3;
  return synth_scene(spec);
}

DepthView view_of(const SceneView& v) { return {v.image, v.masks, v.face_depth, v.pose}; }

FaceObservation observation_of(const HeadScene& s, int k) {
  const SceneView& v = s.views[k];
  return {v.image, v.masks.S_f, v.landmarks, s.camera};
}

double max_normalized_change(const FaceParameters& a, const FaceParameters& b,
                             const MorphableModel& m) {
  double worst = 0.0;
  Eigen::Index o = 0;
  const std::array<std::pair<const Eigen::VectorXd*, const Eigen::VectorXd*>, 3> blocks{
      {{&a.coefficients.alpha, &b.coefficients.alpha},
       {&a.coefficients.beta, &b.coefficients.beta},
       {&a.coefficients.delta, &b.coefficients.delta}}};
  for (const auto& [x, y] : blocks) {
    for (Eigen::Index i = 0; i < x->size(); ++i) {
      worst = std::max(worst, std::abs((*x)[i] - (*y)[i]) / m.coeff_scales[o++]);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("finite_difference_gradient") {
  const auto square = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  const Eigen::VectorXd g = finite_difference_gradient(square, Eigen::VectorXd::Constant(1, 3.0), 1e-4);
  CHECK(std::abs(g[0] - 6.0) < 1e-6);

  const Eigen::Vector3d c(0.5, -2.0, 4.0);
  const auto linear = [&](const Eigen::VectorXd& x) { return c.dot(x); };
  for (double step : {1.0, 0.25, 1e-3}) {
    const Eigen::VectorXd lg = finite_difference_gradient(linear, Eigen::Vector3d(1.0, 2.0, 3.0), step);
    CHECK((lg - c).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("check_gradient excludes kinks and keeps curvature") {
  const auto abs_sum = [](const Eigen::VectorXd& x) { return x.cwiseAbs().sum(); };
  Eigen::VectorXd x(3);
  x << 0.0, 1.0, -2.0;
  Eigen::VectorXd g(3);
  g << 0.0, 1.0, -1.0;
  const GradientCheck k = check_gradient(abs_sum, x, g, 1e-3);
  CHECK(k.excluded == 1);
  CHECK(k.passed == 2);

  const auto quad = [](const Eigen::VectorXd& x) { return 1e6 * x.squaredNorm(); };
  const GradientCheck q = check_gradient(quad, x, 2e6 * x, 1e-3);
  CHECK(q.excluded == 0);
  CHECK(q.passed == 3);

  Eigen::VectorXd wrong = 2e6 * x;
  wrong[1] *= 1.01;
  CHECK(check_gradient(quad, x, wrong, 1e-3).passed == 2);
}

TEST_CASE("Adam and the cosine schedule") {
  CHECK(cosine_schedule(0, 100, 0.02) == doctest::Approx(1.0));
  CHECK(cosine_schedule(100, 101, 0.02) == doctest::Approx(0.02));
  CHECK(cosine_schedule(50, 101, 0.02) == doctest::Approx(0.51));
  CHECK(cosine_schedule(500, 101, 0.02) == doctest::Approx(0.02));

  Adam adam(Eigen::VectorXd::Constant(2, 0.1));
  Eigen::VectorXd x(2);
  x << 1.0, -1.0;
  for (int i = 0; i < 500; ++i) adam.step(&x, 2.0 * x, 1.0);
  CHECK(x.norm() < 0.05);
}

TEST_CASE("init_depth") {
  SUBCASE("constant face depth extends as a constant") {
    RegionMasks m;
    m.S = Mask(20, 16, 1);
    m.F = Mask(20, 16, 0);
    for (int y = 4; y < 12; ++y) {
      for (int x = 5; x < 15; ++x) m.F.at(x, y) = 1;
    }
    const InitDepthResult r = init_depth(DepthMap(20, 16, 1000.0), m);
    for (size_t i = 0; i < r.depth.size(); ++i) CHECK(std::abs(r.depth[i] - 1000.0) < 1e-9);
    CHECK(r.unanchored_components == 0);
  }
  SUBCASE("a strip between two face depths becomes a linear ramp") {
    const int w = 11, h = 1;
    RegionMasks m;
    m.S = Mask(w, h, 1);
    m.F = Mask(w, h, 0);
    m.F.at(0, 0) = 1;
    m.F.at(w - 1, 0) = 1;
    DepthMap df(w, h, kUndefinedDepth);
    df.at(0, 0) = 900.0;
    df.at(w - 1, 0) = 1100.0;
    const InitDepthResult r = init_depth(df, m);
    for (int x = 0; x < w; ++x) CHECK(std::abs(r.depth.at(x, 0) - (900.0 + 20.0 * x)) < 1e-6);
  }
  SUBCASE("the solve satisfies the Laplace stencil on generated scenes") {
    const HeadScene s = small_scene(3);
    const SceneView& v = s.views[0];
    const InitDepthResult r = init_depth(v.face_depth, v.masks);
    DepthMap known(v.face_depth.width(), v.face_depth.height(), kUndefinedDepth);
    for (size_t i = 0; i < known.size(); ++i) {
      if (v.masks.F[i]) known[i] = v.face_depth[i];
    }
    CHECK(harmonic_residual(r.depth, mask_minus(v.masks.S, v.masks.F), known) < 1e-4);
    for (size_t i = 0; i < r.depth.size(); ++i) {
      if (v.masks.S[i]) REQUIRE((is_defined(r.depth[i]) && r.depth[i] > 0.0));
    }
  }
}

TEST_CASE("fit_face from the ground truth stays put") {
  const HeadScene s = small_scene(1, 128);
  const SceneView& v = s.views[0];
  const FaceParameters truth{s.coefficients, v.pose, s.lighting};
  const FaceObservation obs = observation_of(s, 0);
  const FaceFitResult r = fit_face(s.model, obs, FitConfig(), truth);
  REQUIRE_FALSE(r.trace.empty());
  CHECK(r.trace.front().terms.photo < 1e-6);
  CHECK(r.trace.front().terms.lmk < 1e-6);
  CHECK(r.trace.front().energy < 1e-2);
  CHECK(max_normalized_change(r.params, truth, s.model) < 1e-3);
  CHECK(rotation_angle(r.params.pose.quaternion, truth.pose.quaternion) < 1e-3);
}

TEST_CASE("fit_face is deterministic and never worse than its start") {
  const HeadScene s = small_scene(2);
  const FaceParameters truth{s.coefficients, s.views[0].pose, s.lighting};
  const FaceParameters init = perturb_face_parameters(truth, s.model, 11);
  FitConfig cfg;
  cfg.face_iterations = 60;
  const FaceObservation obs = observation_of(s, 0);
  const FaceFitResult a = fit_face(s.model, obs, cfg, init);
  const FaceFitResult b = fit_face(s.model, obs, cfg, init);
  CHECK(a.params.to_vector() == b.params.to_vector());
  CHECK(a.energy == b.energy);
  REQUIRE_FALSE(a.trace.empty());
  CHECK(a.energy <= a.trace.front().energy);
  for (const FaceTraceRow& row : a.trace) CHECK(a.energy <= row.energy);
  CHECK(std::abs(a.params.pose.quaternion.norm() - 1.0) < 1e-9);
}

TEST_CASE("doubling the landmark weight lowers the landmark loss") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeadScene s = small_scene(seed);
    const FaceParameters truth{s.coefficients, s.views[0].pose, s.lighting};
    const FaceParameters init = perturb_face_parameters(truth, s.model, 100 + seed);
    FitConfig cfg;
    cfg.face_iterations = 100;
    cfg.weights.w_photo = 0.0;
    const FaceObservation obs = observation_of(s, 0);
    const FaceFitResult once = fit_face(s.model, obs, cfg, init);
    cfg.weights.w_lmk *= 2.0;
    const FaceFitResult twice = fit_face(s.model, obs, cfg, init);
    CHECK(twice.terms.lmk < once.terms.lmk);
  }
}

TEST_CASE("perturb_face_parameters follows its protocol") {
  const HeadScene s = small_scene(4);
  const FaceParameters truth{s.coefficients, s.views[0].pose, s.lighting};
  const FaceParameters p = perturb_face_parameters(truth, s.model, 5);
  CHECK(rotation_angle(p.pose.quaternion, truth.pose.quaternion) * 180.0 / M_PI ==
        doctest::Approx(5.0).epsilon(1e-9));
  CHECK((p.pose.translation - truth.pose.translation).norm() == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(p.lighting.gamma == SHLighting::ambient(0.8).gamma);
  const FaceParameters again = perturb_face_parameters(truth, s.model, 5);
  CHECK(again.to_vector() == p.to_vector());
}

TEST_CASE("fit_depth_pair with identical views") {
  const HeadScene s = small_scene(5);
  const DepthView v = view_of(s.views[0]);
  const DepthMap init = init_depth(v.face_depth, v.masks).depth;
  SUBCASE("data terms vanish along the whole fit") {
    const DepthFitResult r = fit_depth_pair(v, v, s.camera, FitConfig());
    CHECK(r.degenerate_pair);
    for (const DepthTraceRow& row : r.trace) {
      REQUIRE(row.terms.color < 1e-12);
      REQUIRE(row.terms.grad < 1e-12);
    }
    CHECK(bit_identical(r.depth1, r.depth2));
  }
  SUBCASE("without the smoothness prior the initialization is a fixed point") {
    FitConfig cfg;
    cfg.weights.w_smooth = 0.0;
    const DepthFitResult r = fit_depth_pair(v, v, s.camera, cfg);
    double worst = 0.0;
    for (size_t i = 0; i < init.size(); ++i) {
      if (v.masks.S[i]) worst = std::max(worst, std::abs(r.depth1[i] - init[i]));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("fit_depth_pair output is finite, positive and deterministic") {
  const HeadScene s = small_scene(6);
  const DepthView a = view_of(s.views[0]), b = view_of(s.views[1]);
  FitConfig cfg;
  cfg.depth_iterations = 150;
  const DepthFitResult r = fit_depth_pair(a, b, s.camera, cfg);
  const DepthFitResult again = fit_depth_pair(a, b, s.camera, cfg);
  CHECK(bit_identical(r.depth1, again.depth1));
  CHECK(bit_identical(r.depth2, again.depth2));
  CHECK(r.energy <= r.initial_energy);
  for (int k = 0; k < 2; ++k) {
    const DepthMap& d = k ? r.depth2 : r.depth1;
    const Mask& S = s.views[k].masks.S;
    for (size_t i = 0; i < d.size(); ++i) {
      if (S[i]) REQUIRE((std::isfinite(d[i]) && d[i] > 0.0));
    }
  }
}

TEST_CASE("fit_depth_pair removes constructed layer violations") {
  const HeadScene s = small_scene(7);
  DepthMap init[2];
  for (int k = 0; k < 2; ++k) {
    const SceneView& v = s.views[k];
    init[k] = init_depth(v.face_depth, v.masks).depth;
    for (size_t i = 0; i < init[k].size(); ++i) {
      if (v.masks.S_h[i] && v.masks.F[i]) init[k][i] = v.face_depth[i] + 15.0;
    }
    REQUIRE(count_layer_violations(init[k], v.face_depth, v.masks) > 0);
  }
  const DepthFitResult r = fit_depth_pair(view_of(s.views[0]), view_of(s.views[1]), s.camera,
                                          FitConfig(), &init[0], &init[1]);
  CHECK(count_layer_violations(r.depth1, s.views[0].face_depth, s.views[0].masks) == 0);
  CHECK(count_layer_violations(r.depth2, s.views[1].face_depth, s.views[1].masks) == 0);
}

TEST_CASE("fit_depth_single") {
  const HeadScene s = small_scene(8);
  const DepthView v = view_of(s.views[0]);
  const DepthMap init = init_depth(v.face_depth, v.masks).depth;
  const DepthFitResult r = fit_depth_single(v, FitConfig());
  CHECK(face_depth_loss(r.depth1, v.face_depth, v.masks).value <=
        face_depth_loss(init, v.face_depth, v.masks).value + 1e-9);
  CHECK(count_layer_violations(r.depth1, v.face_depth, v.masks) == 0);
  CHECK(r.depth2.empty());

  // Flat d^f: the optimum is harmonic on the hair region.
  DepthView flat = v;
  for (size_t i = 0; i < flat.face_depth.size(); ++i) {
    if (flat.masks.F[i]) flat.face_depth[i] = 1000.0;
  }
  const DepthFitResult fr = fit_depth_single(flat, FitConfig());
  DepthMap known(flat.face_depth.width(), flat.face_depth.height(), kUndefinedDepth);
  for (size_t i = 0; i < known.size(); ++i) {
    if (flat.masks.F[i]) known[i] = fr.depth1[i];
  }
  CHECK(harmonic_residual(fr.depth1, mask_minus(flat.masks.S, flat.masks.F), known) < 1e-3);
}

TEST_CASE("evaluate_reconstruction") {
  const HeadScene s = small_scene(9);
  const SceneView& v = s.views[0];
  const Mask face = v.masks.S_f, nonface = mask_minus(v.masks.S, v.masks.S_f);
  const ReconstructionError same = evaluate_reconstruction(v.depth, v.depth, face, nonface, s.camera);
  CHECK(same.face_mm < 1e-9);
  CHECK(same.nonface_mm < 1e-9);

  DepthMap shifted = v.depth;
  for (auto& d : shifted.data()) d += 3.0;
  const ReconstructionError sh = evaluate_reconstruction(shifted, v.depth, face, nonface, s.camera);
  // +3 mm of depth also scales the lifted X/Y by (Z+3)/Z, which no rigid
  // motion can undo; the residual is that scale times the head extent.
  CHECK(sh.face_mm < 0.5);
  CHECK(sh.nonface_mm < 0.5);

  // A rigid translation of the lifted points is absorbed exactly.
  const Mask all = mask_or(face, nonface);
  const PixelPoints gt = unproject(v.depth, all, s.camera);
  std::vector<bool> is_face;
  for (const auto& px : gt.pixels) is_face.push_back(face.at(px.x(), px.y()) != 0);
  Eigen::Matrix3Xd moved = gt.points;
  moved.row(2).array() += 3.0;
  const ReconstructionError icp = evaluate_reconstruction(moved, gt.points, is_face);
  CHECK(icp.face_mm < 1e-6);
  CHECK(icp.nonface_mm < 1e-6);

  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 5.0);
  DepthMap noisy = v.depth;
  for (auto& d : noisy.data()) d += g(rng);
  const ReconstructionError e = evaluate_reconstruction(noisy, v.depth, face, nonface, s.camera);
  // Brute force with the reported alignment.
  const Mask both = mask_or(face, nonface);
  const PixelPoints p = unproject(noisy, both, s.camera);
  const PixelPoints t = unproject(v.depth, both, s.camera);
  const Eigen::Matrix3Xd aligned = apply_pose(p.points, e.alignment);
  double fs = 0.0, ns = 0.0;
  size_t fn = 0, nn = 0;
  for (size_t i = 0; i < p.pixels.size(); ++i) {
    const double d = (aligned.col(static_cast<Eigen::Index>(i)) - t.points.col(static_cast<Eigen::Index>(i))).norm();
    if (face.at(p.pixels[i].x(), p.pixels[i].y())) {
      fs += d;
      ++fn;
    } else {
      ns += d;
      ++nn;
    }
  }
  CHECK(e.face_count == fn);
  CHECK(e.nonface_count == nn);
  CHECK(std::abs(e.face_mm - fs / fn) < 1e-6);
  CHECK(std::abs(e.nonface_mm - ns / nn) < 1e-6);
}
