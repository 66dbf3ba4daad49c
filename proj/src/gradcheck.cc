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

#include "headforge/gradcheck.h"

#include <algorithm>
#include <chrono>
#include <functional>
#include <cmath>
#include <random>

#include "headforge/scene.h"

namespace headforge {

namespace {

using Clock = std::chrono::steady_clock;

// Up to |n| distinct pixel indices of |region|, in index order.
std::vector<size_t> pick_pixels(const Mask& region, size_t n, std::mt19937_64* rng) {
  std::vector<size_t> all;
  for (size_t i = 0; i < region.size(); ++i) {
    if (region[i]) all.push_back(i);
  }
  std::shuffle(all.begin(), all.end(), *rng);
  if (all.size() > n) all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

struct DepthCoordinate {
  int map;  // 0 or 1
  size_t pixel;
};

// Checks a loss of two depth maps over the listed pixels.
GradientCheck check_depth(
    const std::function<double(const DepthMap&, const DepthMap&)>& loss,
    const DepthMap& d1, const DepthMap& d2, const DepthMap& g1, const DepthMap& g2,
    const std::vector<DepthCoordinate>& coords, const GradcheckOptions& opt) {
  Eigen::VectorXd x(coords.size()), analytic(coords.size());
  for (size_t k = 0; k < coords.size(); ++k) {
    x[k] = (coords[k].map == 0 ? d1 : d2)[coords[k].pixel];
    analytic[k] = (coords[k].map == 0 ? g1 : g2)[coords[k].pixel];
  }
  DepthMap w1 = d1, w2 = d2;
  auto f = [&](const Eigen::VectorXd& v) {
    for (size_t k = 0; k < coords.size(); ++k) {
      (coords[k].map == 0 ? w1 : w2)[coords[k].pixel] = v[k];
    }
    const double value = loss(w1, w2);
    for (size_t k = 0; k < coords.size(); ++k) {
      (coords[k].map == 0 ? w1 : w2)[coords[k].pixel] = x[k];
    }
    return value;
  };
  return check_gradient(f, x, analytic, opt.depth_step, {}, opt.relative_tolerance);
}

std::vector<DepthCoordinate> coordinates(const Mask& region1, const Mask* region2, size_t n,
                                         std::mt19937_64* rng) {
  std::vector<DepthCoordinate> out;
  const size_t n1 = region2 ? n / 2 : n;
  for (size_t i : pick_pixels(region1, n1, rng)) out.push_back({0, i});
  if (region2) {
    for (size_t i : pick_pixels(*region2, n - n1, rng)) out.push_back({1, i});
  }
  return out;
}

}  // namespace

std::vector<LossCheck> run_loss_gradchecks(const GradcheckOptions& opt) {
  SceneSpec spec;
  spec.seed = opt.seed;
  spec.width = spec.height = opt.size;
  spec.n_subdiv = 3;
  const HeadScene scene = synth_scene(spec);
  const SceneView& v1 = scene.views[0];
  const SceneView& v2 = scene.views[1];
  const Camera& cam = scene.camera;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  LossWeights weights;

  std::vector<LossCheck> out;
  auto run = [&](const std::string& name, const std::function<GradientCheck()>& body) {
    const auto t0 = Clock::now();
    LossCheck c;
    c.name = name;
    c.check = body();
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    c.passed = c.check.tested > c.check.excluded &&
               c.check.pass_fraction() >= opt.min_pass_fraction &&
               c.check.excluded_fraction() <= opt.max_excluded_fraction;
    out.push_back(c);
  };

  // Perturbed depth maps: ground truth plus 2 mm noise on S.
  auto perturb = [&](const DepthMap& d) {
    DepthMap p = d;
    for (double& z : p.data()) {
      if (is_defined(z)) z += 2.0 * normal(rng);
    }
    return p;
  };
  const DepthMap d1 = perturb(v1.depth), d2 = perturb(v2.depth);
  const Mask sh_f1 = mask_and(v1.masks.S_h, v1.masks.F);
  const Mask f_not_sh1 = mask_minus(v1.masks.F, v1.masks.S_h);

  run("photometric_loss", [&] {
    // Dyadic values with a dyadic step keep every probe exact in float.
    Image rendered = v1.image;
    for (auto& px : rendered.data()) {
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<float>(std::round((px[c] + 0.05 * normal(rng)) * 65536.0) / 65536.0);
      }
    }
    const Mask region = v1.masks.S_f;
    const ImageLoss loss = photometric_loss(v1.image, rendered, region);
    const std::vector<size_t> pixels = pick_pixels(region, opt.max_coordinates / 3, &rng);
    Eigen::VectorXd x(3 * pixels.size()), analytic(3 * pixels.size());
    for (size_t k = 0; k < pixels.size(); ++k) {
      for (int c = 0; c < 3; ++c) {
        x[3 * k + c] = rendered[pixels[k]][c];
        analytic[3 * k + c] = loss.gradient[pixels[k]][c];
      }
    }
    Image work = rendered;
    auto f = [&](const Eigen::VectorXd& v) {
      for (size_t k = 0; k < pixels.size(); ++k) {
        for (int c = 0; c < 3; ++c) work[pixels[k]][c] = static_cast<float>(v[3 * k + c]);
      }
      return photometric_loss(v1.image, work, region).value;
    };
    return check_gradient(f, x, analytic, 1.0 / 16384.0, {}, opt.relative_tolerance);
  });

  run("landmark_loss", [&] {
    std::vector<Eigen::Vector2d> projected;
    for (const Landmark& l : v1.landmarks) {
      projected.push_back(l.observed + Eigen::Vector2d(normal(rng), normal(rng)));
    }
    const LandmarkLoss loss = landmark_loss(projected, v1.landmarks);
    Eigen::VectorXd x(2 * projected.size()), analytic(2 * projected.size());
    for (size_t k = 0; k < projected.size(); ++k) {
      x.segment<2>(2 * k) = projected[k];
      analytic.segment<2>(2 * k) = loss.gradient[k];
    }
    auto f = [&](const Eigen::VectorXd& v) {
      std::vector<Eigen::Vector2d> p(projected.size());
      for (size_t k = 0; k < p.size(); ++k) p[k] = v.segment<2>(2 * k);
      return landmark_loss(p, v1.landmarks).value;
    };
    return check_gradient(f, x, analytic, opt.parameter_step, {}, opt.relative_tolerance);
  });

  const MorphableModel& model = scene.model;
  const int ki = model.k_id(), ke = model.k_exp();
  run("coef_regularization", [&] {
    const RegularizationLoss loss = coef_regularization(scene.coefficients, model.coeff_scales, weights);
    Eigen::VectorXd x(ki + ke + model.k_tex()), analytic(x.size());
    x << scene.coefficients.alpha, scene.coefficients.beta, scene.coefficients.delta;
    analytic << loss.gradient.alpha, loss.gradient.beta, loss.gradient.delta;
    auto f = [&](const Eigen::VectorXd& v) {
      FaceCoefficients c;
      c.alpha = v.segment(0, ki);
      c.beta = v.segment(ki, ke);
      c.delta = v.segment(ki + ke, model.k_tex());
      return coef_regularization(c, model.coeff_scales, weights).value;
    };
    return check_gradient(f, x, analytic, opt.parameter_step, {}, opt.relative_tolerance);
  });

  run("face_energy", [&] {
    FaceParameters p{scene.coefficients, v1.pose, scene.lighting};
    const Eigen::VectorXd s = model.coeff_scales.cast<double>();
    int o = 0;
    for (Eigen::VectorXd* c : {&p.coefficients.alpha, &p.coefficients.beta, &p.coefficients.delta}) {
      for (Eigen::Index i = 0; i < c->size(); ++i) (*c)[i] += 0.2 * s[o++] * normal(rng);
    }
    p.pose.translation += Eigen::Vector3d(normal(rng), normal(rng), normal(rng)) * 2.0;
    p.lighting.gamma += 0.02 * ShVector::NullaryExpr([&] { return normal(rng); });
    const FaceObservation obs{v1.image, v1.masks.S_f, v1.landmarks, cam};
    const FaceRender render = render_face(model, p.coefficients, p.pose, p.lighting, cam);
    const FaceEnergy e = face_energy(model, p, obs, weights, render.raster);
    auto f = [&](const Eigen::VectorXd& v) {
      return face_energy(model, FaceParameters::from_vector(v, model), obs, weights, render.raster).value;
    };
    return check_gradient(f, p.to_vector(), e.gradient, opt.parameter_step, {}, opt.relative_tolerance);
  });

  const size_t n = opt.max_coordinates;
  run("color_constancy_loss", [&] {
    const PairLoss l = color_constancy_loss(v1.image, v2.image, d1, d2, v1.pose, v2.pose, cam,
                                            v1.masks.H, v2.masks.H);
    return check_depth(
        [&](const DepthMap& a, const DepthMap& b) {
          return color_constancy_loss(v1.image, v2.image, a, b, v1.pose, v2.pose, cam, v1.masks.H,
                                      v2.masks.H).value;
        },
        d1, d2, l.gradient1, l.gradient2, coordinates(v1.masks.H, &v2.masks.H, n, &rng), opt);
  });

  run("gradient_loss", [&] {
    const PairLoss l = gradient_loss(v1.image, v2.image, d1, d2, v1.pose, v2.pose, cam, v1.masks.H,
                                     v2.masks.H);
    return check_depth(
        [&](const DepthMap& a, const DepthMap& b) {
          return gradient_loss(v1.image, v2.image, a, b, v1.pose, v2.pose, cam, v1.masks.H,
                               v2.masks.H).value;
        },
        d1, d2, l.gradient1, l.gradient2, coordinates(v1.masks.H, &v2.masks.H, n, &rng), opt);
  });

  run("smoothness_loss", [&] {
    const DepthLoss l = smoothness_loss(d1, v1.masks.S);
    return check_depth(
        [&](const DepthMap& a, const DepthMap&) { return smoothness_loss(a, v1.masks.S).value; },
        d1, d2, l.gradient, l.gradient, coordinates(v1.masks.S, nullptr, n, &rng), opt);
  });

  run("face_depth_loss", [&] {
    const DepthLoss l = face_depth_loss(d1, v1.face_depth, v1.masks);
    return check_depth(
        [&](const DepthMap& a, const DepthMap&) {
          return face_depth_loss(a, v1.face_depth, v1.masks).value;
        },
        d1, d2, l.gradient, l.gradient, coordinates(f_not_sh1, nullptr, n, &rng), opt);
  });

  run("layer_order_loss", [&] {
    // Hair within a few mm of the face so both sides of the hinge occur.
    DepthMap d = d1;
    for (size_t i = 0; i < d.size(); ++i) {
      if (sh_f1[i]) d[i] = v1.face_depth[i] + 3.0 * normal(rng);
    }
    const DepthLoss l = layer_order_loss(d, v1.face_depth, v1.masks);
    return check_depth(
        [&](const DepthMap& a, const DepthMap&) {
          return layer_order_loss(a, v1.face_depth, v1.masks).value;
        },
        d, d2, l.gradient, l.gradient, coordinates(sh_f1, nullptr, n, &rng), opt);
  });

  run("depth_energy", [&] {
    const DepthView a{v1.image, v1.masks, v1.face_depth, v1.pose};
    const DepthView b{v2.image, v2.masks, v2.face_depth, v2.pose};
    const DepthEnergy e = depth_energy(d1, d2, a, b, cam, weights);
    return check_depth(
        [&](const DepthMap& x, const DepthMap& y) {
          return depth_energy(x, y, a, b, cam, weights).value;
        },
        d1, d2, e.gradient1, e.gradient2, coordinates(v1.masks.S, &v2.masks.S, n, &rng), opt);
  });

  return out;
}

}  // namespace headforge
