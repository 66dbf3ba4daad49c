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

#include "headforge/losses.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "headforge/error.h"

namespace headforge {

namespace {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_finite_nonnegative(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be finite and >= 0");
  }
}

// d pixel / d point for the pinhole projection.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p,
                                                double focal) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << focal * iz, 0.0, -focal * p.x() * iz * iz,
       0.0, focal * iz, -focal * p.y() * iz * iz;
  return j;
}

// (b - a) x (p - a).
inline double edge2(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

Eigen::Vector2d project_continuous(const Eigen::Vector3d& p, const Camera& camera) {
  return {camera.focal * p.x() / p.z() + camera.principal_point.x(),
          camera.focal * p.y() / p.z() + camera.principal_point.y()};
}

// One direction of the sampling-form consistency terms. |sources| and
// |targets| are matching feature images (pixel (i, j) at index (i, j));
// sources are read at the pixel, targets bilinearly at the landing.
struct Direction {
  double mean = 0.0;
  size_t count = 0;
};

Direction sample_direction(const std::vector<const Image*>& sources,
                           const std::vector<const Image*>& targets,
                           const DepthMap& depth, const Mask& region,
                           const Pose& relative, const Camera& camera,
                           DepthMap* gradient) {
  const Eigen::Matrix3d r = relative.rotation();
  const int sw = sources[0]->width(), sh = sources[0]->height();
  std::vector<double> terms;
  std::vector<std::pair<size_t, double>> slopes;
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) {
      if (!region.at(x, y)) continue;
      const double d = depth.at(x, y);
      if (!is_defined(d)) {
        throw Error(ErrorCode::kUndefinedDepth, "depth undefined inside the warp region");
      }
      const Eigen::Vector3d ray = camera.pixel_ray(x, y);
      const Eigen::Vector3d moved = r * (d * ray) + relative.translation;
      if (!(moved.z() > kNearPlane)) continue;
      const Eigen::Vector2d q = project_continuous(moved, camera) - Eigen::Vector2d(0.5, 0.5);
      double term = 0.0;
      Eigen::RowVector2d dq = Eigen::RowVector2d::Zero();
      bool valid = true;
      for (size_t k = 0; k < sources.size() && valid; ++k) {
        const BilinearSample s = sample_bilinear(*targets[k], q);
        if (!s.valid) {
          valid = false;
          break;
        }
        const Eigen::Vector3d res = sources[k]->at(x, y).cast<double>() - s.value;
        term += res.cwiseAbs().sum();
        for (int c = 0; c < 3; ++c) dq -= sign(res[c]) * s.gradient.row(c);
      }
      if (!valid) continue;
      terms.push_back(term);
      const double slope = dq * projection_jacobian(moved, camera.focal) * (r * ray);
      slopes.emplace_back(depth.index(x, y), slope);
    }
  }
  Direction out;
  out.count = terms.size();
  if (out.count == 0) return out;
  out.mean = pairwise_sum(terms) / static_cast<double>(out.count);
  const double inv = 1.0 / static_cast<double>(out.count);
  for (const auto& [i, s] : slopes) (*gradient)[i] = s * inv;
  return out;
}

void check_pair_inputs(const Image& image1, const Image& image2,
                       const DepthMap& depth1, const DepthMap& depth2,
                       const Camera& camera, const Mask& region1,
                       const Mask& region2) {
  camera.validate();
  if (!image1.same_shape(camera.width, camera.height)) {
    throw Error(ErrorCode::kDimension, "image size differs from the camera");
  }
  require_same_shape(image1, image2, "pair loss images");
  require_same_shape(image1, depth1, "pair loss depth1");
  require_same_shape(image2, depth2, "pair loss depth2");
  require_same_shape(image1, region1, "pair loss region1");
  require_same_shape(image2, region2, "pair loss region2");
}

PairLoss combine(const Direction& a, const Direction& b, DepthMap g1, DepthMap g2) {
  PairLoss out;
  out.count1 = a.count;
  out.count2 = b.count;
  const int n = (a.count > 0) + (b.count > 0);
  if (n == 0) {
    throw Error(ErrorCode::kEmptyRegion, "no valid landings in either direction");
  }
  out.value = (a.mean + b.mean) / n;
  if (n == 2) {
    for (auto& v : g1.data()) v *= 0.5;
    for (auto& v : g2.data()) v *= 0.5;
  }
  out.gradient1 = std::move(g1);
  out.gradient2 = std::move(g2);
  return out;
}

Mask interior_of_last_row_col(const Mask& region) {
  Mask out(region.width() - 1, region.height() - 1, 0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) out.at(x, y) = region.at(x, y);
  }
  return out;
}

DepthLoss mean_abs_face(const DepthMap& depth, const DepthMap& face_depth,
                        const RegionMasks& masks, bool hinge) {
  require_same_shape(depth, masks.S, "depth vs masks");
  require_same_shape(face_depth, masks.S, "face depth vs masks");
  DepthLoss out;
  out.gradient = DepthMap(depth.width(), depth.height(), 0.0);
  std::vector<double> terms;
  std::vector<std::pair<size_t, double>> slopes;
  for (size_t i = 0; i < depth.size(); ++i) {
    if (!masks.F[i]) continue;
    const bool hair = masks.S_h[i] != 0;
    if (hinge != hair) continue;
    if (!is_defined(depth[i]) || !is_defined(face_depth[i])) {
      throw Error(ErrorCode::kUndefinedDepth, "depth undefined inside the face region");
    }
    const double diff = depth[i] - face_depth[i];
    if (hinge) {
      terms.push_back(std::max(0.0, diff));
      slopes.emplace_back(i, diff > 0.0 ? 1.0 : 0.0);
    } else {
      terms.push_back(std::abs(diff));
      slopes.emplace_back(i, sign(diff));
    }
  }
  out.count = terms.size();
  if (out.count == 0) {
    out.empty_region = true;
    return out;
  }
  out.value = pairwise_sum(terms) / static_cast<double>(out.count);
  for (const auto& [i, s] : slopes) out.gradient[i] = s / static_cast<double>(out.count);
  return out;
}

DepthLoss smoothness_impl(const DepthMap& depth, const Mask& region) {
  require_same_shape(depth, region, "smoothness_loss");
  const int w = depth.width(), h = depth.height();
  DepthLoss out;
  out.gradient = DepthMap(w, h, 0.0);
  std::vector<double> terms;
  std::vector<std::pair<size_t, double>> slopes;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!region.at(x, y) || !region.at(x - 1, y) || !region.at(x + 1, y) ||
          !region.at(x, y - 1) || !region.at(x, y + 1)) {
        continue;
      }
      const double lap = depth.at(x - 1, y) + depth.at(x + 1, y) + depth.at(x, y - 1) +
                         depth.at(x, y + 1) - 4.0 * depth.at(x, y);
      if (!std::isfinite(lap)) {
        throw Error(ErrorCode::kUndefinedDepth, "depth undefined inside the smoothness region");
      }
      terms.push_back(std::abs(lap));
      slopes.emplace_back(depth.index(x, y), sign(lap));
    }
  }
  out.count = terms.size();
  if (out.count == 0) {
    out.empty_region = true;
    return out;
  }
  out.value = pairwise_sum(terms) / static_cast<double>(out.count);
  const double inv = 1.0 / static_cast<double>(out.count);
  for (const auto& [i, s] : slopes) {
    const double g = s * inv;
    out.gradient[i] -= 4.0 * g;
    out.gradient[i - 1] += g;
    out.gradient[i + 1] += g;
    out.gradient[i - w] += g;
    out.gradient[i + w] += g;
  }
  return out;
}

}  // namespace

void LossWeights::validate() const {
  require_finite_nonnegative(w_photo, "w_photo");
  require_finite_nonnegative(w_lmk, "w_lmk");
  require_finite_nonnegative(w_reg_id, "w_reg_id");
  require_finite_nonnegative(w_reg_exp, "w_reg_exp");
  require_finite_nonnegative(w_reg_tex, "w_reg_tex");
  require_finite_nonnegative(w_color, "w_color");
  require_finite_nonnegative(w_grad, "w_grad");
  require_finite_nonnegative(w_smooth, "w_smooth");
  require_finite_nonnegative(w_face, "w_face");
  require_finite_nonnegative(w_layer, "w_layer");
}

namespace {

template <typename F>
void for_each_weight(LossWeights* w, F&& f) {
  f("w_photo", &w->w_photo);
  f("w_lmk", &w->w_lmk);
  f("w_reg_id", &w->w_reg_id);
  f("w_reg_exp", &w->w_reg_exp);
  f("w_reg_tex", &w->w_reg_tex);
  f("w_color", &w->w_color);
  f("w_grad", &w->w_grad);
  f("w_smooth", &w->w_smooth);
  f("w_face", &w->w_face);
  f("w_layer", &w->w_layer);
}

}  // namespace

void LossWeights::apply(KeyValues* values) {
  for_each_weight(this, [&](const char* key, double* field) {
    auto it = values->find(key);
    if (it == values->end()) return;
    *field = parse_double(it->second, key);
    values->erase(it);
  });
  validate();
}

KeyValues LossWeights::to_key_values() const {
  KeyValues out;
  LossWeights copy = *this;
  for_each_weight(&copy, [&](const char* key, double* field) { out[key] = format_double(*field); });
  return out;
}

ImageLoss photometric_loss(const Image& observed, const Image& rendered,
                           const Mask& region) {
  require_same_shape(observed, rendered, "photometric_loss");
  require_same_shape(observed, region, "photometric_loss region");
  ImageLoss out;
  out.gradient = Grid<Eigen::Vector3d>(observed.width(), observed.height(),
                                       Eigen::Vector3d::Zero());
  std::vector<double> terms;
  for (size_t i = 0; i < observed.size(); ++i) {
    if (!region[i]) continue;
    const Eigen::Vector3d r = observed[i].cast<double>() - rendered[i].cast<double>();
    const double n = r.norm();
    terms.push_back(n);
    if (n > 0.0) out.gradient[i] = -r / n;
  }
  out.count = terms.size();
  if (out.count == 0) throw Error(ErrorCode::kEmptyRegion, "photometric_loss: empty region");
  out.value = pairwise_sum(terms) / static_cast<double>(out.count);
  for (auto& g : out.gradient.data()) g /= static_cast<double>(out.count);
  return out;
}

LandmarkLoss landmark_loss(const std::vector<Eigen::Vector2d>& projected,
                           const LandmarkSet& landmarks) {
  if (landmarks.empty()) throw Error(ErrorCode::kEmptyRegion, "landmark_loss: no landmarks");
  if (projected.size() != landmarks.size()) {
    throw Error(ErrorCode::kDimension, "landmark_loss: projection count mismatch");
  }
  LandmarkLoss out;
  out.gradient.resize(projected.size());
  std::vector<double> terms(projected.size());
  const double inv = 1.0 / static_cast<double>(projected.size());
  for (size_t i = 0; i < projected.size(); ++i) {
    const Eigen::Vector2d r = projected[i] - landmarks[i].observed;
    terms[i] = landmarks[i].weight * r.squaredNorm();
    out.gradient[i] = 2.0 * landmarks[i].weight * inv * r;
  }
  out.value = pairwise_sum(terms) * inv;
  return out;
}

RegularizationLoss coef_regularization(const FaceCoefficients& c,
                                       const Eigen::VectorXf& coeff_scales,
                                       const LossWeights& weights) {
  const Eigen::Index ki = c.alpha.size(), ke = c.beta.size(), kt = c.delta.size();
  if (coeff_scales.size() != ki + ke + kt) {
    throw Error(ErrorCode::kDimension, "coef_regularization: scale count mismatch");
  }
  const Eigen::VectorXd s = coeff_scales.cast<double>();
  const Eigen::VectorXd si = s.head(ki), se = s.segment(ki, ke), st = s.tail(kt);
  RegularizationLoss out;
  out.id = c.alpha.cwiseQuotient(si).squaredNorm();
  out.exp = c.beta.cwiseQuotient(se).squaredNorm();
  out.tex = c.delta.cwiseQuotient(st).squaredNorm();
  out.value = weights.w_reg_id * out.id + weights.w_reg_exp * out.exp + weights.w_reg_tex * out.tex;
  out.gradient.alpha = 2.0 * weights.w_reg_id * c.alpha.cwiseQuotient(si.cwiseAbs2());
  out.gradient.beta = 2.0 * weights.w_reg_exp * c.beta.cwiseQuotient(se.cwiseAbs2());
  out.gradient.delta = 2.0 * weights.w_reg_tex * c.delta.cwiseQuotient(st.cwiseAbs2());
  return out;
}

Eigen::VectorXd FaceParameters::to_vector() const {
  const Eigen::Index ki = coefficients.alpha.size(), ke = coefficients.beta.size(),
                     kt = coefficients.delta.size();
  Eigen::VectorXd v(ki + ke + kt + 16);
  v << coefficients.alpha, coefficients.beta, coefficients.delta, pose.quaternion,
      pose.translation, lighting.gamma;
  return v;
}

FaceParameters FaceParameters::from_vector(const Eigen::VectorXd& v,
                                           const MorphableModel& model) {
  const int ki = model.k_id(), ke = model.k_exp(), kt = model.k_tex();
  if (v.size() != ki + ke + kt + 16) {
    throw Error(ErrorCode::kDimension, "face parameter vector has the wrong length");
  }
  FaceParameters p;
  p.coefficients.alpha = v.segment(0, ki);
  p.coefficients.beta = v.segment(ki, ke);
  p.coefficients.delta = v.segment(ki + ke, kt);
  p.pose.quaternion = v.segment<4>(ki + ke + kt);
  p.pose.translation = v.segment<3>(ki + ke + kt + 4);
  p.lighting.gamma = v.segment<9>(ki + ke + kt + 7);
  return p;
}

FaceEnergy face_energy(const MorphableModel& model,
                       const FaceParameters& params,
                       const FaceObservation& obs, const LossWeights& weights,
                       const RasterOutput& frozen) {
  weights.validate();
  obs.camera.validate();
  if (!obs.image.same_shape(obs.camera.width, obs.camera.height)) {
    throw Error(ErrorCode::kDimension, "face_energy: image size differs from the camera");
  }
  require_same_shape(obs.image, obs.segmented_face, "face_energy segmentation");
  require_same_shape(obs.image, frozen.coverage, "face_energy raster");
  const int n = model.n_vertices;
  const int ki = model.k_id(), ke = model.k_exp(), kt = model.k_tex();

  const Eigen::Matrix3Xd shape =
      evaluate_shape(model, params.coefficients.alpha, params.coefficients.beta);
  const Eigen::Matrix3Xd albedo = evaluate_texture(model, params.coefficients.delta);
  const Eigen::Matrix3d rot = params.pose.rotation();
  Eigen::Matrix3Xd posed = rot * shape;
  posed.colwise() += params.pose.translation;

  // Unnormalized vertex normals and shading.
  Eigen::Matrix3Xd normal_sum = Eigen::Matrix3Xd::Zero(3, n);
  for (const Triangle& t : model.triangles) {
    const Eigen::Vector3d a = posed.col(t[0]);
    const Eigen::Vector3d c = (posed.col(t[1]) - a).cross(posed.col(t[2]) - a);
    for (auto i : t) normal_sum.col(i) += c;
  }
  Eigen::Matrix3Xd normals = Eigen::Matrix3Xd::Zero(3, n);
  Eigen::VectorXd irradiance = Eigen::VectorXd::Zero(n);
  Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::Zero(3, n);
  Eigen::Matrix3Xd linear = Eigen::Matrix3Xd::Zero(3, n);
  for (int i = 0; i < n; ++i) {
    const double len = normal_sum.col(i).norm();
    if (!(len > 0.0)) continue;
    normals.col(i) = normal_sum.col(i) / len;
    irradiance[i] = params.lighting.gamma.dot(sh_basis(normals.col(i)));
    linear.col(i) = albedo.col(i) * irradiance[i];
    colors.col(i) = linear.col(i).cwiseMax(0.0).cwiseMin(1.0);
  }

  FaceEnergy out;
  Eigen::Matrix3Xd g_pos = Eigen::Matrix3Xd::Zero(3, n);
  Eigen::Matrix3Xd g_col = Eigen::Matrix3Xd::Zero(3, n);

  // Photometric term.
  if (weights.w_photo > 0.0) {
    std::vector<double> terms;
    std::vector<std::pair<size_t, Eigen::Vector3d>> residual_dirs;
    std::vector<Eigen::Vector3d> dx_list;
    for (int y = 0; y < obs.image.height(); ++y) {
      for (int x = 0; x < obs.image.width(); ++x) {
        const size_t pi = obs.image.index(x, y);
        if (!frozen.coverage[pi] || !obs.segmented_face[pi]) continue;
        const int tri = frozen.triangle[pi];
        if (tri < 0 || static_cast<size_t>(tri) >= model.triangles.size()) {
          throw Error(ErrorCode::kInvalidArgument, "frozen raster does not match the model");
        }
        const Triangle& t = model.triangles[tri];
        // Barycentrics of the pixel centre in the current projection of the
        // frozen triangle, perspective-corrected.
        Eigen::Vector3d z;
        Eigen::Vector2d u[3];
        bool in_front = true;
        for (int k = 0; k < 3; ++k) {
          z[k] = posed(2, t[k]);
          in_front = in_front && z[k] > kNearPlane;
          if (in_front) u[k] = project_continuous(posed.col(t[k]), obs.camera);
        }
        if (!in_front) continue;
        const Eigen::Vector2d centre(x + 0.5, y + 0.5);
        const double area = edge2(u[0], u[1], u[2]);
        if (!(std::abs(area) > 1e-12)) continue;
        const Eigen::Vector3d lambda(edge2(u[1], u[2], centre) / area,
                                     edge2(u[2], u[0], centre) / area,
                                     edge2(u[0], u[1], centre) / area);
        const Eigen::Vector3d wz = lambda.cwiseQuotient(z);
        const double wsum = wz.sum();
        if (!(wsum > 0.0)) continue;
        const Eigen::Vector3d b = wz / wsum;
        const Eigen::Vector3d model_color =
            b[0] * colors.col(t[0]) + b[1] * colors.col(t[1]) + b[2] * colors.col(t[2]);
        const Eigen::Vector3d r = obs.image[pi].cast<double>() - model_color;
        const double e = r.norm();
        terms.push_back(e);
        if (!(e > 0.0)) continue;
        const Eigen::Vector3d g_m = -r / e;
        Eigen::Vector3d g_b;
        for (int k = 0; k < 3; ++k) {
          g_col.col(t[k]) += b[k] * g_m;
          g_b[k] = g_m.dot(colors.col(t[k]));
        }
        const Eigen::Vector3d g_w = (g_b.array() - g_b.dot(b)).matrix() / wsum;
        const Eigen::Vector3d g_lambda = g_w.cwiseQuotient(z);
        const Eigen::Vector3d g_z = -g_w.cwiseProduct(lambda).cwiseQuotient(z.cwiseProduct(z));
        // lambda_k = E_k / area with E_k = edge(u[k+1], u[k+2], centre).
        Eigen::Vector2d g_u[3] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(),
                                  Eigen::Vector2d::Zero()};
        for (int k = 0; k < 3; ++k) {
          const int k1 = (k + 1) % 3, k2 = (k + 2) % 3;
          const double g_e = g_lambda[k] / area;
          g_u[k1] += g_e * Eigen::Vector2d(u[k2].y() - centre.y(), centre.x() - u[k2].x());
          g_u[k2] += g_e * Eigen::Vector2d(centre.y() - u[k1].y(), u[k1].x() - centre.x());
        }
        const double g_area = -g_lambda.dot(lambda) / area;
        g_u[0] += g_area * Eigen::Vector2d(u[1].y() - u[2].y(), u[2].x() - u[1].x());
        g_u[1] += g_area * Eigen::Vector2d(u[2].y() - u[0].y(), u[0].x() - u[2].x());
        g_u[2] += g_area * Eigen::Vector2d(u[0].y() - u[1].y(), u[1].x() - u[0].x());
        for (int k = 0; k < 3; ++k) {
          Eigen::Vector3d g = (g_u[k].transpose() *
                               projection_jacobian(posed.col(t[k]), obs.camera.focal))
                                  .transpose();
          g.z() += g_z[k];
          g_pos.col(t[k]) += g;
        }
      }
    }
    out.photo_pixels = terms.size();
    if (out.photo_pixels == 0) {
      throw Error(ErrorCode::kEmptyRegion, "face_energy: no rendered face pixel inside S_f");
    }
    out.terms.photo = pairwise_sum(terms) / static_cast<double>(out.photo_pixels);
    const double scale = weights.w_photo / static_cast<double>(out.photo_pixels);
    g_pos *= scale;
    g_col *= scale;
  }

  // Landmarks.
  if (!obs.landmarks.empty()) {
    std::vector<Eigen::Vector2d> projected(obs.landmarks.size());
    for (size_t i = 0; i < obs.landmarks.size(); ++i) {
      const auto v = obs.landmarks[i].vertex;
      if (v >= static_cast<std::uint32_t>(n)) {
        throw Error(ErrorCode::kInvalidArgument, "landmark vertex out of range");
      }
      const Eigen::Vector3d p = posed.col(v);
      if (!(p.z() > kNearPlane)) {
        throw Error(ErrorCode::kBehindCamera, "landmark vertex behind the camera");
      }
      projected[i] = project_continuous(p, obs.camera);
    }
    const LandmarkLoss lmk = landmark_loss(projected, obs.landmarks);
    out.terms.lmk = lmk.value;
    if (weights.w_lmk > 0.0) {
      for (size_t i = 0; i < obs.landmarks.size(); ++i) {
        const auto v = obs.landmarks[i].vertex;
        g_pos.col(v) += weights.w_lmk * (lmk.gradient[i].transpose() *
                                         projection_jacobian(posed.col(v), obs.camera.focal))
                                            .transpose();
      }
    }
  }

  // Back through shading to albedo, lighting and normals.
  Eigen::Matrix3Xd g_albedo = Eigen::Matrix3Xd::Zero(3, n);
  ShVector g_gamma = ShVector::Zero();
  Eigen::Matrix3Xd g_normal_sum = Eigen::Matrix3Xd::Zero(3, n);
  for (int i = 0; i < n; ++i) {
    const double len = normal_sum.col(i).norm();
    if (!(len > 0.0)) continue;
    double g_irr = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double lin = linear(c, i);
      if (!(lin > 0.0 && lin < 1.0)) continue;
      g_albedo(c, i) = g_col(c, i) * irradiance[i];
      g_irr += g_col(c, i) * albedo(c, i);
    }
    if (g_irr == 0.0) continue;
    const Eigen::Vector3d nrm = normals.col(i);
    g_gamma += g_irr * sh_basis(nrm);
    const Eigen::Vector3d g_n =
        g_irr * (sh_basis_jacobian(nrm).transpose() * params.lighting.gamma);
    g_normal_sum.col(i) = (g_n - nrm * nrm.dot(g_n)) / len;
  }
  for (const Triangle& t : model.triangles) {
    const Eigen::Vector3d g = g_normal_sum.col(t[0]) + g_normal_sum.col(t[1]) + g_normal_sum.col(t[2]);
    if (g.isZero(0.0)) continue;
    const Eigen::Vector3d e1 = posed.col(t[1]) - posed.col(t[0]);
    const Eigen::Vector3d e2 = posed.col(t[2]) - posed.col(t[0]);
    const Eigen::Vector3d g1 = e2.cross(g);
    const Eigen::Vector3d g2 = g.cross(e1);
    g_pos.col(t[0]) -= g1 + g2;
    g_pos.col(t[1]) += g1;
    g_pos.col(t[2]) += g2;
  }

  // Back through the pose.
  const Eigen::Matrix3Xd g_shape = rot.transpose() * g_pos;
  const Eigen::Vector3d g_t = g_pos.rowwise().sum();
  const Eigen::Matrix3d m = g_pos * shape.transpose();
  Eigen::Matrix3d d_rot[4];
  quaternion_matrix_derivatives(params.pose.quaternion, d_rot);
  Eigen::Vector4d g_q;
  for (int k = 0; k < 4; ++k) g_q[k] = m.cwiseProduct(d_rot[k]).sum();

  const Eigen::Map<const Eigen::VectorXd> g_shape_flat(g_shape.data(), 3 * n);
  const Eigen::Map<const Eigen::VectorXd> g_albedo_flat(g_albedo.data(), 3 * n);
  const RegularizationLoss reg =
      coef_regularization(params.coefficients, model.coeff_scales, weights);
  out.terms.reg_id = reg.id;
  out.terms.reg_exp = reg.exp;
  out.terms.reg_tex = reg.tex;

  out.gradient.resize(ki + ke + kt + 16);
  out.gradient.segment(0, ki) =
      model.basis_id.transpose().cast<double>() * g_shape_flat + reg.gradient.alpha;
  out.gradient.segment(ki, ke) =
      model.basis_exp.transpose().cast<double>() * g_shape_flat + reg.gradient.beta;
  out.gradient.segment(ki + ke, kt) =
      model.basis_tex.transpose().cast<double>() * g_albedo_flat + reg.gradient.delta;
  out.gradient.segment<4>(ki + ke + kt) = g_q;
  out.gradient.segment<3>(ki + ke + kt + 4) = g_t;
  out.gradient.segment<9>(ki + ke + kt + 7) = g_gamma;

  out.value = weights.w_photo * out.terms.photo + weights.w_lmk * out.terms.lmk + reg.value;
  if (!std::isfinite(out.value)) {
    throw Error(ErrorCode::kNonFinite, "face_energy is not finite");
  }
  return out;
}

FaceEnergy face_energy(const MorphableModel& model,
                       const FaceParameters& params,
                       const FaceObservation& observation,
                       const LossWeights& weights) {
  const FaceRender render = render_face(model, params.coefficients, params.pose,
                                        params.lighting, observation.camera);
  return face_energy(model, params, observation, weights, render.raster);
}

void forward_differences(const Image& image, Image* dx, Image* dy) {
  const int w = image.width(), h = image.height();
  if (w < 2 || h < 2) throw Error(ErrorCode::kDimension, "image too small for gradients");
  *dx = Image(w - 1, h - 1);
  *dy = Image(w - 1, h - 1);
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      dx->at(x, y) = image.at(x + 1, y) - image.at(x, y);
      dy->at(x, y) = image.at(x, y + 1) - image.at(x, y);
    }
  }
}

PairLoss color_constancy_loss(const Image& image1, const Image& image2,
                              const DepthMap& depth1, const DepthMap& depth2,
                              const Pose& pose1, const Pose& pose2,
                              const Camera& camera, const Mask& region1,
                              const Mask& region2) {
  check_pair_inputs(image1, image2, depth1, depth2, camera, region1, region2);
  DepthMap g1(image1.width(), image1.height(), 0.0), g2 = g1;
  const Direction a = sample_direction({&image1}, {&image2}, depth1, region1,
                                       relative_pose(pose1, pose2), camera, &g1);
  const Direction b = sample_direction({&image2}, {&image1}, depth2, region2,
                                       relative_pose(pose2, pose1), camera, &g2);
  return combine(a, b, std::move(g1), std::move(g2));
}

PairLoss gradient_loss(const Image& image1, const Image& image2,
                       const DepthMap& depth1, const DepthMap& depth2,
                       const Pose& pose1, const Pose& pose2,
                       const Camera& camera, const Mask& region1,
                       const Mask& region2) {
  check_pair_inputs(image1, image2, depth1, depth2, camera, region1, region2);
  Image gx1, gy1, gx2, gy2;
  forward_differences(image1, &gx1, &gy1);
  forward_differences(image2, &gx2, &gy2);
  const Mask r1 = interior_of_last_row_col(region1);
  const Mask r2 = interior_of_last_row_col(region2);
  DepthMap g1(image1.width(), image1.height(), 0.0), g2 = g1;
  const Direction a = sample_direction({&gx1, &gy1}, {&gx2, &gy2}, depth1, r1,
                                       relative_pose(pose1, pose2), camera, &g1);
  const Direction b = sample_direction({&gx2, &gy2}, {&gx1, &gy1}, depth2, r2,
                                       relative_pose(pose2, pose1), camera, &g2);
  return combine(a, b, std::move(g1), std::move(g2));
}

DepthLoss smoothness_loss(const DepthMap& depth, const Mask& region) {
  DepthLoss out = smoothness_impl(depth, region);
  if (out.empty_region) {
    throw Error(ErrorCode::kEmptyRegion, "smoothness_loss: no interior pixels");
  }
  return out;
}

DepthLoss face_depth_loss(const DepthMap& depth, const DepthMap& face_depth,
                          const RegionMasks& masks) {
  DepthLoss out = mean_abs_face(depth, face_depth, masks, false);
  if (out.empty_region) {
    throw Error(ErrorCode::kEmptyRegion, "face_depth_loss: empty face region");
  }
  return out;
}

DepthLoss layer_order_loss(const DepthMap& depth, const DepthMap& face_depth,
                           const RegionMasks& masks) {
  return mean_abs_face(depth, face_depth, masks, true);
}

size_t count_layer_violations(const DepthMap& depth,
                              const DepthMap& face_depth,
                              const RegionMasks& masks) {
  require_same_shape(depth, masks.S, "count_layer_violations");
  size_t n = 0;
  for (size_t i = 0; i < depth.size(); ++i) {
    if (masks.S_h[i] && masks.F[i] && depth[i] > face_depth[i]) ++n;
  }
  return n;
}

namespace {

struct ViewTerms {
  DepthLoss smooth, face, layer;
};

ViewTerms view_terms(const DepthMap& depth, const DepthView& view) {
  ViewTerms t;
  t.smooth = smoothness_impl(depth, view.masks.S);
  t.face = mean_abs_face(depth, view.face_depth, view.masks, false);
  t.layer = mean_abs_face(depth, view.face_depth, view.masks, true);
  return t;
}

void accumulate(DepthMap* target, const DepthMap& source, double scale) {
  if (scale == 0.0) return;
  for (size_t i = 0; i < target->size(); ++i) (*target)[i] += scale * source[i];
}

void add_view_terms(const ViewTerms& t, const LossWeights& w, double share,
                    DepthTerms which, DepthEnergy* e, DepthMap* gradient) {
  e->terms.smooth += share * t.smooth.value;
  e->terms.face += share * t.face.value;
  e->terms.layer += share * t.layer.value;
  accumulate(gradient, t.smooth.gradient, share * w.w_smooth);
  if (which == DepthTerms::kAll) {
    accumulate(gradient, t.face.gradient, share * w.w_face);
    accumulate(gradient, t.layer.gradient, share * w.w_layer);
  }
}

}  // namespace

DepthEnergy depth_energy(const DepthMap& depth1, const DepthMap& depth2,
                         const DepthView& view1, const DepthView& view2,
                         const Camera& camera, const LossWeights& weights,
                         DepthTerms which) {
  weights.validate();
  DepthEnergy e;
  e.gradient1 = DepthMap(depth1.width(), depth1.height(), 0.0);
  e.gradient2 = DepthMap(depth2.width(), depth2.height(), 0.0);
  const PairLoss color =
      color_constancy_loss(view1.image, view2.image, depth1, depth2, view1.pose, view2.pose,
                           camera, view1.masks.H, view2.masks.H);
  const PairLoss grad =
      gradient_loss(view1.image, view2.image, depth1, depth2, view1.pose, view2.pose, camera,
                    view1.masks.H, view2.masks.H);
  e.terms.color = color.value;
  e.terms.grad = grad.value;
  accumulate(&e.gradient1, color.gradient1, weights.w_color);
  accumulate(&e.gradient2, color.gradient2, weights.w_color);
  accumulate(&e.gradient1, grad.gradient1, weights.w_grad);
  accumulate(&e.gradient2, grad.gradient2, weights.w_grad);
  add_view_terms(view_terms(depth1, view1), weights, 0.5, which, &e, &e.gradient1);
  add_view_terms(view_terms(depth2, view2), weights, 0.5, which, &e, &e.gradient2);
  e.value = weights.w_color * e.terms.color + weights.w_grad * e.terms.grad +
            weights.w_smooth * e.terms.smooth;
  if (which == DepthTerms::kAll) {
    e.value += weights.w_face * e.terms.face + weights.w_layer * e.terms.layer;
  }
  if (!std::isfinite(e.value)) throw Error(ErrorCode::kNonFinite, "depth_energy is not finite");
  return e;
}

DepthEnergy depth_energy_single(const DepthMap& depth, const DepthView& view,
                                const LossWeights& weights, DepthTerms which) {
  weights.validate();
  DepthEnergy e;
  e.gradient1 = DepthMap(depth.width(), depth.height(), 0.0);
  add_view_terms(view_terms(depth, view), weights, 1.0, which, &e, &e.gradient1);
  e.value = weights.w_smooth * e.terms.smooth;
  if (which == DepthTerms::kAll) {
    e.value += weights.w_face * e.terms.face + weights.w_layer * e.terms.layer;
  }
  if (!std::isfinite(e.value)) throw Error(ErrorCode::kNonFinite, "depth_energy is not finite");
  return e;
}

}  // namespace headforge
