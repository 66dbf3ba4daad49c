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

#include "headforge/fit.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "headforge/error.h"
#include "headforge/harmonic.h"

namespace headforge {

// ---- Configuration.

void FitConfig::validate() const {
  weights.validate();
  if (face_iterations < 1 || depth_iterations < 1) {
    throw Error(ErrorCode::kConfig, "iteration counts must be >= 1");
  }
  for (double v : {lr_coefficients, lr_quaternion, lr_translation, lr_lighting, lr_depth}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::kConfig, "step sizes must be > 0");
  }
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "final_lr_fraction must be in (0, 1]");
  }
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) {
    throw Error(ErrorCode::kConfig, "tolerance must be > 0");
  }
  if (patience < 1) throw Error(ErrorCode::kConfig, "patience must be >= 1");
}

FitConfig FitConfig::from_key_values(KeyValues values) {
  FitConfig c;
  c.weights.apply(&values);
  auto take = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  auto number = [&](const char* key, double* field) {
    if (auto* s = take(key)) *field = parse_double(*s, key);
    values.erase(key);
  };
  auto integer = [&](const char* key, int* field) {
    if (auto* s = take(key)) *field = static_cast<int>(parse_int(*s, key));
    values.erase(key);
  };
  auto boolean = [&](const char* key, bool* field) {
    if (auto* s = take(key)) *field = parse_bool(*s, key);
    values.erase(key);
  };
  integer("face_iterations", &c.face_iterations);
  integer("depth_iterations", &c.depth_iterations);
  number("lr_coefficients", &c.lr_coefficients);
  number("lr_quaternion", &c.lr_quaternion);
  number("lr_translation", &c.lr_translation);
  number("lr_lighting", &c.lr_lighting);
  number("lr_depth", &c.lr_depth);
  number("final_lr_fraction", &c.final_lr_fraction);
  number("tolerance", &c.tolerance);
  integer("patience", &c.patience);
  boolean("coarse_to_fine", &c.coarse_to_fine);
  boolean("condition_on_face_depth", &c.condition_on_face_depth);
  if (auto* s = take("seed")) {
    const long v = parse_int(*s, "seed");
    if (v < 0) throw Error(ErrorCode::kConfig, "seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(v);
  }
  values.erase("seed");
  if (!values.empty()) {
    throw Error(ErrorCode::kConfig, "unknown configuration key: " + values.begin()->first);
  }
  c.validate();
  return c;
}

KeyValues FitConfig::to_key_values() const {
  KeyValues out = weights.to_key_values();
  out["face_iterations"] = std::to_string(face_iterations);
  out["depth_iterations"] = std::to_string(depth_iterations);
  out["lr_coefficients"] = format_double(lr_coefficients);
  out["lr_quaternion"] = format_double(lr_quaternion);
  out["lr_translation"] = format_double(lr_translation);
  out["lr_lighting"] = format_double(lr_lighting);
  out["lr_depth"] = format_double(lr_depth);
  out["final_lr_fraction"] = format_double(final_lr_fraction);
  out["tolerance"] = format_double(tolerance);
  out["patience"] = std::to_string(patience);
  out["coarse_to_fine"] = coarse_to_fine ? "true" : "false";
  out["condition_on_face_depth"] = condition_on_face_depth ? "true" : "false";
  out["seed"] = std::to_string(seed);
  return out;
}

FitConfig load_fit_config(const std::filesystem::path& path) {
  return FitConfig::from_key_values(read_key_values(path));
}

// ---- Optimizer.

Adam::Adam(Eigen::VectorXd base_steps, double beta1, double beta2, double epsilon)
    : base_(std::move(base_steps)),
      m_(Eigen::VectorXd::Zero(base_.size())),
      v_(Eigen::VectorXd::Zero(base_.size())),
      last_steps_(Eigen::VectorXd::Zero(base_.size())),
      beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(Eigen::VectorXd* x, const Eigen::VectorXd& g, double scale) {
  if (g.size() != base_.size() || x->size() != base_.size()) {
    throw Error(ErrorCode::kDimension, "Adam: size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * g;
  v_ = beta2_ * v_ + (1.0 - beta2_) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (Eigen::Index i = 0; i < x->size(); ++i) {
    last_steps_[i] = scale * base_[i] / (std::sqrt(v_[i] / c2) + epsilon_);
    (*x)[i] -= last_steps_[i] * (m_[i] / c1);
  }
}

double cosine_schedule(int it, int total, double final_fraction) {
  if (total <= 1) return 1.0;
  const double phase = std::clamp(static_cast<double>(it) / (total - 1), 0.0, 1.0);
  return final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(M_PI * phase));
}

namespace {

bool stalled(const std::vector<double>& best_history, int patience, double tolerance) {
  const int n = static_cast<int>(best_history.size());
  if (n <= patience) return false;
  const double now = best_history[n - 1];
  const double then = best_history[n - 1 - patience];
  return then - now <= tolerance * std::max(std::abs(now), 1e-12);
}

}  // namespace

// ---- Face stage.

FaceFitResult fit_face(const MorphableModel& model,
                       const FaceObservation& observation,
                       const FitConfig& config, const FaceParameters& init) {
  config.validate();
  model.validate();
  const int ki = model.k_id(), ke = model.k_exp(), kt = model.k_tex();
  const int nc = ki + ke + kt;
  if (init.coefficients.alpha.size() != ki || init.coefficients.beta.size() != ke ||
      init.coefficients.delta.size() != kt) {
    throw Error(ErrorCode::kDimension, "fit_face: initial coefficients do not match the model");
  }
  const Eigen::VectorXd scales = model.coeff_scales.cast<double>();
  constexpr double kMetre = 1000.0;

  auto to_z = [&](const FaceParameters& p) {
    Eigen::VectorXd z = p.to_vector();
    z.head(nc) = z.head(nc).cwiseQuotient(scales);
    z.segment<3>(nc + 4) /= kMetre;
    return z;
  };
  auto from_z = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd v = z;
    v.head(nc) = v.head(nc).cwiseProduct(scales);
    v.segment<3>(nc + 4) *= kMetre;
    return FaceParameters::from_vector(v, model);
  };

  Eigen::VectorXd base(nc + 16);
  base.head(nc).setConstant(config.lr_coefficients);
  base.segment<4>(nc).setConstant(config.lr_quaternion);
  base.segment<3>(nc + 4).setConstant(config.lr_translation);
  base.segment<9>(nc + 7).setConstant(config.lr_lighting);
  Adam adam(base);

  FaceParameters current = init;
  current.pose = current.pose.normalized();
  Eigen::VectorXd z = to_z(current);

  FaceFitResult result;
  result.params = current;
  result.energy = std::numeric_limits<double>::infinity();
  std::vector<double> best_history;
  const int total = config.face_iterations;
  for (int it = 0; it <= total; ++it) {
    FaceEnergy e;
    try {
      e = face_energy(model, current, observation, config.weights);
    } catch (const Error& err) {
      if (it == 0) throw;
      result.aborted = true;
      result.diagnostic = "iteration " + std::to_string(it) + ": " + err.what();
      break;
    }
    result.trace.push_back({it, e.value, e.terms});
    if (e.value < result.energy) {
      result.energy = e.value;
      result.terms = e.terms;
      result.params = current;
      result.best_iteration = it;
    }
    best_history.push_back(result.energy);
    if (it == total || stalled(best_history, config.patience, config.tolerance)) break;

    Eigen::VectorXd g = e.gradient;
    g.head(nc) = g.head(nc).cwiseProduct(scales);
    g.segment<3>(nc + 4) *= kMetre;
    adam.step(&z, g, cosine_schedule(it, total, config.final_lr_fraction));
    if (!z.allFinite()) {
      result.aborted = true;
      result.diagnostic = "iteration " + std::to_string(it) + ": non-finite parameters";
      break;
    }
    current = from_z(z);
    current.pose = current.pose.normalized();
    z.segment<4>(nc) = current.pose.quaternion;
  }
  return result;
}

void save_face_parameters(const FaceParameters& p, const std::filesystem::path& path) {
  KeyValues kv;
  kv["alpha"] = format_doubles(p.coefficients.alpha.data(), p.coefficients.alpha.size());
  kv["beta"] = format_doubles(p.coefficients.beta.data(), p.coefficients.beta.size());
  kv["delta"] = format_doubles(p.coefficients.delta.data(), p.coefficients.delta.size());
  Eigen::Matrix<double, 7, 1> pose;
  pose << p.pose.quaternion, p.pose.translation;
  kv["pose"] = format_doubles(pose.data(), 7);
  kv["gamma"] = format_doubles(p.lighting.gamma.data(), 9);
  write_key_values(kv, path);
}

FaceParameters load_face_parameters(const std::filesystem::path& path,
                                    const MorphableModel& model) {
  const KeyValues kv = read_key_values(path);
  auto get = [&](const char* key, size_t n) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::kConfig, path.string() + ": missing " + key);
    const std::vector<double> v = parse_doubles(it->second, key);
    if (v.size() != n) {
      throw Error(ErrorCode::kDimension, path.string() + ": " + key + " has " +
                                             std::to_string(v.size()) + " values, expected " +
                                             std::to_string(n));
    }
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n)));
  };
  FaceParameters p;
  p.coefficients.alpha = get("alpha", model.k_id());
  p.coefficients.beta = get("beta", model.k_exp());
  p.coefficients.delta = get("delta", model.k_tex());
  const Eigen::VectorXd pose = get("pose", 7);
  p.pose.quaternion = pose.head<4>();
  p.pose.translation = pose.tail<3>();
  p.pose = p.pose.normalized();
  p.lighting.gamma = get("gamma", 9);
  return p;
}

FaceParameters perturb_face_parameters(const FaceParameters& truth, const MorphableModel& model,
                                       std::uint64_t seed, double coefficient_noise,
                                       double rotation_deg, double translation_mm) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  FaceParameters p = truth;
  const Eigen::VectorXf& s = model.coeff_scales;
  Eigen::Index o = 0;
  for (Eigen::VectorXd* c : {&p.coefficients.alpha, &p.coefficients.beta, &p.coefficients.delta}) {
    for (Eigen::Index i = 0; i < c->size(); ++i) (*c)[i] += coefficient_noise * s[o++] * normal(rng);
  }
  auto direction = [&] {
    Eigen::Vector3d d;
    do {
      d = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    } while (!(d.norm() > 1e-9));
    return d.normalized();
  };
  const Eigen::Vector3d axis = direction();
  const Eigen::Vector3d shift = direction();
  p.pose.quaternion = quaternion_multiply(
      quaternion_from_axis_angle(axis, rotation_deg * M_PI / 180.0), p.pose.quaternion);
  p.pose.translation += translation_mm * shift;
  p.pose = p.pose.normalized();
  p.lighting = SHLighting::ambient(0.8);
  return p;
}

void write_face_trace(const std::vector<FaceTraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out << "iteration,photo,lmk,reg_id,reg_exp,reg_tex,energy\n";
  for (const FaceTraceRow& r : trace) {
    out << r.iteration << ',' << format_double(r.terms.photo) << ',' << format_double(r.terms.lmk)
        << ',' << format_double(r.terms.reg_id) << ',' << format_double(r.terms.reg_exp) << ','
        << format_double(r.terms.reg_tex) << ',' << format_double(r.energy) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

void write_depth_trace(const std::vector<DepthTraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out << "iteration,level,color,grad,smooth,face,layer,energy\n";
  for (const DepthTraceRow& r : trace) {
    out << r.iteration << ',' << r.level << ',' << format_double(r.terms.color) << ','
        << format_double(r.terms.grad) << ',' << format_double(r.terms.smooth) << ','
        << format_double(r.terms.face) << ',' << format_double(r.terms.layer) << ','
        << format_double(r.energy) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

// ---- Depth stage.

InitDepthResult init_depth(const DepthMap& face_depth, const RegionMasks& masks) {
  require_same_shape(face_depth, masks.S, "init_depth");
  require_same_shape(masks.F, masks.S, "init_depth F");
  const int w = face_depth.width(), h = face_depth.height();
  DepthMap known(w, h, kUndefinedDepth);
  std::vector<double> values;
  for (size_t i = 0; i < known.size(); ++i) {
    if (!masks.F[i]) continue;
    if (!is_defined(face_depth[i]) || !(face_depth[i] > 0.0)) {
      throw Error(ErrorCode::kUndefinedDepth, "init_depth: d^f undefined inside F");
    }
    known[i] = face_depth[i];
    values.push_back(face_depth[i]);
  }
  if (values.empty()) throw Error(ErrorCode::kEmptyRegion, "init_depth: empty face region");
  std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
  const double median = values[values.size() / 2];

  const Mask unknown = mask_minus(masks.S, masks.F);
  HarmonicResult solved = solve_harmonic(known, unknown, median);
  InitDepthResult out;
  out.depth = DepthMap(w, h, kUndefinedDepth);
  for (size_t i = 0; i < known.size(); ++i) {
    if (!masks.S[i]) continue;
    out.depth[i] = masks.F[i] ? face_depth[i] : solved.values[i];
  }
  out.unanchored = solved.unanchored;
  out.unanchored_components = solved.unanchored_components;
  return out;
}

namespace {

constexpr double kMinDepth = 1.0;  // mm

struct DepthProblem {
  std::vector<DepthView> views;
  Camera camera;
  LossWeights weights;
};

// F restricted to S so that every conditioned pixel is a variable.
DepthView restrict_view(const DepthView& view) {
  DepthView v = view;
  v.masks.validate();
  require_same_shape(v.image, v.masks.S, "depth view image");
  require_same_shape(v.face_depth, v.masks.S, "depth view d^f");
  v.masks.F = mask_and(v.masks.F, v.masks.S);
  compute_hair_region(&v.masks);
  return v;
}

DepthEnergy evaluate(const DepthProblem& p, const std::vector<DepthMap>& d, DepthTerms which) {
  if (p.views.size() == 2) {
    return depth_energy(d[0], d[1], p.views[0], p.views[1], p.camera, p.weights, which);
  }
  return depth_energy_single(d[0], p.views[0], p.weights, which);
}

double full_value(const DepthEnergy& e, const LossWeights& w) {
  return e.value + w.w_face * e.terms.face + w.w_layer * e.terms.layer;
}

struct LevelResult {
  std::vector<DepthMap> depths;
  double energy = std::numeric_limits<double>::infinity();
  DepthEnergyTerms terms;
  double initial_energy = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

LevelResult run_level(const DepthProblem& p, const std::vector<DepthMap>& init,
                      const FitConfig& config, int level,
                      std::vector<DepthTraceRow>* trace) {
  const double share = p.views.size() == 2 ? 0.5 : 1.0;
  // Variables: S pixels of every view.
  struct Var {
    int view;
    size_t pixel;
    double face_depth;
    int kind;  // 0 free, 1 face (soft threshold), 2 hair over face (hinge)
    double prox_weight;
  };
  std::vector<Var> vars;
  for (int v = 0; v < static_cast<int>(p.views.size()); ++v) {
    const RegionMasks& m = p.views[v].masks;
    size_t n_face = 0, n_layer = 0;
    for (size_t i = 0; i < m.S.size(); ++i) {
      if (m.F[i] && m.S_h[i]) ++n_layer;
      else if (m.F[i]) ++n_face;
    }
    for (size_t i = 0; i < m.S.size(); ++i) {
      if (!m.S[i]) continue;
      Var var{v, i, p.views[v].face_depth[i], 0, 0.0};
      if (m.F[i] && m.S_h[i]) {
        var.kind = 2;
        var.prox_weight = share * p.weights.w_layer / static_cast<double>(n_layer);
      } else if (m.F[i]) {
        var.kind = 1;
        var.prox_weight = share * p.weights.w_face / static_cast<double>(n_face);
      }
      if (var.prox_weight == 0.0) var.kind = 0;
      vars.push_back(var);
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(vars.size());
  Eigen::VectorXd x(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double d = init[vars[k].view][vars[k].pixel];
    if (!is_defined(d)) throw Error(ErrorCode::kUndefinedDepth, "initial depth undefined on S");
    x[k] = std::max(d, kMinDepth);
  }
  std::vector<DepthMap> depths = init;
  auto scatter = [&]() {
    for (Eigen::Index k = 0; k < n; ++k) depths[vars[k].view][vars[k].pixel] = x[k];
  };
  scatter();

  Adam adam(Eigen::VectorXd::Constant(n, config.lr_depth));
  LevelResult out;
  out.depths = depths;
  std::vector<double> best_history;
  const int total = config.depth_iterations;
  Eigen::VectorXd g(n);
  for (int it = 0; it <= total; ++it) {
    DepthEnergy e;
    try {
      e = evaluate(p, depths, DepthTerms::kSmoothOnly);
    } catch (const Error& err) {
      if (it == 0) throw;
      out.aborted = true;
      out.diagnostic = "iteration " + std::to_string(it) + ": " + err.what();
      break;
    }
    const double energy = full_value(e, p.weights);
    if (it == 0) out.initial_energy = energy;
    if (trace) trace->push_back({it, level, energy, e.terms});
    if (energy < out.energy) {
      out.energy = energy;
      out.terms = e.terms;
      out.depths = depths;
    }
    best_history.push_back(out.energy);
    if (it == total || stalled(best_history, config.patience, config.tolerance)) break;

    for (Eigen::Index k = 0; k < n; ++k) {
      g[k] = (vars[k].view == 0 ? e.gradient1 : e.gradient2)[vars[k].pixel];
    }
    adam.step(&x, g, cosine_schedule(it, total, config.final_lr_fraction));
    const Eigen::VectorXd& tau = adam.last_steps();
    for (Eigen::Index k = 0; k < n; ++k) {
      const Var& var = vars[k];
      const double thr = tau[k] * var.prox_weight;
      if (var.kind == 1) {
        const double diff = x[k] - var.face_depth;
        x[k] = var.face_depth + (diff > 0 ? 1.0 : -1.0) * std::max(0.0, std::abs(diff) - thr);
      } else if (var.kind == 2) {
        if (x[k] > var.face_depth + thr) {
          x[k] -= thr;
        } else if (x[k] > var.face_depth) {
          x[k] = var.face_depth;
        }
      }
      x[k] = std::max(x[k], kMinDepth);
    }
    if (!x.allFinite()) {
      out.aborted = true;
      out.diagnostic = "iteration " + std::to_string(it) + ": non-finite depth";
      break;
    }
    scatter();
  }
  return out;
}

Image downsample_image(const Image& image) {
  Image out(image.width() / 2, image.height() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out.at(x, y) = 0.25f * (image.at(2 * x, 2 * y) + image.at(2 * x + 1, 2 * y) +
                              image.at(2 * x, 2 * y + 1) + image.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

Mask downsample_mask(const Mask& mask, int needed) {
  Mask out(mask.width() / 2, mask.height() / 2, 0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const int c = (mask.at(2 * x, 2 * y) != 0) + (mask.at(2 * x + 1, 2 * y) != 0) +
                    (mask.at(2 * x, 2 * y + 1) != 0) + (mask.at(2 * x + 1, 2 * y + 1) != 0);
      out.at(x, y) = c >= needed ? 1 : 0;
    }
  }
  return out;
}

DepthMap downsample_depth(const DepthMap& depth, const Mask& mask) {
  DepthMap out(depth.width() / 2, depth.height() / 2, kUndefinedDepth);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!mask.at(x, y)) continue;
      out.at(x, y) = 0.25 * (depth.at(2 * x, 2 * y) + depth.at(2 * x + 1, 2 * y) +
                             depth.at(2 * x, 2 * y + 1) + depth.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

DepthView downsample_view(const DepthView& view) {
  DepthView out;
  out.image = downsample_image(view.image);
  out.masks.S = downsample_mask(view.masks.S, 2);
  out.masks.S_f = mask_and(downsample_mask(view.masks.S_f, 2), out.masks.S);
  out.masks.S_h = mask_and(downsample_mask(view.masks.S_h, 2), out.masks.S);
  out.masks.F = mask_and(downsample_mask(view.masks.F, 4), out.masks.S);
  compute_hair_region(&out.masks);
  out.face_depth = downsample_depth(view.face_depth, out.masks.F);
  out.pose = view.pose;
  return out;
}

// Bilinear upsampling of a coarse solution onto the full-resolution pixels
// in |targets|; other pixels keep |fallback|.
DepthMap upsample_depth(const DepthMap& coarse, const DepthMap& fallback,
                        const Mask& targets) {
  DepthMap out = fallback;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!targets.at(x, y)) continue;
      const double cx = (x + 0.5) / 2.0 - 0.5, cy = (y + 0.5) / 2.0 - 0.5;
      const int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
      double sum = 0.0, weight = 0.0;
      for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
          const int qx = x0 + dx, qy = y0 + dy;
          if (!coarse.contains(qx, qy) || !is_defined(coarse.at(qx, qy))) continue;
          const double wgt = (dx ? cx - x0 : 1.0 - (cx - x0)) * (dy ? cy - y0 : 1.0 - (cy - y0));
          sum += wgt * coarse.at(qx, qy);
          weight += wgt;
        }
      }
      if (weight > 1e-9) out.at(x, y) = sum / weight;
    }
  }
  return out;
}

struct Initialization {
  std::vector<DepthMap> depths;
  int unanchored_components = 0;
};

Initialization initialize(const DepthProblem& p, bool conditioned,
                          const std::vector<const DepthMap*>& overrides) {
  Initialization init;
  for (size_t v = 0; v < p.views.size(); ++v) {
    const DepthView& view = p.views[v];
    if (overrides[v]) {
      require_same_shape(*overrides[v], view.masks.S, "initial depth");
      init.depths.push_back(*overrides[v]);
    } else if (conditioned) {
      InitDepthResult r = init_depth(view.face_depth, view.masks);
      init.unanchored_components += r.unanchored_components;
      init.depths.push_back(std::move(r.depth));
    } else {
      DepthMap d(view.masks.width(), view.masks.height(), kUndefinedDepth);
      const double z = view.pose.translation.z();
      if (!(z > kMinDepth)) {
        throw Error(ErrorCode::kBehindCamera, "head centre is not in front of the camera");
      }
      for (size_t i = 0; i < d.size(); ++i) {
        if (view.masks.S[i]) d[i] = z;
      }
      init.depths.push_back(std::move(d));
    }
  }
  return init;
}

DepthFitResult fit_depth(std::vector<DepthView> views, const Camera& camera,
                         const FitConfig& config,
                         const std::vector<const DepthMap*>& overrides) {
  config.validate();
  camera.validate();
  DepthProblem p;
  for (const auto& v : views) {
    if (!v.image.same_shape(camera.width, camera.height)) {
      throw Error(ErrorCode::kDimension, "depth view size differs from the camera");
    }
    p.views.push_back(restrict_view(v));
  }
  p.camera = camera;
  p.weights = config.weights;
  const bool conditioned = config.condition_on_face_depth;
  if (!conditioned) {
    p.weights.w_face = 0.0;
    p.weights.w_layer = 0.0;
  }

  DepthFitResult result;
  if (p.views.size() == 2) {
    result.degenerate_pair =
        rotation_angle(p.views[0].pose.quaternion, p.views[1].pose.quaternion) < M_PI / 180.0;
  }
  Initialization init = initialize(p, conditioned, overrides);
  result.unanchored_components = init.unanchored_components;

  std::vector<DepthMap> start = init.depths;
  const bool no_overrides = std::all_of(overrides.begin(), overrides.end(),
                                        [](const DepthMap* d) { return d == nullptr; });
  if (config.coarse_to_fine && no_overrides && camera.width >= 16 && camera.height >= 16 &&
      camera.width % 2 == 0 && camera.height % 2 == 0) {
    DepthProblem coarse;
    coarse.camera = camera.scaled(0.5);
    coarse.weights = p.weights;
    for (const auto& v : p.views) coarse.views.push_back(downsample_view(v));
    bool usable = true;
    for (const auto& v : coarse.views) usable = usable && count(v.masks.H) > 0 && count(v.masks.F) > 0;
    if (usable) {
      try {
        Initialization coarse_init = initialize(coarse, conditioned, {nullptr, nullptr});
        LevelResult lr = run_level(coarse, coarse_init.depths, config, 1, &result.trace);
        for (size_t v = 0; v < p.views.size(); ++v) {
          const RegionMasks& m = p.views[v].masks;
          const Mask targets = conditioned ? mask_minus(m.S, mask_minus(m.F, m.S_h)) : m.S;
          start[v] = upsample_depth(lr.depths[v], init.depths[v], targets);
        }
      } catch (const Error&) {
        // Fall back to the plain initialization.
        start = init.depths;
      }
    }
  }

  // The plain initialization competes with the warm start and wins ties.
  const double init_energy = full_value(evaluate(p, init.depths, DepthTerms::kSmoothOnly), p.weights);
  LevelResult lr = run_level(p, start, config, 0, &result.trace);
  result.initial_energy = init_energy;
  if (init_energy <= lr.energy) {
    lr.energy = init_energy;
    lr.depths = init.depths;
    lr.terms = evaluate(p, init.depths, DepthTerms::kSmoothOnly).terms;
  }
  result.energy = lr.energy;
  result.terms = lr.terms;
  result.aborted = lr.aborted;
  result.diagnostic = lr.diagnostic;
  result.depth1 = std::move(lr.depths[0]);
  if (lr.depths.size() > 1) result.depth2 = std::move(lr.depths[1]);
  return result;
}

}  // namespace

DepthFitResult fit_depth_pair(const DepthView& view1, const DepthView& view2,
                              const Camera& camera, const FitConfig& config,
                              const DepthMap* init1, const DepthMap* init2) {
  return fit_depth({view1, view2}, camera, config, {init1, init2});
}

DepthFitResult fit_depth_single(const DepthView& view, const FitConfig& config,
                                const DepthMap* init) {
  Camera camera = Camera::default_for(view.image.width(), view.image.height());
  return fit_depth({view}, camera, config, {init});
}

// ---- Verification.

Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step must be > 0");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

GradientCheck check_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double step,
    const std::vector<Eigen::Index>& coordinates, double relative_tolerance,
    double kink_tolerance) {
  if (analytic.size() != x.size()) throw Error(ErrorCode::kDimension, "gradient size mismatch");
  std::vector<Eigen::Index> coords = coordinates;
  if (coords.empty()) {
    for (Eigen::Index i = 0; i < x.size(); ++i) coords.push_back(i);
  }
  const double floor = 1e-6 * analytic.cwiseAbs().maxCoeff() + 1e-12;
  const double f0 = f(x);
  GradientCheck out;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i : coords) {
    ++out.tested;
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    const double forward = (up - f0) / step, backward = (f0 - down) / step;
    const double central = (up - down) / (2.0 * step);
    const double gap = forward - backward;
    if (std::abs(gap) > kink_tolerance * std::max(std::abs(forward), std::abs(backward)) + floor) {
      // Curvature shrinks the gap linearly with the step; a kink does not.
      const double h = 0.5 * step;
      probe[i] = x[i] + h;
      const double up_h = f(probe);
      probe[i] = x[i] - h;
      const double down_h = f(probe);
      probe[i] = x[i];
      const double gap_h = (up_h - f0) / h - (f0 - down_h) / h;
      if (std::abs(gap_h - 0.5 * gap) > 0.25 * std::abs(gap) + floor) {
        ++out.excluded;
        continue;
      }
    }
    const double rel = std::abs(analytic[i] - central) /
                       std::max({std::abs(analytic[i]), std::abs(central), floor});
    out.worst_relative_error = std::max(out.worst_relative_error, rel);
    if (rel < relative_tolerance) ++out.passed;
  }
  return out;
}

namespace {

ReconstructionError distances(const Eigen::Matrix3Xd& aligned,
                              const Eigen::Matrix3Xd& target,
                              const std::vector<bool>& is_face) {
  std::vector<double> face, nonface;
  for (Eigen::Index i = 0; i < aligned.cols(); ++i) {
    const double d = (aligned.col(i) - target.col(i)).norm();
    (is_face[i] ? face : nonface).push_back(d);
  }
  if (face.empty() || nonface.empty()) {
    throw Error(ErrorCode::kEmptyRegion, "evaluate_reconstruction: empty partition side");
  }
  ReconstructionError e;
  e.face_count = face.size();
  e.nonface_count = nonface.size();
  e.face_mm = pairwise_sum(face) / static_cast<double>(face.size());
  e.nonface_mm = pairwise_sum(nonface) / static_cast<double>(nonface.size());
  return e;
}

}  // namespace

ReconstructionError evaluate_reconstruction(const DepthMap& predicted,
                                            const DepthMap& ground_truth,
                                            const Mask& face,
                                            const Mask& nonface,
                                            const Camera& camera) {
  require_same_shape(predicted, ground_truth, "evaluate_reconstruction");
  require_same_shape(predicted, face, "evaluate_reconstruction face");
  require_same_shape(predicted, nonface, "evaluate_reconstruction nonface");
  std::vector<Eigen::Vector3d> p, g;
  std::vector<bool> is_face;
  for (int y = 0; y < predicted.height(); ++y) {
    for (int x = 0; x < predicted.width(); ++x) {
      const bool f = face.at(x, y) != 0, nf = nonface.at(x, y) != 0;
      if (!f && !nf) continue;
      const double dp = predicted.at(x, y), dg = ground_truth.at(x, y);
      if (!is_defined(dp) || !is_defined(dg)) continue;
      const Eigen::Vector3d ray = camera.pixel_ray(x, y);
      p.push_back(dp * ray);
      g.push_back(dg * ray);
      is_face.push_back(f);
    }
  }
  Eigen::Matrix3Xd pm(3, p.size()), gm(3, g.size());
  for (size_t i = 0; i < p.size(); ++i) {
    pm.col(i) = p[i];
    gm.col(i) = g[i];
  }
  if (p.size() < 3) throw Error(ErrorCode::kEmptyRegion, "evaluate_reconstruction: too few pixels");
  const RigidAlignment a = rigid_align(pm, gm);
  ReconstructionError e = distances(apply_pose(pm, a.pose), gm, is_face);
  e.alignment = a.pose;
  return e;
}

ReconstructionError evaluate_reconstruction(const Eigen::Matrix3Xd& predicted,
                                            const Eigen::Matrix3Xd& ground_truth,
                                            const std::vector<bool>& is_face,
                                            int iterations) {
  if (static_cast<Eigen::Index>(is_face.size()) != ground_truth.cols()) {
    throw Error(ErrorCode::kDimension, "face labels do not match the ground-truth points");
  }
  if (predicted.cols() < 3 || ground_truth.cols() < 3) {
    throw Error(ErrorCode::kEmptyRegion, "evaluate_reconstruction: too few points");
  }
  Pose pose;
  Eigen::Matrix3Xd matched(3, ground_truth.cols());
  for (int it = 0; it <= iterations; ++it) {
    const Eigen::Matrix3Xd moved = apply_pose(predicted, pose);
    for (Eigen::Index i = 0; i < ground_truth.cols(); ++i) {
      Eigen::Index best = 0;
      (moved.colwise() - ground_truth.col(i)).colwise().squaredNorm().minCoeff(&best);
      matched.col(i) = predicted.col(best);
    }
    if (it == iterations) break;
    pose = rigid_align(matched, ground_truth).pose;
  }
  ReconstructionError e = distances(apply_pose(matched, pose), ground_truth, is_face);
  e.alignment = pose;
  return e;
}

}  // namespace headforge
