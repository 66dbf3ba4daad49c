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

#include "headforge/model.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "headforge/binary_io.h"
#include <Eigen/Geometry>

#include "headforge/error.h"

namespace headforge {

namespace {

constexpr char kModelMagic[5] = {'P', '3', 'D', 'M', '1'};
constexpr int kHeaderWords = 6;

void check_length(const Eigen::VectorXd& v, int expected, const char* name) {
  if (v.size() != expected) {
    throw Error(ErrorCode::kDimension,
                std::string(name) + " has length " + std::to_string(v.size()) +
                    ", model expects " + std::to_string(expected));
  }
}

}  // namespace

Eigen::Map<const Eigen::VectorXf> MorphableModel::scales_id() const {
  return {coeff_scales.data(), k_id()};
}
Eigen::Map<const Eigen::VectorXf> MorphableModel::scales_exp() const {
  return {coeff_scales.data() + k_id(), k_exp()};
}
Eigen::Map<const Eigen::VectorXf> MorphableModel::scales_tex() const {
  return {coeff_scales.data() + k_id() + k_exp(), k_tex()};
}

void MorphableModel::validate() const {
  const Eigen::Index rows = 3 * static_cast<Eigen::Index>(n_vertices);
  auto fail = [](ErrorCode code, const std::string& msg) {
    throw Error(code, "invalid model: " + msg);
  };
  if (n_vertices <= 0) fail(ErrorCode::kDimension, "no vertices");
  if (mean_shape.size() != rows || mean_texture.size() != rows) {
    fail(ErrorCode::kDimension, "mean vectors must have 3*n_vertices rows");
  }
  if (basis_id.rows() != rows || basis_exp.rows() != rows ||
      basis_tex.rows() != rows) {
    fail(ErrorCode::kDimension, "basis row count must equal 3*n_vertices");
  }
  if (coeff_scales.size() != k_id() + k_exp() + k_tex()) {
    fail(ErrorCode::kDimension, "coeff_scales length must be k_id+k_exp+k_tex");
  }
  for (Eigen::Index i = 0; i < coeff_scales.size(); ++i) {
    if (!(coeff_scales[i] > 0.0f) || !std::isfinite(coeff_scales[i])) {
      fail(ErrorCode::kInvalidArgument, "coeff_scales must be positive");
    }
  }
  for (const Triangle& t : triangles) {
    for (auto v : t) {
      if (v >= static_cast<std::uint32_t>(n_vertices)) {
        fail(ErrorCode::kInvalidArgument, "triangle index out of range");
      }
    }
  }
  std::set<std::uint32_t> seen;
  for (auto v : landmark_indices) {
    if (v >= static_cast<std::uint32_t>(n_vertices)) {
      fail(ErrorCode::kInvalidArgument, "landmark index out of range");
    }
    if (!seen.insert(v).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate landmark index");
    }
  }
}

bool MorphableModel::operator==(const MorphableModel& o) const {
  return n_vertices == o.n_vertices && triangles == o.triangles &&
         mean_shape == o.mean_shape && mean_texture == o.mean_texture &&
         basis_id == o.basis_id && basis_exp == o.basis_exp &&
         basis_tex == o.basis_tex && coeff_scales == o.coeff_scales &&
         landmark_indices == o.landmark_indices;
}

FaceCoefficients FaceCoefficients::zeros(const MorphableModel& model) {
  return {Eigen::VectorXd::Zero(model.k_id()),
          Eigen::VectorXd::Zero(model.k_exp()),
          Eigen::VectorXd::Zero(model.k_tex())};
}

Eigen::Matrix3Xd evaluate_shape(const MorphableModel& model,
                                const Eigen::VectorXd& alpha,
                                const Eigen::VectorXd& beta) {
  check_length(alpha, model.k_id(), "alpha");
  check_length(beta, model.k_exp(), "beta");
  Eigen::VectorXd flat = model.mean_shape.cast<double>();
  for (int j = 0; j < model.k_id(); ++j) {
    if (alpha[j] != 0.0) flat += model.basis_id.col(j).cast<double>() * alpha[j];
  }
  for (int j = 0; j < model.k_exp(); ++j) {
    if (beta[j] != 0.0) flat += model.basis_exp.col(j).cast<double>() * beta[j];
  }
  return Eigen::Map<Eigen::Matrix3Xd>(flat.data(), 3, model.n_vertices);
}

Eigen::Matrix3Xd evaluate_texture(const MorphableModel& model,
                                  const Eigen::VectorXd& delta) {
  check_length(delta, model.k_tex(), "delta");
  Eigen::VectorXd flat = model.mean_texture.cast<double>();
  for (int j = 0; j < model.k_tex(); ++j) {
    if (delta[j] != 0.0) flat += model.basis_tex.col(j).cast<double>() * delta[j];
  }
  return Eigen::Map<Eigen::Matrix3Xd>(flat.data(), 3, model.n_vertices);
}

void make_icosphere(int n_subdiv, std::vector<Eigen::Vector3d>* vertices,
                    std::vector<Triangle>* triangles) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Triangle> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < n_subdiv; ++level) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> cache;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      auto id = static_cast<std::uint32_t>(v.size() - 1);
      cache.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(f.size() * 4);
    for (const Triangle& tri : f) {
      auto ab = midpoint(tri[0], tri[1]);
      auto bc = midpoint(tri[1], tri[2]);
      auto ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  *vertices = std::move(v);
  *triangles = std::move(f);
}

namespace {

// Head template in model coordinates: x right, y down, the face looks
// towards -z (a camera at the origin sees it frontally when the head sits on
// +z).
const Eigen::Vector3d kHeadRadii(75.0, 100.0, 90.0);
const Eigen::Vector3d kNoseDirection = Eigen::Vector3d(0.0, 0.08, -1.0).normalized();

double angular_gaussian(const Eigen::Vector3d& dir, const Eigen::Vector3d& center,
                        double sigma) {
  double c = std::clamp(dir.dot(center.normalized()), -1.0, 1.0);
  double angle = std::acos(c);
  return std::exp(-0.5 * angle * angle / (sigma * sigma));
}

// Smooth random field over the unit sphere from a few random Fourier
// features; |frequency| controls the spatial scale.
class SmoothField {
 public:
  SmoothField(std::mt19937_64& rng, int n_features, double frequency) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    for (int i = 0; i < n_features; ++i) {
      Feature feature;
      feature.omega = Eigen::Vector3d(normal(rng), normal(rng), normal(rng)) *
                      frequency;
      feature.phase = phase(rng);
      feature.amplitude = normal(rng);
      features_.push_back(feature);
    }
  }
  double operator()(const Eigen::Vector3d& dir) const {
    double s = 0.0;
    for (const auto& f : features_) {
      s += f.amplitude * std::cos(f.omega.dot(dir) + f.phase);
    }
    return s;
  }

 private:
  struct Feature {
    Eigen::Vector3d omega;
    double phase;
    double amplitude;
  };
  std::vector<Feature> features_;
};

// Orthogonalizes |column| against |basis| (modified Gram-Schmidt, two
// passes). Returns false when the column is numerically dependent.
bool orthonormalize_into(const std::vector<Eigen::VectorXd>& basis,
                         Eigen::VectorXd* column) {
  const double original = column->norm();
  if (original == 0.0) return false;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) *column -= b.dot(*column) * b;
  }
  const double remaining = column->norm();
  if (remaining < 1e-6 * original) return false;
  *column /= remaining;
  return true;
}

Eigen::MatrixXf draw_basis(std::mt19937_64& rng, int k,
                           const std::vector<Eigen::Vector3d>& directions,
                           std::vector<Eigen::VectorXd>* orthogonal_to,
                           const std::function<double(const Eigen::Vector3d&)>& window,
                           double frequency) {
  const Eigen::Index rows = 3 * static_cast<Eigen::Index>(directions.size());
  if (static_cast<Eigen::Index>(orthogonal_to->size()) + k > rows) {
    throw Error(ErrorCode::kInvalidArgument,
                "too many basis columns for the template vertex count");
  }
  Eigen::MatrixXf basis(rows, k);
  int filled = 0;
  int attempts = 0;
  while (filled < k) {
    if (++attempts > 50 * k + 100) {
      throw Error(ErrorCode::kDegenerate, "could not draw independent basis");
    }
    SmoothField fx(rng, 6, frequency), fy(rng, 6, frequency),
        fz(rng, 6, frequency);
    Eigen::VectorXd column(rows);
    for (size_t i = 0; i < directions.size(); ++i) {
      const double w = window(directions[i]);
      column[3 * i + 0] = w * fx(directions[i]);
      column[3 * i + 1] = w * fy(directions[i]);
      column[3 * i + 2] = w * fz(directions[i]);
    }
    if (!orthonormalize_into(*orthogonal_to, &column)) continue;
    orthogonal_to->push_back(column);
    basis.col(filled++) = column.cast<float>();
  }
  return basis;
}

Eigen::Vector3d skin_color(const Eigen::Vector3d& dir) {
  Eigen::Vector3d c(0.80, 0.62, 0.52);
  const Eigen::Vector3d brow_color(0.30, 0.22, 0.18);
  const Eigen::Vector3d eye_color(0.15, 0.12, 0.12);
  const Eigen::Vector3d lip_color(0.72, 0.32, 0.32);
  auto blend = [&](const Eigen::Vector3d& target, double w) {
    c = (1.0 - w) * c + w * target;
  };
  for (double side : {-1.0, 1.0}) {
    blend(brow_color, 0.9 * angular_gaussian(dir, {side * 0.34, -0.33, -0.88}, 0.07));
    blend(eye_color, 0.9 * angular_gaussian(dir, {side * 0.32, -0.16, -0.93}, 0.06));
    blend(Eigen::Vector3d(0.86, 0.55, 0.50),
          0.5 * angular_gaussian(dir, {side * 0.55, 0.18, -0.82}, 0.15));
  }
  blend(lip_color, 0.85 * angular_gaussian(dir, {0.0, 0.50, -0.87}, 0.08));
  blend(Eigen::Vector3d(0.70, 0.52, 0.44),
        0.6 * angular_gaussian(dir, {0.0, 0.30, -0.95}, 0.05));
  return c;
}

}  // namespace

MorphableModel synthesize_model(std::uint64_t seed, int n_subdiv, int k_id,
                                int k_exp, int k_tex) {
  if (n_subdiv < 1) {
    throw Error(ErrorCode::kInvalidArgument, "n_subdiv must be >= 1");
  }
  if (n_subdiv > 7) {
    throw Error(ErrorCode::kInvalidArgument, "n_subdiv must be <= 7");
  }
  if (k_id < 1 || k_exp < 1 || k_tex < 1) {
    throw Error(ErrorCode::kInvalidArgument, "basis widths must be >= 1");
  }
  std::mt19937_64 rng(seed);

  std::vector<Eigen::Vector3d> directions;
  MorphableModel model;
  make_icosphere(n_subdiv, &directions, &model.triangles);
  const int n = static_cast<int>(directions.size());
  model.n_vertices = n;

  Eigen::VectorXd mean_shape(3 * n);
  Eigen::VectorXd mean_texture(3 * n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d& d = directions[i];
    Eigen::Vector3d p = d.cwiseProduct(kHeadRadii);
    // Nose protrudes along -z, tapering with angular distance.
    p.z() -= 24.0 * angular_gaussian(d, kNoseDirection, 0.13);
    // Flatter back and a slight chin.
    p.y() += 8.0 * angular_gaussian(d, {0.0, 0.85, -0.5}, 0.25);
    mean_shape.segment<3>(3 * i) = p;
    mean_texture.segment<3>(3 * i) = skin_color(d);
  }
  model.mean_shape = mean_shape.cast<float>();
  model.mean_texture = mean_texture.cast<float>();

  // Shape bases avoid rigid motion and uniform scale of the template so that
  // pose and shape stay separately identifiable.
  std::vector<Eigen::VectorXd> shape_span;
  {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) centroid += mean_shape.segment<3>(3 * i);
    centroid /= n;
    std::vector<Eigen::VectorXd> rigid(7, Eigen::VectorXd::Zero(3 * n));
    for (int i = 0; i < n; ++i) {
      Eigen::Vector3d p = mean_shape.segment<3>(3 * i) - centroid;
      for (int a = 0; a < 3; ++a) {
        rigid[a][3 * i + a] = 1.0;
        Eigen::Vector3d axis = Eigen::Vector3d::Unit(a);
        rigid[3 + a].segment<3>(3 * i) = axis.cross(p);
      }
      rigid[6].segment<3>(3 * i) = p;
    }
    for (auto& r : rigid) {
      if (orthonormalize_into(shape_span, &r)) shape_span.push_back(r);
    }
  }
  auto everywhere = [](const Eigen::Vector3d&) { return 1.0; };
  auto lower_face = [](const Eigen::Vector3d& d) {
    return angular_gaussian(d, {0.0, 0.55, -0.83}, 0.45);
  };
  model.basis_id = draw_basis(rng, k_id, directions, &shape_span, everywhere, 1.6);
  model.basis_exp = draw_basis(rng, k_exp, directions, &shape_span, lower_face, 2.2);
  std::vector<Eigen::VectorXd> texture_span;
  model.basis_tex = draw_basis(rng, k_tex, directions, &texture_span, everywhere, 2.0);

  // A unit-norm column spreads over 3n entries, so a per-entry standard
  // deviation s corresponds to a coefficient scale of s * sqrt(3n).
  const double root = std::sqrt(3.0 * n);
  model.coeff_scales.resize(k_id + k_exp + k_tex);
  for (int j = 0; j < k_id; ++j) {
    model.coeff_scales[j] = static_cast<float>(1.5 * root / (1.0 + 0.1 * j));
  }
  for (int j = 0; j < k_exp; ++j) {
    model.coeff_scales[k_id + j] = static_cast<float>(1.0 * root / (1.0 + 0.1 * j));
  }
  for (int j = 0; j < k_tex; ++j) {
    model.coeff_scales[k_id + k_exp + j] =
        static_cast<float>(0.03 * root / (1.0 + 0.1 * j));
  }

  // Landmarks at extremal template features, first hit wins on collisions.
  const std::vector<Eigen::Vector3d> features = {
      {0.0, 0.08, -1.0},    {0.0, 0.30, -0.95},  {0.0, 0.80, -0.60},
      {0.0, -0.50, -0.87},  {-0.45, -0.14, -0.88}, {0.45, -0.14, -0.88},
      {-0.20, -0.14, -0.97}, {0.20, -0.14, -0.97}, {-0.35, -0.35, -0.87},
      {0.35, -0.35, -0.87}, {-0.25, 0.50, -0.83}, {0.25, 0.50, -0.83},
      {0.0, 0.45, -0.89},   {0.0, 0.56, -0.83},  {-0.70, 0.20, -0.70},
      {0.70, 0.20, -0.70},  {-0.50, 0.60, -0.62}, {0.50, 0.60, -0.62},
      {-0.85, -0.20, -0.50}, {0.85, -0.20, -0.50}};
  std::set<std::uint32_t> used;
  for (const auto& f : features) {
    const Eigen::Vector3d dir = f.normalized();
    int best = 0;
    double best_score = -2.0;
    for (int i = 0; i < n; ++i) {
      double score = directions[i].dot(dir);
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    if (used.insert(static_cast<std::uint32_t>(best)).second) {
      model.landmark_indices.push_back(static_cast<std::uint32_t>(best));
    }
  }
  model.validate();
  return model;
}

// Layout: magic "P3DM1", six little-endian u32 (n_vertices, n_triangles,
// k_id, k_exp, k_tex, n_landmarks), then triangles (u32), mean_shape,
// mean_texture, basis_id, basis_exp, basis_tex (column-major), coeff_scales
// (f32) and landmark_indices (u32).
void save_model(const MorphableModel& model, const std::filesystem::path& path) {
  model.validate();
  ByteWriter out;
  out.bytes(kModelMagic, sizeof(kModelMagic));
  out.u32(static_cast<std::uint32_t>(model.n_vertices));
  out.u32(static_cast<std::uint32_t>(model.triangles.size()));
  out.u32(static_cast<std::uint32_t>(model.k_id()));
  out.u32(static_cast<std::uint32_t>(model.k_exp()));
  out.u32(static_cast<std::uint32_t>(model.k_tex()));
  out.u32(static_cast<std::uint32_t>(model.landmark_indices.size()));
  for (const Triangle& t : model.triangles) {
    for (auto v : t) out.u32(v);
  }
  out.f32s(model.mean_shape.data(), model.mean_shape.size());
  out.f32s(model.mean_texture.data(), model.mean_texture.size());
  out.f32s(model.basis_id.data(), model.basis_id.size());
  out.f32s(model.basis_exp.data(), model.basis_exp.size());
  out.f32s(model.basis_tex.data(), model.basis_tex.size());
  out.f32s(model.coeff_scales.data(), model.coeff_scales.size());
  for (auto v : model.landmark_indices) out.u32(v);
  out.write_file(path);
}

MorphableModel load_model(const std::filesystem::path& path) {
  ByteReader in = ByteReader::from_file(path);
  char magic[5];
  if (in.remaining() < sizeof(magic) + 4 * kHeaderWords) {
    if (in.remaining() >= sizeof(magic)) {
      in.bytes(magic, sizeof(magic));
      if (!std::equal(magic, magic + 5, kModelMagic)) {
        throw Error(ErrorCode::kBadMagic, "not a P3DM1 model file: " + path.string());
      }
    }
    throw Error(ErrorCode::kTruncated, "truncated model header: " + path.string());
  }
  in.bytes(magic, sizeof(magic));
  if (!std::equal(magic, magic + 5, kModelMagic)) {
    throw Error(ErrorCode::kBadMagic, "not a P3DM1 model file: " + path.string());
  }
  const std::uint64_t n = in.u32();
  const std::uint64_t n_tri = in.u32();
  const std::uint64_t k_id = in.u32();
  const std::uint64_t k_exp = in.u32();
  const std::uint64_t k_tex = in.u32();
  const std::uint64_t n_lmk = in.u32();
  const std::uint64_t words = 3 * n_tri + 3 * n * 2 +
                              3 * n * (k_id + k_exp + k_tex) +
                              (k_id + k_exp + k_tex) + n_lmk;
  if (words * 4 != in.remaining()) {
    throw Error(ErrorCode::kPayloadSize,
                "model payload is " + std::to_string(in.remaining()) +
                    " bytes, header implies " + std::to_string(words * 4));
  }
  MorphableModel model;
  model.n_vertices = static_cast<int>(n);
  model.triangles.resize(n_tri);
  for (auto& t : model.triangles) {
    for (auto& v : t) v = in.u32();
  }
  const auto rows = static_cast<Eigen::Index>(3 * n);
  model.mean_shape.resize(rows);
  in.f32s(model.mean_shape.data(), rows);
  model.mean_texture.resize(rows);
  in.f32s(model.mean_texture.data(), rows);
  model.basis_id.resize(rows, static_cast<Eigen::Index>(k_id));
  in.f32s(model.basis_id.data(), model.basis_id.size());
  model.basis_exp.resize(rows, static_cast<Eigen::Index>(k_exp));
  in.f32s(model.basis_exp.data(), model.basis_exp.size());
  model.basis_tex.resize(rows, static_cast<Eigen::Index>(k_tex));
  in.f32s(model.basis_tex.data(), model.basis_tex.size());
  model.coeff_scales.resize(static_cast<Eigen::Index>(k_id + k_exp + k_tex));
  in.f32s(model.coeff_scales.data(), model.coeff_scales.size());
  model.landmark_indices.resize(n_lmk);
  for (auto& v : model.landmark_indices) v = in.u32();
  model.validate();
  return model;
}

}  // namespace headforge
