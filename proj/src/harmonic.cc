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

#include "headforge/harmonic.h"

#include <cmath>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "headforge/error.h"

namespace headforge {

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

}  // namespace

HarmonicResult solve_harmonic(const DepthMap& known, const Mask& unknown,
                              double fallback) {
  require_same_shape(known, unknown, "solve_harmonic");
  const int w = known.width(), h = known.height();
  HarmonicResult result;
  result.values = known;
  result.unanchored = Mask(w, h, 0);

  // Label components and find which ones see Dirichlet data.
  Grid<int> label(w, h, -1);
  std::vector<bool> anchored;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!unknown.at(x, y) || label.at(x, y) >= 0) continue;
      const int id = static_cast<int>(anchored.size());
      anchored.push_back(false);
      label.at(x, y) = id;
      stack.assign(1, static_cast<int>(label.index(x, y)));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int px = p % w, py = p / w;
        for (int k = 0; k < 4; ++k) {
          const int qx = px + kDx[k], qy = py + kDy[k];
          if (!known.contains(qx, qy)) continue;
          if (unknown.at(qx, qy)) {
            if (label.at(qx, qy) < 0) {
              label.at(qx, qy) = id;
              stack.push_back(static_cast<int>(label.index(qx, qy)));
            }
          } else if (is_defined(known.at(qx, qy))) {
            anchored[id] = true;
          }
        }
      }
    }
  }

  Grid<int> var(w, h, -1);
  int n = 0;
  for (size_t i = 0; i < known.size(); ++i) {
    if (!unknown[i]) continue;
    if (anchored[label[i]]) {
      var[i] = n++;
    } else {
      result.values[i] = fallback;
      result.unanchored[i] = 1;
    }
  }
  for (bool a : anchored) result.unanchored_components += a ? 0 : 1;
  if (n == 0) return result;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<size_t>(n) * 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = var.at(x, y);
      if (row < 0) continue;
      double diag = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int qx = x + kDx[k], qy = y + kDy[k];
        if (!known.contains(qx, qy)) continue;
        if (unknown.at(qx, qy)) {
          diag += 1.0;
          triplets.emplace_back(row, var.at(qx, qy), -1.0);
        } else if (is_defined(known.at(qx, qy))) {
          diag += 1.0;
          rhs[row] += known.at(qx, qy);
        }
      }
      triplets.emplace_back(row, row, diag);
    }
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kDegenerate, "harmonic system factorization failed");
  }
  const Eigen::VectorXd u = solver.solve(rhs);
  for (size_t i = 0; i < known.size(); ++i) {
    if (var[i] >= 0) result.values[i] = u[var[i]];
  }
  return result;
}

double harmonic_residual(const DepthMap& values, const Mask& unknown,
                         const DepthMap& known) {
  require_same_shape(values, unknown, "harmonic_residual");
  require_same_shape(known, unknown, "harmonic_residual");
  double worst = 0.0;
  for (int y = 0; y < values.height(); ++y) {
    for (int x = 0; x < values.width(); ++x) {
      if (!unknown.at(x, y)) continue;
      double r = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int qx = x + kDx[k], qy = y + kDy[k];
        if (!values.contains(qx, qy)) continue;
        if (unknown.at(qx, qy) || is_defined(known.at(qx, qy))) {
          r += values.at(x, y) - values.at(qx, qy);
        }
      }
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

}  // namespace headforge
