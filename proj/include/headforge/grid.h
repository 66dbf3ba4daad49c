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

#ifndef HEADFORGE_GRID_H_
#define HEADFORGE_GRID_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "headforge/error.h"

namespace headforge {

// Row-major 2D array addressed as (x, y) with x the column.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, const T& fill = T())
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * static_cast<size_t>(height), fill) {
    if (width < 0 || height < 0) {
      throw std::invalid_argument("grid dimensions must be non-negative");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  size_t index(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width_) +
           static_cast<size_t>(x);
  }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(int width, int height) const {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           data_ == other.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Linear rgb in [0, 1].
using Rgb = Eigen::Vector3f;
using Image = Grid<Rgb>;

// Binary mask; any non-zero value is "inside".
using Mask = Grid<std::uint8_t>;

// Metric depth in mm along camera +Z; NaN marks undefined pixels.
using DepthMap = Grid<double>;

inline constexpr double kUndefinedDepth =
    std::numeric_limits<double>::quiet_NaN();

inline bool is_defined(double depth) { return std::isfinite(depth); }

inline size_t count(const Mask& mask) {
  size_t n = 0;
  for (auto v : mask.data()) n += (v != 0);
  return n;
}

template <typename U, typename V>
void require_same_shape(const Grid<U>& a, const Grid<V>& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kDimension,
                std::string(what) + ": size mismatch (" +
                    std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" +
                    std::to_string(b.height()) + ")");
  }
}

// Pixel-wise mask algebra.
Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
Mask mask_minus(const Mask& a, const Mask& b);
bool mask_subset(const Mask& a, const Mask& b);

// Pairwise summation; the result does not depend on how the terms were
// produced, only on their order in |values|.
double pairwise_sum(const double* values, size_t n);
inline double pairwise_sum(const std::vector<double>& values) {
  return pairwise_sum(values.data(), values.size());
}

}  // namespace headforge

#endif  // HEADFORGE_GRID_H_
