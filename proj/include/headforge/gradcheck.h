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

// Finite-difference checks of every loss in losses.h on a small synthetic
// scene.

#ifndef HEADFORGE_GRADCHECK_H_
#define HEADFORGE_GRADCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "headforge/fit.h"

namespace headforge {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int size = 64;
  size_t max_coordinates = 200;  // per loss
  double depth_step = 1e-3;      // mm
  double parameter_step = 1e-4;
  double relative_tolerance = 1e-3;
  double min_pass_fraction = 0.95;
  // A loss with more coordinates excluded as kinks than this fails too.
  double max_excluded_fraction = 0.2;
};

struct LossCheck {
  std::string name;
  GradientCheck check;
  double seconds = 0.0;
  bool passed = false;
};

std::vector<LossCheck> run_loss_gradchecks(const GradcheckOptions& options);

}  // namespace headforge

#endif  // HEADFORGE_GRADCHECK_H_
