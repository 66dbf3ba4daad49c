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

// Discrete Laplace solve on a pixel set, shared by depth initialization and
// hole filling.

#ifndef HEADFORGE_HARMONIC_H_
#define HEADFORGE_HARMONIC_H_

#include <vector>

#include "headforge/grid.h"

namespace headforge {

struct HarmonicResult {
  // Copy of |known| with the unknown pixels filled in.
  DepthMap values;
  // Unknown pixels whose connected component touches no known value; they
  // receive |fallback|.
  Mask unanchored;
  int unanchored_components = 0;
};

// Solves sum over 4-neighbours q of (u_p - u_q) = 0 for every pixel p in
// |unknown|. Neighbours in |unknown| are coupled; neighbours outside it that
// carry a defined value in |known| act as Dirichlet data; everything else
// (undefined values, the image border) is a zero-flux boundary.
HarmonicResult solve_harmonic(const DepthMap& known, const Mask& unknown,
                              double fallback);

// Max over unknown pixels of |sum over valid neighbours (u_p - u_q)|, using
// the same neighbour classification as solve_harmonic.
double harmonic_residual(const DepthMap& values, const Mask& unknown,
                         const DepthMap& known);

}  // namespace headforge

#endif  // HEADFORGE_HARMONIC_H_
