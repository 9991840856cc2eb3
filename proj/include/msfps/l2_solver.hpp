// Copyright 2026 The msfps Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Lambertian least-squares photometric stereo. For each pixel the gray
// intensities b (mean of RGB over the n images) are fit by b ~ L g with the
// n x 3 light matrix L; n = g / |g|.

#pragma once

#include "msfps/types.hpp"

namespace msfps {

struct L2Options {
  // Drop the darkest floor(n/4) observations of every pixel before solving.
  bool trim = false;
};

struct L2Solution {
  NormalMap normals;  // mask excludes pixels where |g| < 1e-12
  Tensor albedo;      // [3,H,W], >= 0
  Tensor residual;    // [H,W], RMS of L g - b
  double condition_number = 0.0;  // of the full light matrix
};

// Throws DataError with "need >= 3 images" for fewer than three images, and
// naming the condition number when L is rank deficient.
L2Solution solve_l2(const ImageSet& set, const L2Options& options = {});

}  // namespace msfps
