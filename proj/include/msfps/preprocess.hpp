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


// Observation normalization: every pixel-channel vector across the n images
// is divided by its L2 norm,
//
//   i'_k = i_k / sqrt(i_1^2 + ... + i_n^2 + eps^2),
//
// which cancels a per-pixel albedo factor.

#pragma once

#include "msfps/types.hpp"

namespace msfps {

inline constexpr double kDefaultNormalizeEps = 1e-8;

// Unmasked pixels are zero in the output. Throws StructuralError for an
// invalid set and ConfigError when eps < 0.
ImageSet normalize_observations(const ImageSet& set, double eps = kDefaultNormalizeEps);

}  // namespace msfps
