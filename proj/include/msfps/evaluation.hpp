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


// Angular-error metrics over the surface pixels of a normal map.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msfps/png_codec.hpp"
#include "msfps/types.hpp"

namespace msfps {

struct EvalReport {
  std::string name;
  std::size_t n_images = 0;
  double mae_deg = 0.0;
  double err15 = 0.0;  // fraction of pixels with error < 15 degrees
  double err30 = 0.0;
  std::size_t n_valid = 0;
  Tensor per_pixel_error;  // [H,W] degrees, zero off the mask
};

// Angle between predicted and true normals in degrees on gt.mask, computed
// as atan2(|a x b|, a . b). Pixels the prediction marks invalid are scored
// against the fallback normal (0,0,1). Throws StructuralError on an empty
// mask or mismatched sizes.
Tensor angular_error_map(const NormalMap& pred, const NormalMap& gt);

// Fraction of masked pixels with error strictly below `threshold_deg`.
double error_fraction_below(const Tensor& error_map, const Mask& mask, double threshold_deg);
EvalReport summarize(const Tensor& error_map, const Mask& mask);
EvalReport evaluate(const NormalMap& pred, const NormalMap& gt);

// Linear blue (0 deg) to red (>= scale_max) 8-bit RGB image; unmasked
// pixels are black. Throws ConfigError when scale_max <= 0.
PngImage render_error_map(const Tensor& error_map, const Mask& mask, double scale_max = 90.0);

// Tab-separated rows: name, n_images, MAE, err15, err30. A final "mean" row
// averages the columns when `with_mean` is set.
std::string format_report(std::span<const EvalReport> rows, bool with_mean = true);
void write_report(const std::filesystem::path& path, std::span<const EvalReport> rows,
                  bool with_mean = true);

}  // namespace msfps
