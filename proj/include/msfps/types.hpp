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

// Captures and normal maps shared by every module.
//
// Coordinates are camera coordinates: x to the right, y up, z toward the
// camera. Pixel (row, col) has x = col - cx and y = cy - row.

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <vector>

#include "msfps/tensor.hpp"

namespace msfps {

struct Light {
  Eigen::Vector3d direction{0.0, 0.0, 1.0};
  Eigen::Vector3d intensity{1.0, 1.0, 1.0};

  // Throws DataError unless |direction| = 1 +- 1e-9, z > 0 and every
  // intensity channel is positive.
  void validate() const;
};

struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<unsigned char> valid;  // row-major, nonzero = surface pixel

  static Mask full(std::size_t height, std::size_t width);
  std::size_t pixels() const { return height * width; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

// n observations [3,H,W] (linear radiance, already divided by the light
// intensity) with their lights and a validity mask.
struct ImageSet {
  std::string name;
  std::vector<Tensor> images;
  std::vector<Light> lights;
  Mask mask;

  std::size_t count() const { return images.size(); }
  std::size_t height() const { return mask.height; }
  std::size_t width() const { return mask.width; }
  // Throws StructuralError on an empty set, mismatched sizes, or
  // lights.size() != images.size().
  void validate() const;
  // Reorders / filters images and lights jointly.
  ImageSet subset(const std::vector<std::size_t>& indices) const;
};

// Unit normals [3,H,W] on the mask, zero elsewhere.
struct NormalMap {
  Tensor normals;
  Mask mask;

  static NormalMap zeros(const Mask& mask);
  Eigen::Vector3d at(std::size_t pixel) const;
  void set(std::size_t pixel, const Eigen::Vector3d& n);
  // Throws StructuralError when a masked normal deviates from unit length by
  // more than `tolerance` or an unmasked one is nonzero.
  void validate(double tolerance = 1e-6) const;
};

}  // namespace msfps
