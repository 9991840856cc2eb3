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

#include "msfps/types.hpp"

#include <algorithm>
#include <cmath>

#include "msfps/error.hpp"

namespace msfps {

void Light::validate() const {
  const double norm = direction.norm();
  if (!(std::abs(norm - 1.0) <= 1e-9)) {
    throw DataError("light direction is not unit length (norm " + std::to_string(norm) + ")");
  }
  if (!(direction.z() > 0.0)) throw DataError("light direction must point toward the camera (z > 0)");
  if (!(intensity.minCoeff() > 0.0)) throw DataError("light intensity must be positive");
}

Mask Mask::full(std::size_t height, std::size_t width) {
  return {height, width, std::vector<unsigned char>(height * width, 1)};
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(valid.begin(), valid.end(), [](unsigned char v) { return v != 0; }));
}

void ImageSet::validate() const {
  if (images.empty()) throw StructuralError("image set '" + name + "' is empty");
  if (lights.size() != images.size()) {
    throw StructuralError("image set '" + name + "' has " + std::to_string(images.size()) +
                          " images but " + std::to_string(lights.size()) + " lights");
  }
  if (mask.valid.size() != mask.pixels()) throw StructuralError("mask storage size mismatch");
  const Shape expected{3, mask.height, mask.width};
  for (const Tensor& img : images) {
    if (img.shape() != expected) {
      throw StructuralError("image set '" + name + "': image shape " + shape_str(img.shape()) +
                            " does not match mask " + shape_str(expected));
    }
  }
}

ImageSet ImageSet::subset(const std::vector<std::size_t>& indices) const {
  ImageSet out;
  out.name = name;
  out.mask = mask;
  for (std::size_t i : indices) {
    if (i >= images.size()) {
      throw DataError("subset index " + std::to_string(i) + " out of range for " +
                      std::to_string(images.size()) + " images");
    }
    out.images.push_back(images[i]);
    out.lights.push_back(lights[i]);
  }
  return out;
}

NormalMap NormalMap::zeros(const Mask& mask) {
  return {Tensor::zeros({3, mask.height, mask.width}), mask};
}

Eigen::Vector3d NormalMap::at(std::size_t pixel) const {
  const auto v = normals.data();
  const std::size_t n = mask.pixels();
  return {v[pixel], v[n + pixel], v[2 * n + pixel]};
}

void NormalMap::set(std::size_t pixel, const Eigen::Vector3d& value) {
  auto v = normals.mutable_data();
  const std::size_t n = mask.pixels();
  v[pixel] = value.x();
  v[n + pixel] = value.y();
  v[2 * n + pixel] = value.z();
}

void NormalMap::validate(double tolerance) const {
  if (normals.shape() != Shape{3, mask.height, mask.width}) {
    throw StructuralError("normal map shape " + shape_str(normals.shape()) + " does not match mask");
  }
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    const double norm = at(p).norm();
    if (mask.valid[p] ? std::abs(norm - 1.0) > tolerance : norm != 0.0) {
      throw StructuralError("normal map violates unit/zero convention at pixel " + std::to_string(p));
    }
  }
}

}  // namespace msfps
