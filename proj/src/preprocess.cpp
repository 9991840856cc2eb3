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


#include "msfps/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "msfps/error.hpp"

namespace msfps {

ImageSet normalize_observations(const ImageSet& set, double eps) {
  set.validate();
  if (!(eps >= 0.0)) throw ConfigError("normalization eps must be non-negative");
  const std::size_t n = set.count();
  const std::size_t pixels = set.mask.pixels();
  const std::size_t values = 3 * pixels;

  // squares are summed in sorted order so the result does not depend on the
  // order of the images
  std::vector<double> sumsq(values, 0.0);
  std::vector<double> squares(n);
  for (std::size_t j = 0; j < values; ++j) {
    if (!set.mask.valid[j % pixels]) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const double v = set.images[k].data()[j];
      squares[k] = v * v;
    }
    std::sort(squares.begin(), squares.end());
    double acc = eps * eps;
    for (double q : squares) acc += q;
    sumsq[j] = acc;
  }
  ImageSet out;
  out.name = set.name;
  out.lights = set.lights;
  out.mask = set.mask;
  out.images.reserve(n);
  for (const Tensor& img : set.images) {
    const auto d = img.data();
    Tensor t = Tensor::zeros(img.shape());
    auto o = t.mutable_data();
    for (std::size_t j = 0; j < values; ++j) {
      if (!set.mask.valid[j % pixels]) continue;
      const double norm = std::sqrt(sumsq[j]);
      o[j] = norm > 0.0 ? d[j] / norm : 0.0;
    }
    out.images.push_back(std::move(t));
  }
  return out;
}

}  // namespace msfps
