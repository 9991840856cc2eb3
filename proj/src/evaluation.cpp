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


#include "msfps/evaluation.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "msfps/error.hpp"

namespace msfps {

Tensor angular_error_map(const NormalMap& pred, const NormalMap& gt) {
  const Mask& mask = gt.mask;
  if (pred.mask.height != mask.height || pred.mask.width != mask.width) {
    throw StructuralError("angular_error_map: prediction and ground truth differ in size");
  }
  if (mask.count() == 0) throw StructuralError("angular_error_map: empty mask");
  const std::size_t pixels = mask.pixels();
  std::vector<double> err(pixels, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!mask.valid[p]) continue;
    const Eigen::Vector3d a = pred.mask.valid[p] ? pred.at(p) : Eigen::Vector3d(0.0, 0.0, 1.0);
    const Eigen::Vector3d b = gt.at(p);
    err[p] = std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
  }
  return Tensor::from_vector({mask.height, mask.width}, std::move(err));
}

double error_fraction_below(const Tensor& error_map, const Mask& mask, double threshold_deg) {
  const auto e = error_map.data();
  std::size_t below = 0, total = 0;
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    if (!mask.valid[p]) continue;
    ++total;
    if (e[p] < threshold_deg) ++below;
  }
  return total ? static_cast<double>(below) / static_cast<double>(total) : 0.0;
}

EvalReport summarize(const Tensor& error_map, const Mask& mask) {
  if (error_map.shape() != Shape{mask.height, mask.width}) {
    throw StructuralError("summarize: error map " + shape_str(error_map.shape()) +
                          " does not match the mask");
  }
  EvalReport r;
  r.per_pixel_error = error_map;
  const auto e = error_map.data();
  double sum = 0.0;
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    if (!mask.valid[p]) continue;
    sum += e[p];
    ++r.n_valid;
  }
  if (r.n_valid == 0) return r;
  r.mae_deg = sum / static_cast<double>(r.n_valid);
  r.err15 = error_fraction_below(error_map, mask, 15.0);
  r.err30 = error_fraction_below(error_map, mask, 30.0);
  return r;
}

EvalReport evaluate(const NormalMap& pred, const NormalMap& gt) {
  return summarize(angular_error_map(pred, gt), gt.mask);
}

PngImage render_error_map(const Tensor& error_map, const Mask& mask, double scale_max) {
  if (!(scale_max > 0.0)) throw ConfigError("error-map scale_max must be positive");
  if (error_map.shape() != Shape{mask.height, mask.width}) {
    throw StructuralError("render_error_map: error map does not match the mask");
  }
  PngImage img;
  img.width = mask.width;
  img.height = mask.height;
  img.channels = 3;
  img.bit_depth = 8;
  img.samples.assign(mask.pixels() * 3, 0);
  const auto e = error_map.data();
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    if (!mask.valid[p]) continue;
    const double t = std::clamp(e[p] / scale_max, 0.0, 1.0);
    img.samples[3 * p] = static_cast<std::uint16_t>(std::lround(255.0 * t));
    img.samples[3 * p + 2] = static_cast<std::uint16_t>(std::lround(255.0 * (1.0 - t)));
  }
  return img;
}

std::string format_report(std::span<const EvalReport> rows, bool with_mean) {
  std::string out = "# name\tn_images\tMAE\terr15\terr30\n";
  char buf[256];
  double mae = 0.0, e15 = 0.0, e30 = 0.0;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%.6f\t%.6f\t%.6f\n", r.name.c_str(), r.n_images,
                  r.mae_deg, r.err15, r.err30);
    out += buf;
    mae += r.mae_deg;
    e15 += r.err15;
    e30 += r.err30;
  }
  if (with_mean && !rows.empty()) {
    const double n = static_cast<double>(rows.size());
    std::snprintf(buf, sizeof buf, "mean\t-\t%.6f\t%.6f\t%.6f\n", mae / n, e15 / n, e30 / n);
    out += buf;
  }
  return out;
}

void write_report(const std::filesystem::path& path, std::span<const EvalReport> rows,
                  bool with_mean) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << format_report(rows, with_mean);
  out.flush();
  if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace msfps
