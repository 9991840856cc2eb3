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

// Pixel imaging model and a synthetic capture generator.
//
//   i = rho(n, l, v) * max(n.l, 0) + noise
//
// with rho = albedo for Lambertian surfaces and
// rho = albedo + ks * max(n.h, 0)^shininess, h = normalize(l + v), for
// Blinn-Phong. The camera is orthographic and looks down -z, so v = (0,0,1).

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msfps/types.hpp"

namespace msfps {

enum class Reflectance { kLambertian, kBlinnPhong };

struct Material {
  Eigen::Vector3d albedo{0.5, 0.5, 0.5};
  double specular_strength = 0.0;
  double shininess = 1.0;
  Reflectance model = Reflectance::kLambertian;

  void validate() const;
};

inline const Eigen::Vector3d kViewDirection{0.0, 0.0, 1.0};

// Per-channel intensity, clamped at zero.
Eigen::Vector3d shade_pixel(const Eigen::Vector3d& normal, const Light& light,
                            const Material& material,
                            const Eigen::Vector3d& view = kViewDirection,
                            const Eigen::Vector3d& noise = Eigen::Vector3d::Zero());

// Height field z(x, y) in pixel units plus per-pixel material. Normals are
// stored explicitly so analytic shapes keep exact ground truth.
struct Scene {
  std::string name;
  Mask mask;
  std::vector<double> depth;              // H*W, zero off the mask
  std::vector<Eigen::Vector3d> normals;   // H*W, unit on the mask
  std::vector<Eigen::Vector3d> albedo;    // H*W
  double specular_strength = 0.0;
  double shininess = 1.0;
  Reflectance model = Reflectance::kLambertian;

  Material material_at(std::size_t pixel) const;
  NormalMap normal_map() const;
};

// Surface sample returned by a shape function: height and its partial
// derivatives with respect to the camera x/y axes.
struct SurfacePoint {
  double z;
  double dz_dx;
  double dz_dy;
};
using ShapeFn = std::function<SurfacePoint(double x, double y)>;

// Builds a scene over an H x W grid from an analytic surface. `inside`
// selects mask pixels (all when empty). Albedo defaults to the material's.
Scene make_scene(std::string name, std::size_t height, std::size_t width, const ShapeFn& shape,
                 const std::function<bool(double x, double y)>& inside, const Material& material);

Scene make_plane(std::size_t height, std::size_t width, const Material& material);
// Hemisphere of radius `radius_fraction * min(H,W)/2` centered in the frame.
Scene make_sphere(std::size_t height, std::size_t width, const Material& material,
                  double radius_fraction = 0.9);
// z = depth * (1 - r^2 / R^2) on the inscribed disk.
Scene make_paraboloid(std::size_t height, std::size_t width, const Material& material,
                      double depth_fraction = 0.5);
// Sum of sinusoids over the full frame.
Scene make_wave_relief(std::size_t height, std::size_t width, const Material& material,
                       std::uint64_t seed, double amplitude = 2.0);
// Flat plate with a square pit of the given depth (pixels) cut in the middle.
Scene make_pit(std::size_t height, std::size_t width, const Material& material,
               std::size_t pit_size, double pit_depth);

struct NoiseModel {
  double sigma = 0.0;
  bool cast_shadows = false;
  std::uint64_t seed = 0;
};

struct RenderedCapture {
  ImageSet images;
  NormalMap ground_truth;
};

// One image per light. With cast_shadows set, a pixel whose ray toward the
// light (marched over the height field in half-pixel steps) passes below the
// surface gets zero reflectance for that light.
RenderedCapture render_scene(const Scene& scene, std::span<const Light> lights,
                             const NoiseModel& noise = {});

// True when the half-pixel-step march from `pixel` toward `light` hits the
// height field. Exposed for tests.
bool is_cast_shadowed(const Scene& scene, std::size_t pixel, const Eigen::Vector3d& light);

// `count` quasi-uniform unit directions on the cap with polar angle <= 60
// degrees (a seeded, jittered Fibonacci lattice), unit intensity.
std::vector<Light> sample_lights(std::size_t count, std::uint64_t seed);

// Distribution of the synthetic training / benchmark scenes.
struct SceneDistribution {
  std::size_t size = 32;
  Reflectance model = Reflectance::kBlinnPhong;
  double specular_min = 0.2;
  double specular_max = 0.6;
  double shininess_min = 10.0;
  double shininess_max = 80.0;
};

// Random shape (sphere, paraboloid, wave relief or blob field) with a
// smoothly varying albedo and one Blinn-Phong lobe, reproducible from seed.
Scene random_scene(const SceneDistribution& dist, std::uint64_t seed);

}  // namespace msfps
