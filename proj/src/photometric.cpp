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

#include "msfps/photometric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "msfps/error.hpp"

namespace msfps {

void Material::validate() const {
  if (albedo.minCoeff() < 0.0 || albedo.maxCoeff() > 1.0) {
    throw ConfigError("material albedo must lie in [0,1]");
  }
  if (specular_strength < 0.0) throw ConfigError("specular strength must be >= 0");
  if (shininess < 1.0) throw ConfigError("shininess must be >= 1");
}

Eigen::Vector3d shade_pixel(const Eigen::Vector3d& normal, const Light& light,
                            const Material& material, const Eigen::Vector3d& view,
                            const Eigen::Vector3d& noise) {
  const double ndl = normal.dot(light.direction);
  Eigen::Vector3d rho = material.albedo;
  if (material.model == Reflectance::kBlinnPhong && material.specular_strength > 0.0) {
    const Eigen::Vector3d half = (light.direction + view).normalized();
    const double ndh = std::max(normal.dot(half), 0.0);
    rho.array() += material.specular_strength * std::pow(ndh, material.shininess);
  }
  const Eigen::Vector3d radiance =
      (rho.array() * light.intensity.array()).matrix() * std::max(ndl, 0.0) + noise;
  return radiance.cwiseMax(0.0);
}

Material Scene::material_at(std::size_t pixel) const {
  return {albedo[pixel], specular_strength, shininess, model};
}

NormalMap Scene::normal_map() const {
  NormalMap map = NormalMap::zeros(mask);
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    if (mask.valid[p]) map.set(p, normals[p]);
  }
  return map;
}

namespace {

struct Grid {
  std::size_t height, width;
  double cx() const { return (static_cast<double>(width) - 1.0) / 2.0; }
  double cy() const { return (static_cast<double>(height) - 1.0) / 2.0; }
  double x(std::size_t col) const { return static_cast<double>(col) - cx(); }
  double y(std::size_t row) const { return cy() - static_cast<double>(row); }
};

double bilinear(const Scene& scene, double row, double col) {
  const std::size_t w = scene.mask.width;
  const std::size_t h = scene.mask.height;
  const double r0f = std::floor(row);
  const double c0f = std::floor(col);
  const std::size_t r0 = static_cast<std::size_t>(r0f);
  const std::size_t c0 = static_cast<std::size_t>(c0f);
  const std::size_t r1 = std::min(r0 + 1, h - 1);
  const std::size_t c1 = std::min(c0 + 1, w - 1);
  const double fr = row - r0f;
  const double fc = col - c0f;
  const auto& d = scene.depth;
  const double top = d[r0 * w + c0] * (1.0 - fc) + d[r0 * w + c1] * fc;
  const double bottom = d[r1 * w + c0] * (1.0 - fc) + d[r1 * w + c1] * fc;
  return top * (1.0 - fr) + bottom * fr;
}

}  // namespace

Scene make_scene(std::string name, std::size_t height, std::size_t width, const ShapeFn& shape,
                 const std::function<bool(double, double)>& inside, const Material& material) {
  material.validate();
  if (height == 0 || width == 0) throw StructuralError("make_scene: empty grid");
  const Grid grid{height, width};
  Scene scene;
  scene.name = std::move(name);
  scene.mask = Mask{height, width, std::vector<unsigned char>(height * width, 0)};
  scene.depth.assign(height * width, 0.0);
  scene.normals.assign(height * width, Eigen::Vector3d::Zero());
  scene.albedo.assign(height * width, material.albedo);
  scene.specular_strength = material.specular_strength;
  scene.shininess = material.shininess;
  scene.model = material.model;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double x = grid.x(c);
      const double y = grid.y(r);
      if (inside && !inside(x, y)) continue;
      const std::size_t p = r * width + c;
      const SurfacePoint s = shape(x, y);
      scene.mask.valid[p] = 1;
      scene.depth[p] = s.z;
      scene.normals[p] = Eigen::Vector3d(-s.dz_dx, -s.dz_dy, 1.0).normalized();
    }
  }
  return scene;
}

Scene make_plane(std::size_t height, std::size_t width, const Material& material) {
  return make_scene(
      "plane", height, width, [](double, double) { return SurfacePoint{0.0, 0.0, 0.0}; }, {},
      material);
}

Scene make_sphere(std::size_t height, std::size_t width, const Material& material,
                  double radius_fraction) {
  const double radius = radius_fraction * static_cast<double>(std::min(height, width)) / 2.0;
  Scene scene = make_scene(
      "sphere", height, width,
      [radius](double x, double y) {
        const double z = std::sqrt(std::max(radius * radius - x * x - y * y, 0.0));
        return SurfacePoint{z, -x / z, -y / z};
      },
      [radius](double x, double y) { return x * x + y * y < radius * radius; }, material);
  // Exact normals: the gradient form loses precision near the rim.
  const Grid grid{height, width};
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t p = r * width + c;
      if (!scene.mask.valid[p]) continue;
      scene.normals[p] = Eigen::Vector3d(grid.x(c), grid.y(r), scene.depth[p]).normalized();
    }
  }
  return scene;
}

Scene make_paraboloid(std::size_t height, std::size_t width, const Material& material,
                      double depth_fraction) {
  const double radius = 0.95 * static_cast<double>(std::min(height, width)) / 2.0;
  const double depth = depth_fraction * radius;
  return make_scene(
      "paraboloid", height, width,
      [radius, depth](double x, double y) {
        const double k = depth / (radius * radius);
        return SurfacePoint{depth - k * (x * x + y * y), -2.0 * k * x, -2.0 * k * y};
      },
      [radius](double x, double y) { return x * x + y * y < radius * radius; }, material);
}

Scene make_wave_relief(std::size_t height, std::size_t width, const Material& material,
                       std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> period(8.0, 24.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  struct Wave {
    double kx, ky, phase;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) {
    const double k = 2.0 * std::numbers::pi / period(rng);
    const double a = angle(rng);
    waves.push_back({k * std::cos(a), k * std::sin(a), angle(rng)});
  }
  return make_scene(
      "wave", height, width,
      [waves, amplitude](double x, double y) {
        SurfacePoint s{amplitude * 1.5, 0.0, 0.0};
        for (const Wave& w : waves) {
          const double arg = w.kx * x + w.ky * y + w.phase;
          s.z += amplitude / 2.0 * std::sin(arg);
          s.dz_dx += amplitude / 2.0 * w.kx * std::cos(arg);
          s.dz_dy += amplitude / 2.0 * w.ky * std::cos(arg);
        }
        return s;
      },
      {}, material);
}

Scene make_pit(std::size_t height, std::size_t width, const Material& material,
               std::size_t pit_size, double pit_depth) {
  const double half = static_cast<double>(pit_size) / 2.0;
  return make_scene(
      "pit", height, width,
      [half, pit_depth](double x, double y) {
        const bool in_pit = std::abs(x) < half && std::abs(y) < half;
        return SurfacePoint{in_pit ? 0.0 : pit_depth, 0.0, 0.0};
      },
      {}, material);
}

bool is_cast_shadowed(const Scene& scene, std::size_t pixel, const Eigen::Vector3d& light) {
  const double horiz = std::hypot(light.x(), light.y());
  if (horiz < 1e-9) return false;
  const Grid grid{scene.mask.height, scene.mask.width};
  const double dx = light.x() / horiz;
  const double dy = light.y() / horiz;
  const double rise = light.z() / horiz;
  const double top = *std::max_element(scene.depth.begin(), scene.depth.end());
  const std::size_t row0 = pixel / scene.mask.width;
  const std::size_t col0 = pixel % scene.mask.width;
  const double x0 = grid.x(col0);
  const double y0 = grid.y(row0);
  const double z0 = scene.depth[pixel];
  const double max_row = static_cast<double>(scene.mask.height - 1);
  const double max_col = static_cast<double>(scene.mask.width - 1);
  for (double t = 0.5;; t += 0.5) {
    const double ray_z = z0 + t * rise;
    if (ray_z > top) return false;
    const double col = x0 + t * dx + grid.cx();
    const double row = grid.cy() - (y0 + t * dy);
    if (col < 0.0 || row < 0.0 || col > max_col || row > max_row) return false;
    if (bilinear(scene, row, col) > ray_z + 1e-9) return true;
  }
}

RenderedCapture render_scene(const Scene& scene, std::span<const Light> lights,
                             const NoiseModel& noise) {
  if (lights.empty()) throw StructuralError("render_scene: at least one light is required");
  if (scene.mask.count() == 0) throw StructuralError("render_scene: scene mask is empty");
  const std::size_t h = scene.mask.height;
  const std::size_t w = scene.mask.width;
  const std::size_t pixels = h * w;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  RenderedCapture out;
  out.images.name = scene.name;
  out.images.mask = scene.mask;
  out.ground_truth = scene.normal_map();
  for (const Light& light : lights) {
    light.validate();
    std::vector<double> img(3 * pixels, 0.0);
    for (std::size_t p = 0; p < pixels; ++p) {
      if (!scene.mask.valid[p]) continue;
      Eigen::Vector3d eps = Eigen::Vector3d::Zero();
      if (noise.sigma > 0.0) {
        for (int c = 0; c < 3; ++c) eps[c] = noise.sigma * gauss(rng);
      }
      Eigen::Vector3d value;
      if (noise.cast_shadows && scene.normals[p].dot(light.direction) > 0.0 &&
          is_cast_shadowed(scene, p, light.direction)) {
        value = eps.cwiseMax(0.0);
      } else {
        value = shade_pixel(scene.normals[p], light, scene.material_at(p), kViewDirection, eps);
      }
      for (int c = 0; c < 3; ++c) img[c * pixels + p] = value[c] / light.intensity[c];
    }
    out.images.images.push_back(Tensor::from_vector({3, h, w}, std::move(img)));
    out.images.lights.push_back(light);
  }
  return out;
}

std::vector<Light> sample_lights(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw StructuralError("sample_lights: count must be at least 1");
  constexpr double kMinCos = 0.5;  // polar angle <= 60 degrees
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phi0 = 2.0 * std::numbers::pi * unit(rng);
  std::vector<Light> lights;
  lights.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double jitter = 0.8 * (unit(rng) - 0.5);
    const double u = (static_cast<double>(k) + 0.5 + jitter) / static_cast<double>(count);
    const double cos_t = 1.0 - (1.0 - kMinCos) * u;
    const double sin_t = std::sqrt(1.0 - cos_t * cos_t);
    const double phi = phi0 + golden * static_cast<double>(k);
    Light light;
    light.direction = Eigen::Vector3d(sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t).normalized();
    lights.push_back(light);
  }
  return lights;
}

Scene random_scene(const SceneDistribution& dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const std::size_t n = dist.size;
  const double half = static_cast<double>(n) / 2.0;

  Material material;
  material.model = dist.model;
  if (dist.model == Reflectance::kBlinnPhong) {
    material.specular_strength = uniform(dist.specular_min, dist.specular_max);
    material.shininess =
        std::exp(uniform(std::log(dist.shininess_min), std::log(dist.shininess_max)));
  }
  const double top = 1.0 - material.specular_strength;
  for (int c = 0; c < 3; ++c) material.albedo[c] = uniform(0.15, top);

  const double kind = unit(rng);
  Scene scene;
  if (kind < 0.15) {
    scene = make_sphere(n, n, material, uniform(0.7, 0.95));
  } else if (kind < 0.25) {
    scene = make_paraboloid(n, n, material, uniform(0.4, 0.9));
  } else if (kind < 0.5) {
    scene = make_wave_relief(n, n, material, rng(), uniform(1.0, 3.0) * half / 16.0);
  } else {
    struct Blob {
      double x, y, height, sigma;
    };
    std::vector<Blob> blobs;
    const int count = 3 + static_cast<int>(unit(rng) * 5.0);
    for (int i = 0; i < count; ++i) {
      const double sigma = uniform(0.12, 0.3) * static_cast<double>(n);
      const double height = (unit(rng) < 0.25 ? -1.0 : 1.0) * uniform(0.6, 1.4) * sigma;
      blobs.push_back({uniform(-half, half), uniform(-half, half), height, sigma});
    }
    scene = make_scene(
        "blobs", n, n,
        [blobs](double x, double y) {
          SurfacePoint s{0.0, 0.0, 0.0};
          for (const Blob& b : blobs) {
            const double dx = x - b.x;
            const double dy = y - b.y;
            const double e = b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
            s.z += e;
            s.dz_dx -= e * dx / (b.sigma * b.sigma);
            s.dz_dy -= e * dy / (b.sigma * b.sigma);
          }
          return s;
        },
        {}, material);
    // Keep the height field nonnegative so the shadow march has a floor.
    const double lowest = *std::min_element(scene.depth.begin(), scene.depth.end());
    for (double& z : scene.depth) z -= lowest;
  }

  // Smooth multiplicative albedo texture in [0.7, 1].
  const double fx = uniform(0.5, 2.0) * 2.0 * std::numbers::pi / static_cast<double>(n);
  const double fy = uniform(0.5, 2.0) * 2.0 * std::numbers::pi / static_cast<double>(n);
  const double ph = uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double t = 0.5 + 0.5 * std::sin(fx * static_cast<double>(c) + ph) *
                                 std::cos(fy * static_cast<double>(r));
      scene.albedo[r * n + c] = material.albedo * (0.7 + 0.3 * t);
    }
  }
  scene.name = scene.name + "_" + std::to_string(seed);
  return scene;
}

}  // namespace msfps
