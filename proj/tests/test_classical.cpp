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


#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "msfps/error.hpp"
#include "msfps/evaluation.hpp"
#include "msfps/l2_solver.hpp"
#include "msfps/photometric.hpp"
#include "msfps/preprocess.hpp"

namespace msfps {
namespace {

ImageSet constant_set(const std::vector<double>& per_image, std::size_t h = 2, std::size_t w = 2) {
  ImageSet set;
  set.mask = Mask::full(h, w);
  const auto lights = sample_lights(per_image.size(), 4);
  for (std::size_t k = 0; k < per_image.size(); ++k) {
    set.images.push_back(Tensor::full({3, h, w}, per_image[k]));
    set.lights.push_back(lights[k]);
  }
  return set;
}

Light light_from(const Eigen::Vector3d& d) {
  Light l;
  l.direction = d.normalized();
  return l;
}

// Pixels lit by every light.
Mask unshadowed(const Scene& scene, std::span<const Light> lights) {
  Mask m = scene.mask;
  for (std::size_t p = 0; p < m.pixels(); ++p) {
    if (!m.valid[p]) continue;
    for (const Light& l : lights) {
      if (scene.normals[p].dot(l.direction) <= 1e-6) m.valid[p] = 0;
    }
  }
  return m;
}

double restricted_mae(const NormalMap& pred, const NormalMap& gt, const Mask& region) {
  NormalMap g = gt;
  g.mask = region;
  return evaluate(pred, g).mae_deg;
}

TEST(Normalize, PythagoreanTriple) {
  const ImageSet out = normalize_observations(constant_set({3.0, 4.0}), 0.0);
  for (double v : out.images[0].data()) EXPECT_DOUBLE_EQ(v, 0.6);
  for (double v : out.images[1].data()) EXPECT_DOUBLE_EQ(v, 0.8);
}

TEST(Normalize, ConstantPixelsMapToInverseRootN) {
  for (std::size_t n : {1u, 3u, 10u, 96u}) {
    const ImageSet out = normalize_observations(constant_set(std::vector<double>(n, 0.37)));
    const double expect = 1.0 / std::sqrt(static_cast<double>(n));
    for (const Tensor& img : out.images) {
      for (double v : img.data()) EXPECT_NEAR(v, expect, 1e-9);
    }
  }
}

TEST(Normalize, ScaleInvariance) {
  SceneDistribution dist;
  dist.size = 16;
  const auto cap = render_scene(random_scene(dist, 3), sample_lights(10, 3));
  const ImageSet base = normalize_observations(cap.images);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    ImageSet scaled = cap.images;
    for (Tensor& img : scaled.images) {
      for (double& v : img.mutable_data()) v *= c;
    }
    const ImageSet out = normalize_observations(scaled);
    for (std::size_t k = 0; k < out.count(); ++k) {
      const auto a = base.images[k].data();
      const auto b = out.images[k].data();
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-9) << "c=" << c;
    }
  }
}

TEST(Normalize, UnitNormAndMaskAndDarkPixels) {
  ImageSet set = constant_set({0.2, 0.0, 0.5}, 2, 3);
  set.mask.valid[4] = 0;
  for (Tensor& img : set.images) img.mutable_data()[5] = 0.0;  // all-dark pixel, channel 0
  const ImageSet out = normalize_observations(set);
  const std::size_t px = set.mask.pixels();
  for (std::size_t j = 0; j < 3 * px; ++j) {
    double s = 0.0;
    for (const Tensor& img : out.images) s += img.data()[j] * img.data()[j];
    if (!set.mask.valid[j % px] || j == 5) {
      EXPECT_EQ(s, 0.0) << j;
    } else {
      EXPECT_NEAR(s, 1.0, 1e-12) << j;
    }
  }
  EXPECT_THROW(normalize_observations(set, -1.0), ConfigError);
}

TEST(Normalize, Idempotent) {
  const ImageSet once = normalize_observations(constant_set({0.1, 0.9, 0.4}), 0.0);
  const ImageSet twice = normalize_observations(once, 0.0);
  for (std::size_t k = 0; k < once.count(); ++k) {
    for (std::size_t i = 0; i < once.images[k].numel(); ++i) {
      EXPECT_NEAR(once.images[k].data()[i], twice.images[k].data()[i], 1e-15);
    }
  }
}

TEST(Normalize, AlbedoInvarianceOnLambertianRenders) {
  const auto lights = sample_lights(10, 8);
  Scene a = make_wave_relief(24, 24, Material{}, 5);
  Scene b = a;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::size_t p = 0; p < a.albedo.size(); ++p) {
    a.albedo[p] = {u(rng), u(rng), u(rng)};
    b.albedo[p] = {u(rng), u(rng), u(rng)};
  }
  const ImageSet na = normalize_observations(render_scene(a, lights).images, 0.0);
  const ImageSet nb = normalize_observations(render_scene(b, lights).images, 0.0);
  for (std::size_t k = 0; k < na.count(); ++k) {
    const auto x = na.images[k].data();
    const auto y = nb.images[k].data();
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(x[i], y[i], 1e-9);
  }
}

TEST(L2Solver, OrthonormalLightsInvertExactly) {
  // three orthonormal lights tilted so that each has z > 0
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(std::atan(std::sqrt(2.0)), Eigen::Vector3d(1, -1, 0).normalized())
          .toRotationMatrix();
  std::vector<Light> lights;
  for (int k = 0; k < 3; ++k) {
    lights.push_back(light_from(rot * Eigen::Vector3d::Unit(k)));
    ASSERT_GT(lights.back().direction.z(), 0.0);
  }
  Material mat;
  mat.albedo = {0.8, 0.6, 0.7};
  // normal inside the cone spanned by the lights, so every light sees it
  const Eigen::Vector3d n = (0.5 * lights[0].direction + 0.3 * lights[1].direction +
                             0.2 * lights[2].direction).normalized();
  ImageSet set;
  set.mask = Mask::full(1, 1);
  for (const Light& l : lights) {
    const Eigen::Vector3d v = shade_pixel(n, l, mat);
    set.images.push_back(Tensor::from_vector({3, 1, 1}, {v[0], v[1], v[2]}));
    set.lights.push_back(l);
  }
  const L2Solution sol = solve_l2(set);
  EXPECT_LT((sol.normals.at(0) - n).norm(), 1e-12);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(sol.albedo.data()[c], mat.albedo[c], 1e-12);
  EXPECT_NEAR(sol.condition_number, 1.0, 1e-9);
}

TEST(L2Solver, LambertianSphereTenLights) {
  const auto lights = sample_lights(10, 1);
  const Scene sphere = make_sphere(64, 64, Material{});
  const auto cap = render_scene(sphere, lights);
  const Mask region = unshadowed(sphere, lights);
  ASSERT_GT(region.count(), 500u);
  const L2Solution sol = solve_l2(cap.images);
  EXPECT_LT(restricted_mae(sol.normals, cap.ground_truth, region), 0.1);
  for (std::size_t p = 0; p < region.pixels(); ++p) {
    if (!region.valid[p]) continue;
    EXPECT_LT(sol.residual.data()[p], 1e-9);
  }
  EXPECT_NO_THROW(sol.normals.validate(1e-12));
}

TEST(L2Solver, SpecularIsStrictlyWorse) {
  const auto lights = sample_lights(10, 1);
  Material spec;
  spec.model = Reflectance::kBlinnPhong;
  spec.specular_strength = 0.5;
  spec.shininess = 30.0;
  const Scene lam = make_sphere(64, 64, Material{});
  const Scene shiny = make_sphere(64, 64, spec);
  const Mask region = unshadowed(lam, lights);
  const auto a = render_scene(lam, lights);
  const auto b = render_scene(shiny, lights);
  const double mae_lam = restricted_mae(solve_l2(a.images).normals, a.ground_truth, region);
  const double mae_spec = restricted_mae(solve_l2(b.images).normals, b.ground_truth, region);
  EXPECT_GT(mae_spec, mae_lam);
  EXPECT_GT(mae_spec, 0.5);
}

TEST(L2Solver, PermutationAndScaling) {
  SceneDistribution dist;
  dist.size = 16;
  const auto cap = render_scene(random_scene(dist, 11), sample_lights(12, 11));
  const L2Solution base = solve_l2(cap.images);

  std::vector<std::size_t> order(12);
  for (std::size_t i = 0; i < 12; ++i) order[i] = (i * 5) % 12;
  const L2Solution perm = solve_l2(cap.images.subset(order));
  ASSERT_EQ(perm.normals.mask, base.normals.mask);
  for (std::size_t p = 0; p < base.normals.mask.pixels(); ++p) {
    if (!base.normals.mask.valid[p]) continue;
    EXPECT_LT((perm.normals.at(p) - base.normals.at(p)).norm(), 1e-10);
  }

  ImageSet scaled = cap.images;
  const double c = 3.5;
  for (Tensor& img : scaled.images) {
    for (double& v : img.mutable_data()) v *= c;
  }
  const L2Solution sc = solve_l2(scaled);
  for (std::size_t p = 0; p < base.normals.mask.pixels(); ++p) {
    if (!base.normals.mask.valid[p]) continue;
    EXPECT_LT((sc.normals.at(p) - base.normals.at(p)).norm(), 1e-10);
  }
  for (std::size_t i = 0; i < base.albedo.numel(); ++i) {
    EXPECT_NEAR(sc.albedo.data()[i], c * base.albedo.data()[i], 1e-9);
  }
}

TEST(L2Solver, Errors) {
  const auto cap = render_scene(make_sphere(8, 8, Material{}), sample_lights(3, 2));
  try {
    solve_l2(cap.images.subset({0, 1}));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("need ≥ 3 images"), std::string::npos);
  }
  ImageSet coplanar = cap.images;
  coplanar.lights[1] = coplanar.lights[0];
  coplanar.lights[2] = coplanar.lights[0];
  try {
    solve_l2(coplanar);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("condition number"), std::string::npos);
  }
}

TEST(L2Solver, DarkPixelsLeaveTheMask) {
  ImageSet set = constant_set({0.5, 0.5, 0.5, 0.5}, 1, 2);
  for (Tensor& img : set.images) {
    for (int c = 0; c < 3; ++c) img.mutable_data()[static_cast<std::size_t>(c) * 2 + 1] = 0.0;
  }
  const L2Solution sol = solve_l2(set);
  EXPECT_EQ(sol.normals.mask.valid[0], 1);
  EXPECT_EQ(sol.normals.mask.valid[1], 0);
}

TEST(L2Solver, TrimRejectsShadowedObservations) {
  const auto lights = sample_lights(16, 6);
  const Scene sphere = make_sphere(48, 48, Material{});
  const auto cap = render_scene(sphere, lights);
  L2Options trim;
  trim.trim = true;
  const double plain = evaluate(solve_l2(cap.images).normals, cap.ground_truth).mae_deg;
  const double trimmed = evaluate(solve_l2(cap.images, trim).normals, cap.ground_truth).mae_deg;
  EXPECT_LT(trimmed, plain);
}

}  // namespace
}  // namespace msfps
