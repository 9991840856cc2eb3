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

#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "msfps/error.hpp"
#include "msfps/evaluation.hpp"
#include "msfps/l2_solver.hpp"

namespace msfps {
namespace {

Light light_from(Eigen::Vector3d d) {
  Light l;
  l.direction = d.normalized();
  return l;
}

TEST(ShadePixel, LambertianHeadOn) {
  Material m;
  m.albedo = {0.7, 0.7, 0.7};
  const Eigen::Vector3d n(0, 0, 1);
  const Eigen::Vector3d i = shade_pixel(n, light_from(n), m);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(i[c], 0.7);
}

TEST(ShadePixel, AttachedShadowIsZero) {
  Material m;
  m.albedo = {0.9, 0.5, 0.2};
  m.model = Reflectance::kBlinnPhong;
  m.specular_strength = 0.5;
  m.shininess = 5.0;
  const Eigen::Vector3d n = Eigen::Vector3d(1, 0, -0.2).normalized();
  const Eigen::Vector3d i = shade_pixel(n, light_from({-1, 0, 0.3}), m);
  EXPECT_EQ(i, Eigen::Vector3d::Zero());
}

TEST(ShadePixel, BlinnPhongClosedForm) {
  Material m;
  m.albedo = {0.3, 0.4, 0.5};
  m.model = Reflectance::kBlinnPhong;
  m.specular_strength = 0.35;
  m.shininess = 17.0;
  const Light l = light_from({0.3, -0.2, 0.9});
  // n = h: the specular factor is exactly specular_strength
  const Eigen::Vector3d h = (l.direction + Eigen::Vector3d(0, 0, 1)).normalized();
  const Eigen::Vector3d ih = shade_pixel(h, l, m);
  const double ndl = h.dot(l.direction);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(ih[c], (m.albedo[c] + 0.35) * ndl, 1e-13);

  const Eigen::Vector3d n = Eigen::Vector3d(-0.1, 0.25, 1.0).normalized();
  const double lx = l.direction.x(), ly = l.direction.y(), lz = l.direction.z();
  const double hx = lx, hy = ly, hz = lz + 1.0;
  const double hn = std::sqrt(hx * hx + hy * hy + hz * hz);
  const double ndh = (n.x() * hx + n.y() * hy + n.z() * hz) / hn;
  const double nl = n.x() * lx + n.y() * ly + n.z() * lz;
  const Eigen::Vector3d in = shade_pixel(n, l, m);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(in[c], (m.albedo[c] + 0.35 * std::pow(ndh, 17.0)) * nl, 1e-14);
  }
}

TEST(ShadePixel, NoiseClampsAtZero) {
  Material m;
  const Eigen::Vector3d n(0, 0, 1);
  const Eigen::Vector3d i = shade_pixel(n, light_from(n), m, kViewDirection, {-5.0, 0.1, 0.0});
  EXPECT_EQ(i[0], 0.0);
  EXPECT_DOUBLE_EQ(i[1], 0.6);
}

TEST(RenderScene, FlatPlaneHeadOn) {
  Material m;
  m.albedo = {1, 1, 1};
  const auto cap = render_scene(make_plane(5, 6, m), std::vector<Light>{light_from({0, 0, 1})});
  ASSERT_EQ(cap.images.count(), 1u);
  for (double v : cap.images.images[0].data()) EXPECT_EQ(v, 1.0);
}

TEST(RenderScene, NonNegativeAndAttachedShadows) {
  Material m;
  m.albedo = {0.8, 0.6, 0.4};
  m.model = Reflectance::kBlinnPhong;
  m.specular_strength = 0.2;
  m.shininess = 30.0;
  const Scene s = make_wave_relief(24, 24, m, 3, 4.0);
  const auto lights = sample_lights(12, 2);
  const auto cap = render_scene(s, lights, {0.05, false, 9});
  for (const Tensor& img : cap.images.images) {
    for (double v : img.data()) EXPECT_GE(v, 0.0);
  }
  const auto clean = render_scene(s, lights);
  const std::size_t px = 24 * 24;
  for (std::size_t k = 0; k < lights.size(); ++k) {
    for (std::size_t p = 0; p < px; ++p) {
      if (s.mask.valid[p] && s.normals[p].dot(lights[k].direction) <= 0.0) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(clean.images.images[k].data()[c * px + p], 0.0);
      }
    }
  }
}

TEST(RenderScene, LinearInAlbedo) {
  Material m;
  m.albedo = {0.4, 0.3, 0.2};
  Material m2 = m;
  m2.albedo *= 2.0;
  const auto lights = sample_lights(6, 4);
  const auto a = render_scene(make_sphere(16, 16, m), lights);
  const auto b = render_scene(make_sphere(16, 16, m2), lights);
  for (std::size_t k = 0; k < lights.size(); ++k) {
    for (std::size_t i = 0; i < a.images.images[k].numel(); ++i) {
      EXPECT_NEAR(b.images.images[k].data()[i], 2.0 * a.images.images[k].data()[i], 1e-15);
    }
  }
}

TEST(RenderScene, EmptyMaskOrNoLightsAreStructuralErrors) {
  Scene s = make_plane(4, 4, Material{});
  EXPECT_THROW(render_scene(s, std::vector<Light>{}), StructuralError);
  s.mask.valid.assign(16, 0);
  EXPECT_THROW(render_scene(s, sample_lights(1, 0)), StructuralError);
}

TEST(RenderScene, SphereInvertsThroughL2Solver) {
  Material m;
  m.albedo = {0.6, 0.6, 0.6};
  const Scene s = make_sphere(32, 32, m);
  // tilt the orthonormal frame so every light has z > 0
  Eigen::Matrix3d rot;
  rot = Eigen::AngleAxisd(std::atan(std::sqrt(2.0)), Eigen::Vector3d(1, -1, 0).normalized());
  std::vector<Light> lights;
  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d d = rot * eye.col(k);
    ASSERT_GT(d.z(), 0.0);
    lights.push_back(light_from(d));
  }
  const auto cap = render_scene(s, lights);
  const L2Solution sol = solve_l2(cap.images);
  Mask lit = s.mask;
  for (std::size_t p = 0; p < lit.pixels(); ++p) {
    for (const Light& l : lights) {
      if (s.normals[p].dot(l.direction) <= 0.0) lit.valid[p] = 0;
    }
  }
  ASSERT_GT(lit.count(), 50u);
  NormalMap gt = s.normal_map();
  gt.mask = lit;
  EXPECT_LT(evaluate(sol.normals, gt).mae_deg, 0.1);
}

TEST(CastShadows, PitShadowsLitPixels) {
  Material m;
  m.albedo = {0.7, 0.7, 0.7};
  const Scene s = make_pit(24, 24, m, 8, 6.0);
  const Light l = light_from({0.8, 0.0, 0.6});
  const auto cap = render_scene(s, std::vector<Light>{l}, {0.0, true, 0});
  std::size_t shadowed = 0;
  for (std::size_t p = 0; p < s.mask.pixels(); ++p) {
    const double ndl = s.normals[p].dot(l.direction);
    if (ndl > 0.0 && cap.images.images[0].data()[p] == 0.0) {
      ++shadowed;
      EXPECT_TRUE(is_cast_shadowed(s, p, l.direction));
    }
  }
  EXPECT_GE(shadowed, 1u);
  // a flat plate casts nothing
  const Scene flat = make_plane(8, 8, m);
  for (std::size_t p = 0; p < 64; ++p) EXPECT_FALSE(is_cast_shadowed(flat, p, l.direction));
}

TEST(SampleLights, CountDeterminismAndSpread) {
  const auto one = sample_lights(1, 5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR(one[0].direction.norm(), 1.0, 1e-12);
  EXPECT_THROW(sample_lights(0, 1), StructuralError);

  const auto a = sample_lights(96, 7);
  const auto b = sample_lights(96, 7);
  ASSERT_EQ(a.size(), 96u);
  double min_angle = 180.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].direction, b[i].direction);
    EXPECT_NO_THROW(a[i].validate());
    EXPECT_GE(a[i].direction.z(), 0.5 - 1e-12);  // polar angle <= 60 degrees
    for (std::size_t j = 0; j < i; ++j) {
      const double c = std::clamp(a[i].direction.dot(a[j].direction), -1.0, 1.0);
      min_angle = std::min(min_angle, std::acos(c) * 180.0 / std::numbers::pi);
    }
  }
  EXPECT_GT(min_angle, 2.0);
}

TEST(Scenes, UnitNormalsOnMask) {
  SceneDistribution dist;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Scene s = random_scene(dist, seed);
    ASSERT_GT(s.mask.count(), 0u);
    for (std::size_t p = 0; p < s.mask.pixels(); ++p) {
      if (s.mask.valid[p]) {
        EXPECT_NEAR(s.normals[p].norm(), 1.0, 1e-12);
      }
      EXPECT_GE(s.albedo[p].minCoeff(), 0.0);
    }
    EXPECT_NO_THROW(s.normal_map().validate());
  }
  const Scene again = random_scene(dist, 5);
  EXPECT_EQ(again.depth, random_scene(dist, 5).depth);
}

}  // namespace
}  // namespace msfps
