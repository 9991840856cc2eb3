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


#include "msfps/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "msfps/error.hpp"
#include "msfps/msf_net.hpp"
#include "msfps/photometric.hpp"
#include "msfps/training.hpp"
#include "test_util.hpp"

namespace msfps {
namespace {

TEST(FiniteDiffCheck, SumIsExact) {
  // dyadic step and integer entries keep every sum exact
  std::vector<double> v{1, -2, 3, 7, 0, 5};
  const Tensor x = Tensor::from_vector({2, 3}, v, true);
  GradCheckOptions opts;
  opts.step = std::ldexp(1.0, -20);
  const auto r = finite_diff_check([&] { return sum(x); }, {x}, opts);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.entries.size(), 6u);

  const Tensor y = testing::random_tensor({4, 5}, 1, -1, 1, true);
  const auto r2 = finite_diff_check([&] { return sum(y); }, {y});
  EXPECT_LT(r2.max_rel_error, 1e-9);
}

TEST(FiniteDiffCheck, RejectsNonPositiveStep) {
  const Tensor x = Tensor::zeros({2}, true);
  GradCheckOptions opts;
  opts.step = 0.0;
  EXPECT_THROW(finite_diff_check([&] { return sum(x); }, {x}, opts), StructuralError);
}

TEST(FiniteDiffCheck, NonFiniteValueIsDiagnosed) {
  const Tensor x = Tensor::from_vector({1}, {std::numeric_limits<double>::infinity()}, true);
  const auto r = finite_diff_check([&] { return sum(mul(x, x)); }, {x});
  EXPECT_FALSE(r.finite);
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.diagnostic.empty());
}

TEST(FiniteDiffCheck, DetectsWrongGradient) {
  // sigmoid evaluated far from the probe point: analytic and numeric agree,
  // so corrupt the function between calls to see the check fail
  const Tensor x = testing::random_tensor({3}, 2, -1, 1, true);
  int calls = 0;
  const auto r = finite_diff_check(
      [&] {
        ++calls;
        const double bump = calls > 1 ? 1e-3 * calls : 0.0;
        return add(sum(mul(x, x)), Tensor::scalar(bump));
      },
      {x});
  EXPECT_FALSE(r.passed);
}

TEST(FiniteDiffCheck, FullToyNetworkOnSmallScene) {
  MsfConfig cfg;
  cfg.seed = 3;
  MsfModel model(cfg);
  Material mat;
  mat.albedo = {0.6, 0.5, 0.4};
  mat.model = Reflectance::kBlinnPhong;
  mat.specular_strength = 0.3;
  mat.shininess = 20.0;
  const Scene scene = make_sphere(4, 4, mat, 1.4);
  const auto capture = render_scene(scene, sample_lights(4, 5));
  std::vector<Tensor> wrt;
  for (auto& g : model.groups()) {
    for (auto& p : g.params) wrt.push_back(p.value);
  }
  GradCheckOptions opts;
  opts.max_entries_per_tensor = 4;
  opts.seed = 11;
  const auto r = finite_diff_check(
      [&] {
        ForwardOptions fwd;
        fwd.mode = NormMode::kBatch;
        const auto out = model.forward(capture.images, fwd);
        return staged_loss(out, capture.ground_truth, {0.5, 0.5, 1.0}).total;
      },
      wrt, opts);
  EXPECT_TRUE(r.passed) << "max rel error " << r.max_rel_error << " " << r.diagnostic;
}

}  // namespace
}  // namespace msfps
