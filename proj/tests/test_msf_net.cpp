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


#include "msfps/msf_net.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "msfps/error.hpp"
#include "msfps/photometric.hpp"
#include "test_util.hpp"

namespace msfps {
namespace {

using testing::random_tensor;
using testing::TempDir;
using testing::values;

MsfConfig small_config(std::uint64_t seed = 3) {
  MsfConfig c;
  c.base_channels = 6;
  c.extractor_depth = 2;
  c.seed = seed;
  return c;
}

ImageSet scene_set(std::size_t lights, std::size_t size = 10, std::uint64_t seed = 5) {
  SceneDistribution dist;
  dist.size = size;
  return render_scene(random_scene(dist, seed), sample_lights(lights, seed)).images;
}

TEST(MsfNet, StageShapes) {
  MsfModel model(small_config());
  const ImageSet set = scene_set(4);
  const Tensor in = model.encode_input(set);
  EXPECT_EQ(in.shape(), (Shape{4, 6, 10, 10}));
  const Tensor f = model.extract_stage(in, Stage::kShallow);
  EXPECT_EQ(f.shape(), (Shape{4, 6, 10, 10}));
  const Tensor fused = model.fuse(f, 0, {});
  EXPECT_EQ(fused.shape(), (Shape{4, 12, 10, 10}));
  EXPECT_EQ(model.extract_stage(fused, Stage::kMiddle).shape(), (Shape{4, 6, 10, 10}));
  EXPECT_THROW(model.extract_stage(f, Stage::kMiddle), StructuralError);

  const auto out = model.forward(set);
  for (const auto& s : out) {
    EXPECT_EQ(s.features.shape(), (Shape{4, 6, 10, 10}));
    EXPECT_EQ(s.pooled.shape(), (Shape{6, 10, 10}));
    EXPECT_EQ(s.normals.shape(), (Shape{3, 10, 10}));
  }
  EXPECT_TRUE(out[0].fused.defined());
  EXPECT_TRUE(out[1].fused.defined());
  EXPECT_FALSE(out[2].fused.defined());
}

TEST(MsfNet, SingleImageRunsAndMinimalSet) {
  MsfModel model(small_config());
  const ImageSet one = scene_set(1);
  const auto out = model.forward(one);
  EXPECT_EQ(out[2].features.shape()[0], 1u);
  EXPECT_NO_THROW(model.predict(scene_set(3)).validate(1e-9));
}

TEST(MsfNet, EncodingCarriesLightsAndMask) {
  MsfConfig cfg = small_config();
  cfg.normalize_input = false;
  MsfModel model(cfg);
  ImageSet set = scene_set(2);
  const Tensor in = model.encode_input(set);
  const std::size_t px = set.mask.pixels();
  const auto d = in.data();
  for (std::size_t p = 0; p < px; ++p) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t base = k * 6 * px;
      if (!set.mask.valid[p]) {
        for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(d[base + c * px + p], 0.0);
        continue;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(d[base + c * px + p], set.images[k].data()[c * px + p]);
        EXPECT_EQ(d[base + (3 + c) * px + p], set.lights[k].direction[static_cast<int>(c)]);
      }
    }
  }
}

void expect_bitwise(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  EXPECT_EQ(values(a), values(b));
}

TEST(Fusion, ForcedGatesMatchClosedForms) {
  MsfModel model(small_config());
  const Tensor f = random_tensor({3, 6, 5, 4}, 17);
  const Tensor fm = max_over_set(f);
  std::vector<Tensor> pooled(3, fm);
  const Tensor fm_set = stack(pooled);

  ForwardOptions zero;
  zero.gate_override = 0.0;
  expect_bitwise(model.fuse(f, 0, zero), concat_channels(f, f));

  ForwardOptions one;
  one.gate_override = 1.0;
  expect_bitwise(model.fuse(f, 0, one), concat_channels(fm_set, f));
  expect_bitwise(model.fuse(f, 1, one), concat_channels(fm_set, f));
}

TEST(Fusion, SingleElementSetIsIdentityBlend) {
  MsfModel model(small_config());
  const Tensor f = random_tensor({1, 6, 4, 4}, 23);
  for (std::optional<double> g : {std::optional<double>{}, std::optional<double>{0.3}}) {
    ForwardOptions opt;
    opt.gate_override = g;
    expect_bitwise(model.fuse(f, 0, opt), concat_channels(f, f));
  }
}

TEST(Fusion, BlendLiesBetweenFeatureAndPool) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MsfModel model(small_config(seed));
    const Tensor f = random_tensor({4, 6, 5, 5}, 100 + seed, -3.0, 3.0);
    Tensor gate;
    const Tensor out = model.fuse(f, static_cast<int>(seed % 2), {}, &gate);
    const Tensor fm = max_over_set(f);
    const std::size_t per = 6 * 25;
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t i = 0; i < per; ++i) {
        const double fi = f.data()[k * per + i];
        const double mi = fm.data()[i];
        const double blend = out.data()[k * 2 * per + i];
        EXPECT_GE(blend, std::min(fi, mi));
        EXPECT_LE(blend, std::max(fi, mi));
        EXPECT_EQ(out.data()[k * 2 * per + per + i], fi);
      }
    }
    for (double g : gate.data()) {
      EXPECT_GE(g, 0.0);
      EXPECT_LE(g, 1.0);
    }
  }
}

TEST(Fusion, DisabledFusionConcatenatesPool) {
  MsfConfig cfg = small_config();
  cfg.use_fusion = false;
  MsfModel model(cfg);
  EXPECT_EQ(model.group("fusion_1").numel(), 0u);
  const Tensor f = random_tensor({3, 6, 4, 4}, 31);
  std::vector<Tensor> pooled(3, max_over_set(f));
  expect_bitwise(model.fuse(f, 0, {}), concat_channels(stack(pooled), f));
}

TEST(MsfNet, UnitNormalsForRandomWeights) {
  const ImageSet set = scene_set(5, 12);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    MsfModel model(small_config(seed));
    for (const auto& s : model.forward(set)) {
      const NormalMap map = s.normal_map(set.mask);
      EXPECT_NO_THROW(map.validate(1e-9));
    }
  }
}

TEST(MsfNet, RegressionNormalizesAndFallsBack) {
  MsfModel model(small_config());
  ParamGroup& head = model.group(model.regression_group(Stage::kDeep));
  for (auto& p : head.params) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0);
  // out.bias = (0,0,2) makes every raw output (0,0,2)
  Tensor& bias = const_cast<Tensor&>(head.get("out.bias"));
  bias.mutable_data()[2] = 2.0;
  const Mask mask = Mask::full(3, 3);
  std::vector<unsigned char> flags;
  const Tensor pooled = random_tensor({6, 3, 3}, 2);
  Tensor n = model.regress_normals(pooled, Stage::kDeep, mask, &flags);
  for (std::size_t p = 0; p < 9; ++p) {
    EXPECT_EQ(n.data()[p], 0.0);
    EXPECT_EQ(n.data()[9 + p], 0.0);
    EXPECT_EQ(n.data()[18 + p], 1.0);
    EXPECT_EQ(flags[p], 0);
  }
  bias.mutable_data()[2] = 0.0;
  n = model.regress_normals(pooled, Stage::kDeep, mask, &flags);
  for (std::size_t p = 0; p < 9; ++p) {
    EXPECT_EQ(n.data()[18 + p], 1.0);
    EXPECT_EQ(flags[p], 1);
  }
}

TEST(MsfNet, PermutationInvariance) {
  const ImageSet set = scene_set(6, 12, 9);
  MsfModel model(small_config(4));
  const auto base = model.forward(set);
  for (const std::vector<std::size_t>& order :
       {std::vector<std::size_t>{5, 4, 3, 2, 1, 0}, std::vector<std::size_t>{2, 0, 5, 1, 3, 4}}) {
    const auto perm = model.forward(set.subset(order));
    for (std::size_t s = 0; s < 3; ++s) expect_bitwise(perm[s].normals, base[s].normals);
  }
}

TEST(MsfNet, ExtractorNeverMixesImages) {
  MsfModel model(small_config());
  const ImageSet set = scene_set(3);
  const Tensor in = model.encode_input(set);
  const Tensor a = model.extract_stage(in, Stage::kShallow);
  const std::size_t per = in.numel() / 3;
  Tensor changed = Tensor::from_vector(in.shape(), values(in));
  for (std::size_t i = 2 * per; i < 3 * per; ++i) changed.mutable_data()[i] += 0.25;
  const Tensor b = model.extract_stage(changed, Stage::kShallow);
  const std::size_t out_per = a.numel() / 3;
  for (std::size_t i = 0; i < 2 * out_per; ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
  bool differs = false;
  for (std::size_t i = 2 * out_per; i < 3 * out_per; ++i) differs |= a.data()[i] != b.data()[i];
  EXPECT_TRUE(differs);
}

TEST(MsfNet, ResidualStagesAddPreviousFeatures) {
  MsfConfig on = small_config(6);
  on.residual_stages = true;
  MsfConfig off = on;
  off.residual_stages = false;
  MsfModel a(on), b(off);
  ASSERT_EQ(values(a.group("middle_extractor").params[0].value),
            values(b.group("middle_extractor").params[0].value));
  const Tensor x = random_tensor({3, 12, 5, 5}, 31);
  for (Stage s : {Stage::kMiddle, Stage::kDeep}) {
    expect_bitwise(a.extract_stage(x, s), add(b.extract_stage(x, s), slice_channels(x, 6, 12)));
  }
  const Tensor in = random_tensor({3, 6, 5, 5}, 32);
  expect_bitwise(a.extract_stage(in, Stage::kShallow), b.extract_stage(in, Stage::kShallow));
}

TEST(MsfNet, GroupLayout) {
  MsfModel model{MsfConfig{}};
  EXPECT_EQ(model.group_names(),
            (std::vector<std::string>{"shallow_extractor", "middle_extractor", "deep_extractor",
                                      "fusion_1", "fusion_2", "regression"}));
  EXPECT_EQ(model.regression_group(Stage::kMiddle), "regression");
  EXPECT_THROW(model.group("nope"), ConfigError);

  MsfConfig heads;
  heads.per_stage_heads = true;
  heads.share_fusion = true;
  MsfModel m2(heads);
  EXPECT_EQ(m2.regression_group(Stage::kShallow), "regression_shallow");
  EXPECT_EQ(m2.group("fusion_2").numel(), 0u);
}

TEST(MsfNet, SeededInitialization) {
  MsfModel a(small_config(1)), b(small_config(1)), c(small_config(2));
  EXPECT_EQ(values(a.group("middle_extractor").get("conv1.weight")),
            values(b.group("middle_extractor").get("conv1.weight")));
  EXPECT_NE(values(a.group("middle_extractor").get("conv1.weight")),
            values(c.group("middle_extractor").get("conv1.weight")));
}

TEST(MsfNet, CloneIsDeep) {
  MsfModel a(small_config());
  MsfModel b = a.clone();
  auto w = a.group("shallow_extractor").params[0].value.mutable_data();
  w[0] += 1.0;
  EXPECT_NE(b.group("shallow_extractor").params[0].value.data()[0], w[0]);
}

TEST(MsfNet, ConfigValidation) {
  MsfConfig c;
  c.kernel_size = 4;
  EXPECT_THROW(MsfModel{c}, ConfigError);
  c = MsfConfig{};
  c.base_channels = 0;
  EXPECT_THROW(MsfModel{c}, ConfigError);
  c = MsfConfig{};
  c.extractor_depth = 0;
  EXPECT_THROW(MsfModel{c}, ConfigError);
}

TEST(Checkpoint, BitwiseRoundTrip) {
  TempDir dir("ckpt");
  MsfConfig cfg = small_config(8);
  cfg.per_stage_heads = true;
  cfg.inference_norm = NormMode::kEval;
  MsfModel model(cfg);
  // populate running statistics
  ForwardOptions train;
  train.mode = NormMode::kTrain;
  model.forward(scene_set(3), train);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(path, model);
  const MsfModel back = load_checkpoint(path);
  EXPECT_EQ(back.config().per_stage_heads, true);
  EXPECT_EQ(back.config().inference_norm, NormMode::kEval);
  EXPECT_EQ(back.config().seed, 8u);
  ASSERT_EQ(back.group_names(), model.group_names());
  for (std::size_t g = 0; g < model.groups().size(); ++g) {
    const ParamGroup& x = model.groups()[g];
    const ParamGroup& y = back.groups()[g];
    ASSERT_EQ(x.params.size(), y.params.size());
    for (std::size_t p = 0; p < x.params.size(); ++p) {
      EXPECT_EQ(x.params[p].name, y.params[p].name);
      EXPECT_EQ(x.params[p].value.shape(), y.params[p].value.shape());
      EXPECT_EQ(values(x.params[p].value), values(y.params[p].value));
    }
  }
  for (const auto& [name, stats] : model.buffers()) {
    EXPECT_EQ(values(stats.running_mean), values(back.buffers().at(name).running_mean));
    EXPECT_EQ(values(stats.running_var), values(back.buffers().at(name).running_var));
  }
  // the saved file is reproduced byte for byte
  save_checkpoint(dir.path() / "again.ckpt", back);
  std::ifstream f1(path, std::ios::binary), f2(dir.path() / "again.ckpt", std::ios::binary);
  const std::string s1{std::istreambuf_iterator<char>(f1), {}};
  const std::string s2{std::istreambuf_iterator<char>(f2), {}};
  EXPECT_EQ(s1, s2);
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
  TempDir dir("corrupt");
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(path, MsfModel(small_config()));
  std::ifstream in(path, std::ios::binary);
  std::string bytes{std::istreambuf_iterator<char>(in), {}};
  in.close();
  std::ofstream(dir.path() / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(dir.path() / "short.ckpt"), DataError);
  std::ofstream(dir.path() / "long.ckpt", std::ios::binary) << bytes << "x";
  EXPECT_THROW(load_checkpoint(dir.path() / "long.ckpt"), DataError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir.path() / "magic.ckpt", std::ios::binary) << bad;
  EXPECT_THROW(load_checkpoint(dir.path() / "magic.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir.path() / "absent.ckpt"), DataError);
}

}  // namespace
}  // namespace msfps
