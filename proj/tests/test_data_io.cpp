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


#include "msfps/capture_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "msfps/error.hpp"
#include "msfps/evaluation.hpp"
#include "msfps/photometric.hpp"
#include "test_util.hpp"

namespace msfps {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

RenderedCapture small_capture(std::size_t lights, std::uint64_t seed = 1) {
  SceneDistribution dist;
  dist.size = 12;
  return render_scene(random_scene(dist, seed), sample_lights(lights, seed));
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

TEST(CaptureIo, SaveLoadRoundTrip) {
  TempDir dir("roundtrip");
  auto cap = small_capture(5);
  cap.images.lights[2].intensity = {0.5, 2.0, 1.25};
  save_capture(dir.path(), cap.images, &cap.ground_truth);
  const LoadedCapture back = load_capture(dir.path());
  ASSERT_EQ(back.images.count(), 5u);
  EXPECT_TRUE(back.warnings.empty());
  EXPECT_EQ(back.images.mask, cap.images.mask);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(back.images.lights[k].direction, cap.images.lights[k].direction);
    EXPECT_EQ(back.images.lights[k].intensity, cap.images.lights[k].intensity);
    const auto a = cap.images.images[k].data();
    const auto b = back.images.images[k].data();
    const std::size_t px = cap.images.mask.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double inten = cap.images.lights[k].intensity[static_cast<int>(i / px)];
      const double raw = std::min(a[i] * inten, 1.0);
      EXPECT_LE(std::abs(b[i] * inten - raw), 0.5 / 65535.0 + 1e-12);
    }
  }
  ASSERT_TRUE(back.ground_truth.has_value());
  EXPECT_LT(evaluate(*back.ground_truth, cap.ground_truth).mae_deg, 0.01);
}

TEST(CaptureIo, SubsetSelectsImagesAndLightsJointly) {
  TempDir dir("subset");
  // 96 one-pixel-wide images keep the test fast
  ImageSet set;
  set.name = "wide";
  set.mask = Mask::full(2, 3);
  const auto lights = sample_lights(96, 3);
  for (std::size_t k = 0; k < 96; ++k) {
    set.images.push_back(Tensor::full({3, 2, 3}, static_cast<double>(k) / 100.0));
    set.lights.push_back(lights[k]);
  }
  save_capture(dir.path(), set);
  const auto picked = load_capture(dir.path(), parse_index_list("20-95"));
  ASSERT_EQ(picked.images.count(), 76u);
  for (std::size_t i = 0; i < 76; ++i) {
    EXPECT_EQ(picked.images.lights[i].direction, lights[20 + i].direction);
    EXPECT_NEAR(picked.images.images[i].data()[0], static_cast<double>(20 + i) / 100.0, 1e-5);
  }
  EXPECT_THROW(load_capture(dir.path(), std::vector<std::size_t>{96}), DataError);
}

TEST(CaptureIo, LightCountMismatchIsDataError) {
  TempDir dir("mismatch");
  ImageSet set;
  set.mask = Mask::full(2, 2);
  const auto lights = sample_lights(96, 1);
  for (std::size_t k = 0; k < 96; ++k) {
    set.images.push_back(Tensor::full({3, 2, 2}, 0.5));
    set.lights.push_back(lights[k]);
  }
  save_capture(dir.path(), set);
  std::ifstream in(dir.path() / "light_directions.txt");
  std::string line, kept;
  for (int i = 0; i < 95 && std::getline(in, line); ++i) kept += line + "\n";
  in.close();
  write_file(dir.path() / "light_directions.txt", kept);
  try {
    load_capture(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("95 light rows for 96 images"), std::string::npos) << e.what();
  }
}

TEST(CaptureIo, MissingFilesAreDescriptive) {
  TempDir dir("missing");
  auto cap = small_capture(3);
  save_capture(dir.path(), cap.images);
  fs::remove(dir.path() / "light_directions.txt");
  try {
    load_capture(dir.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("light_directions.txt"), std::string::npos);
  }
  save_capture(dir.path(), cap.images);
  write_file(dir.path() / "002.png", "not a png");
  try {
    load_capture(dir.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("002.png"), std::string::npos);
  }
}

TEST(CaptureIo, CommentsAndDefaultIntensity) {
  TempDir dir("comments");
  auto cap = small_capture(3);
  save_capture(dir.path(), cap.images);
  fs::remove(dir.path() / "light_intensities.txt");
  std::ifstream in(dir.path() / "light_directions.txt");
  std::string text = "# header comment\n\n", line;
  while (std::getline(in, line)) text += line + "   # trailing\n";
  in.close();
  write_file(dir.path() / "light_directions.txt", text);
  const auto back = load_capture(dir.path());
  ASSERT_EQ(back.images.count(), 3u);
  EXPECT_EQ(back.images.lights[1].direction, cap.images.lights[1].direction);
  EXPECT_EQ(back.images.lights[1].intensity, Eigen::Vector3d::Ones());
  EXPECT_FALSE(back.ground_truth.has_value());
}

TEST(CaptureIo, EmptyMaskWritesAndWarns) {
  TempDir dir("empty");
  ImageSet set;
  set.mask = Mask{3, 3, std::vector<unsigned char>(9, 0)};
  set.images.push_back(Tensor::zeros({3, 3, 3}));
  set.lights.push_back(sample_lights(1, 0)[0]);
  ASSERT_NO_THROW(save_capture(dir.path(), set));
  const auto back = load_capture(dir.path());
  EXPECT_EQ(back.images.count(), 1u);
  ASSERT_EQ(back.warnings.size(), 1u);
  EXPECT_NE(back.warnings[0].find("empty"), std::string::npos);
}

TEST(CaptureIo, UnwritablePathNamesThePath) {
  TempDir dir("unwritable");
  write_file(dir.path() / "file", "x");
  auto cap = small_capture(3);
  try {
    save_capture(dir.path() / "file" / "sub", cap.images);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("file"), std::string::npos);
  }
}

TEST(NormalPng, EncodingConvention) {
  Mask m{1, 2, {1, 0}};
  NormalMap map = NormalMap::zeros(m);
  map.set(0, {0, 0, 1});
  const PngImage img = encode_normal_png(map);
  EXPECT_EQ(img.sample(0, 0, 0), 32768);
  EXPECT_EQ(img.sample(0, 0, 1), 32768);
  EXPECT_EQ(img.sample(0, 0, 2), 65535);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(img.sample(0, 1, c), 0);
}

TEST(NormalPng, RoundTripBelowHundredthDegree) {
  const std::size_t n = 4096;
  Mask m = Mask::full(64, 64);
  NormalMap map = NormalMap::zeros(m);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (std::size_t p = 0; p < n; ++p) {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    map.set(p, v.normalized());
  }
  TempDir dir("normals");
  write_png(dir.path() / "n.png", encode_normal_png(map));
  const NormalMap back = decode_normal_png(read_png(dir.path() / "n.png"), &m);
  const Tensor err = angular_error_map(back, map);
  double worst = 0.0;
  for (double e : err.data()) worst = std::max(worst, e);
  EXPECT_LT(worst, 0.01);
  const NormalMap inferred = decode_normal_png(encode_normal_png(map));
  EXPECT_EQ(inferred.mask.count(), n);
}

TEST(Png, EightAndSixteenBitRoundTrip) {
  TempDir dir("png");
  for (int depth : {8, 16}) {
    PngImage img;
    img.width = 5;
    img.height = 3;
    img.channels = depth == 8 ? 1 : 3;
    img.bit_depth = depth;
    for (std::size_t i = 0; i < 15u * static_cast<std::size_t>(img.channels); ++i) {
      img.samples.push_back(static_cast<std::uint16_t>((i * 2719) % (img.max_value() + 1u)));
    }
    const fs::path p = dir.path() / ("img" + std::to_string(depth) + ".png");
    write_png(p, img);
    const PngImage back = read_png(p);
    EXPECT_EQ(back.bit_depth, depth);
    EXPECT_EQ(back.channels, img.channels);
    EXPECT_EQ(back.samples, img.samples);
  }
  EXPECT_THROW(read_png(dir.path() / "absent.png"), DataError);
}

TEST(IndexList, Parsing) {
  EXPECT_EQ(parse_index_list("0,2,5-7"), (std::vector<std::size_t>{0, 2, 5, 6, 7}));
  EXPECT_EQ(parse_index_list("20-95").size(), 76u);
  EXPECT_THROW(parse_index_list("3-1"), ConfigError);
  EXPECT_THROW(parse_index_list("a"), ConfigError);
  EXPECT_THROW(parse_index_list(""), ConfigError);
}

TEST(CaptureIo, ListCaptures) {
  TempDir dir("list");
  auto cap = small_capture(3);
  save_capture(dir.path() / "b", cap.images);
  save_capture(dir.path() / "a", cap.images);
  fs::create_directories(dir.path() / "not_a_capture");
  const auto found = list_captures(dir.path());
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].filename(), "a");
  EXPECT_EQ(list_captures(dir.path() / "a").size(), 1u);
}

}  // namespace
}  // namespace msfps
